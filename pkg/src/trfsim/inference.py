"""Probability models behind retweet-driven follows.

Two pieces live here:

* the two-parameter group model — a received retweet group is read with
  probability p, and each read retweet independently converts the reader into
  a follower with probability q, so the follow probability after n received
  retweets is p * (1 - (1-q)**n) — with maximum-likelihood fitting of (p, q)
  from per-stratum counts, and

* binary logistic regression fitted by iteratively reweighted least squares,
  with Wald standard errors and odds-ratio tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from .errors import (
    AllZeroSuccesses,
    NotConverged,
    RankDeficient,
    Separable,
    Underdetermined,
)


@dataclass(frozen=True, slots=True)
class TrfModelParams:
    """Group-observation probability p and per-retweet follow probability q."""

    p: float
    q: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.q <= 1.0):
            raise ValueError(f"p and q must lie in [0, 1], got p={self.p}, q={self.q}")

    @property
    def pq(self) -> float:
        """Probability that a single received retweet causes a follow."""
        return self.p * self.q


def trf_probability(params: TrfModelParams, n: int) -> float:
    """Follow probability after receiving at most n retweets of one speaker."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    return params.p * (1.0 - (1.0 - params.q) ** n)


# -- (p, q) maximum likelihood --------------------------------------------------

@dataclass(frozen=True, slots=True)
class FitRow:
    """One stratum: groups that received n retweets, and how many converted."""

    n: int
    groups: int
    follows: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"stratum n must be >= 1, got {self.n}")
        if not (0 <= self.follows <= self.groups):
            raise ValueError(f"need 0 <= follows <= groups, got {self}")


@dataclass(frozen=True, slots=True)
class PqFit:
    params: TrfModelParams
    nll: float
    converged: bool


def _expit(z: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def _pq_nll_binomial(theta, n, groups, follows):
    """Per-row binomial likelihood: follows_i ~ Bin(groups_i, p(1-(1-q)^n_i))."""
    p, q = _expit(theta[0]), _expit(theta[1])
    one_minus_qn = (1.0 - q) ** n
    pi = np.clip(p * (1.0 - one_minus_qn), 1e-300, 1.0 - 1e-12)
    nll = -(follows * np.log(pi) + (groups - follows) * np.log1p(-pi)).sum()
    # gradient via chain rule through the logit transform
    dpi_dp = 1.0 - one_minus_qn
    dpi_dq = p * n * (1.0 - q) ** (n - 1)
    common = -(follows / pi - (groups - follows) / (1.0 - pi))
    gp = (common * dpi_dp).sum() * p * (1.0 - p)
    gq = (common * dpi_dq).sum() * q * (1.0 - q)
    return nll, np.array([gp, gq])


def _pq_nll_truncated(theta, n, at_risk, conv, censored):
    """Per-group likelihood for follow-truncated groups.

    A converted group stopped at its n-th retweet: probability
    p * q * (1-q)**(n-1).  A group censored at n (window expired or the log
    ended) never converted within its first n retweets: 1 - p(1-(1-q)**n).
    """
    p, q = _expit(theta[0]), _expit(theta[1])
    one_minus_qn = (1.0 - q) ** n
    surv = np.clip(1.0 - p * (1.0 - one_minus_qn), 1e-300, 1.0)
    hazard = np.clip(p * q * (1.0 - q) ** (n - 1), 1e-300, 1.0)
    nll = -(conv * np.log(hazard) + censored * np.log(surv)).sum()
    dsurv_dp = -(1.0 - one_minus_qn)
    dsurv_dq = -p * n * (1.0 - q) ** (n - 1)
    gp = -(conv / p + censored * dsurv_dp / surv).sum() * p * (1.0 - p)
    gq = -(conv * (1.0 / q - (n - 1) / (1.0 - q)) + censored * dsurv_dq / surv).sum() * q * (1.0 - q)
    return nll, np.array([gp, gq])


def fit_pq(data: Sequence[FitRow], truncated: bool = False) -> PqFit:
    """Maximum-likelihood (p, q) from per-stratum counts.

    With truncated=False each row is an independent binomial experiment with
    success probability p(1-(1-q)**n) — the natural model when group sizes are
    recorded in full.  With truncated=True the rows come from follow-truncated
    grouping, where `groups` must be the number of groups AT RISK at the n-th
    retweet (i.e. groups whose recorded size is >= n) and `follows` the number
    converted exactly at their n-th retweet; the likelihood then accounts for
    the censoring that truncation introduces.
    """
    rows = [r if isinstance(r, FitRow) else FitRow(*r) for r in data]
    rows = sorted((r for r in rows if r.groups > 0), key=lambda r: r.n)
    if len({r.n for r in rows}) < 2:
        raise Underdetermined(
            "need at least two strata with groups > 0: p and q are not separable from p*q"
        )
    n = np.array([r.n for r in rows], dtype=float)
    groups = np.array([r.groups for r in rows], dtype=float)
    follows = np.array([r.follows for r in rows], dtype=float)
    if follows.sum() == 0:
        raise AllZeroSuccesses("no stratum has any follows; p is pinned at 0")

    if truncated:
        if np.any(np.diff(n) != 1) or n[0] != 1:
            raise ValueError("truncated mode expects contiguous strata n = 1, 2, ...")
        next_at_risk = np.append(groups[1:], 0.0)
        censored = groups - follows - next_at_risk
        if np.any(censored < -1e-9):
            raise ValueError("at-risk counts must be non-increasing by at least the follows")
        censored = np.maximum(censored, 0.0)
        fun = lambda th: _pq_nll_truncated(th, n, groups, follows, censored)
        crude = follows.sum() / groups[0]
    else:
        fun = lambda th: _pq_nll_binomial(th, n, groups, follows)
        crude = (follows / groups).max()

    # moment-flavored starts plus fixed fallbacks; keep the best optimum
    crude = min(max(crude, 1e-9), 1.0 - 1e-9)
    starts = [
        (crude * 2.0, 0.5),
        (crude * 10.0, 0.1),
        (min(crude * 100.0, 0.5), 0.02),
        (0.5, 0.5),
    ]
    best = None
    for p0, q0 in starts:
        p0 = min(max(p0, 1e-8), 1 - 1e-8)
        theta0 = np.array([math.log(p0 / (1 - p0)), math.log(q0 / (1 - q0))])
        res = optimize.minimize(
            fun, theta0, jac=True, method="L-BFGS-B",
            bounds=[(-23.0, 23.0)] * 2,
            options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-12},
        )
        if best is None or res.fun < best.fun:
            best = res
    p_hat = float(_expit(best.x[0]))
    q_hat = float(_expit(best.x[1]))
    return PqFit(params=TrfModelParams(p=p_hat, q=q_hat), nll=float(best.fun),
                 converged=bool(best.success))


# -- logistic regression --------------------------------------------------------

_MAX_COEF = 30.0
_GRAD_TOL = 1e-8
_MAX_ITER = 100


@dataclass(frozen=True)
class LogisticModel:
    """Fitted coefficients (intercept first) with Wald standard errors."""

    coefficients: np.ndarray
    standard_errors: np.ndarray
    converged: bool
    nll: float
    n_obs: int
    feature_names: tuple[str, ...]

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        eta = self.coefficients[0] + x @ self.coefficients[1:]
        return np.asarray(_expit(eta))


def logistic_fit(
    features: np.ndarray,
    labels: np.ndarray,
    feature_names: Sequence[str] | None = None,
) -> LogisticModel:
    """Fit ln(P/(1-P)) = k0 + sum_i k_i x_i by IRLS.

    Iterates to gradient norm < 1e-8 (at most 100 steps).  Standard errors come
    from the inverse observed information at the optimum.  Raises Separable
    when a coefficient runs past +-30 (the hallmark of separable data) and
    RankDeficient for collinear or under-determined designs.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(labels, dtype=float).ravel()
    n_obs, n_feat = x.shape
    if y.shape[0] != n_obs:
        raise ValueError("features and labels disagree on the number of rows")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    if feature_names is None:
        feature_names = tuple(f"x{i + 1}" for i in range(n_feat))
    else:
        feature_names = tuple(feature_names)
        if len(feature_names) != n_feat:
            raise ValueError("feature_names length must match the feature count")

    if n_obs < n_feat + 1:
        raise RankDeficient(f"{n_obs} rows cannot identify {n_feat + 1} coefficients")
    for j in range(n_feat):
        if np.ptp(x[:, j]) == 0:
            raise RankDeficient(f"feature {feature_names[j]!r} is constant")
    design = np.column_stack([np.ones(n_obs), x])
    if np.linalg.matrix_rank(design) < n_feat + 1:
        raise RankDeficient("design matrix is rank deficient")

    beta = np.zeros(n_feat + 1)
    converged = False
    for _ in range(_MAX_ITER):
        eta = design @ beta
        mu = _expit(eta)
        grad = design.T @ (y - mu)
        if np.linalg.norm(grad) < _GRAD_TOL:
            converged = True
            break
        w = np.maximum(mu * (1.0 - mu), 1e-12)
        hess = design.T @ (design * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise RankDeficient(f"information matrix is singular: {exc}") from exc
        beta = beta + step
        if np.max(np.abs(beta)) > _MAX_COEF:
            raise Separable(
                "coefficients diverged past |30|; the classes are (quasi-)separable"
            )

    mu = _expit(design @ beta)
    w = np.maximum(mu * (1.0 - mu), 1e-12)
    info = design.T @ (design * w[:, None])
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient(f"information matrix is singular: {exc}") from exc
    se = np.sqrt(np.diag(cov))
    eps = 1e-300
    nll = -float(np.sum(y * np.log(mu + eps) + (1 - y) * np.log(1 - mu + eps)))
    return LogisticModel(
        coefficients=beta,
        standard_errors=se,
        converged=converged,
        nll=nll,
        n_obs=n_obs,
        feature_names=feature_names,
    )


@dataclass(frozen=True, slots=True)
class OddsRatioRow:
    factor: str
    odds_ratio: float
    ci_low: float
    ci_high: float
    p_value: float
    degenerate: bool  # standard error was exactly 0: the CI collapses


def odds_ratios(model: LogisticModel, confidence: float = 0.95) -> list[OddsRatioRow]:
    """exp(coefficient) for each factor with Wald confidence intervals.

    The intercept is reported first under the name 'intercept'.
    """
    if not model.converged:
        raise NotConverged("refusing to report odds ratios for an unconverged fit")
    if not (0.0 < confidence < 1.0):
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    names = ("intercept",) + model.feature_names
    rows = []
    for name, kappa, se in zip(names, model.coefficients, model.standard_errors):
        if se == 0.0:
            lo = hi = math.exp(kappa)
            p_value = 0.0 if kappa != 0 else 1.0
            degenerate = True
        else:
            lo = math.exp(kappa - z * se)
            hi = math.exp(kappa + z * se)
            p_value = float(2.0 * stats.norm.sf(abs(kappa) / se))
            degenerate = False
        rows.append(OddsRatioRow(
            factor=name, odds_ratio=math.exp(kappa),
            ci_low=lo, ci_high=hi, p_value=p_value, degenerate=degenerate,
        ))
    return rows
