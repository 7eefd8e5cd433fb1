"""Figure rendering for experiment outputs.

The CSVs written by the CLI stay the contract; this module draws the standard
figures from them — follow probability vs. received-retweet count (empirical
solid, fitted model dashed), latency CDFs, and the largest-SCC fraction curve —
and saves them as PNG files next to the data.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import DataError  # noqa: E402
from .inference import TrfModelParams, trf_probability  # noqa: E402

_STRATUM_STYLE = {
    "all": dict(color="C0", label="all"),
    "reciprocal": dict(color="C1", label="mutual pairs"),
    "nonreciprocal": dict(color="C2", label="one-way pairs"),
}


def _read_csv(path: str) -> list[dict[str, str]]:
    with open(path) as fp:
        return list(csv.DictReader(fp))


def plot_ptrf_curve(estimate_csv: str, out_png: str, fit_csv: str | None = None) -> str:
    """Follow probability after at most n retweets, per reciprocity stratum."""
    rows = _read_csv(estimate_csv)
    fits: dict[str, TrfModelParams] = {}
    if fit_csv and os.path.exists(fit_csv):
        for r in _read_csv(fit_csv):
            p = float(r["p"])
            q = float(r["q"])
            fits[r["class"]] = TrfModelParams(p=p, q=q)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    plotted = False
    for stratum, style in _STRATUM_STYLE.items():
        pts = [(int(r["n"]), float(r["probability"]))
               for r in rows if r["stratum"] == stratum and int(r["n"]) > 0]
        if not pts:
            continue
        plotted = True
        ns, probs = zip(*sorted(pts))
        ax.plot(ns, probs, marker="o", ms=3, lw=1.2, **style)
        params = fits.get(stratum)
        if params is not None:
            model = [trf_probability(params, n) for n in ns]
            ax.plot(ns, model, ls="--", lw=1.2, color=style["color"],
                    label=f"{style['label']} (model)")
    if not plotted:
        raise DataError(f"{estimate_csv}: no by-size rows to plot")
    ax.set_xlabel("received retweets n")
    ax.set_ylabel("follow probability")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return out_png


def plot_latency_cdfs(latency_csv: str, out_png: str) -> str:
    rows = _read_csv(latency_csv)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for kind, color in (("retweet", "C0"), ("follow", "C3")):
        pts = [(float(r["edge_seconds"]), float(r["cdf"]))
               for r in rows if r["kind"] == kind]
        if pts:
            xs, ys = zip(*sorted(pts))
            ax.plot(xs, ys, marker="o", ms=3, color=color, label=f"{kind} latency")
    ax.set_xscale("log")
    ax.set_xlabel("latency (s)")
    ax.set_ylabel("fraction below")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return out_png


def plot_scc_curve(curve_csv: str, out_png: str) -> str:
    rows = _read_csv(curve_csv)
    if not rows:
        raise DataError(f"{curve_csv}: empty curve")
    sizes = [int(r["size"]) for r in rows]
    means = [float(r["mean_fraction"]) for r in rows]
    lo = [float(r["ci_low"]) for r in rows]
    hi = [float(r["ci_high"]) for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    yerr = ([m - l for m, l in zip(means, lo)], [h - m for m, h in zip(means, hi)])
    ax.errorbar(sizes, means, yerr=yerr, marker="o", ms=4, lw=1.2, capsize=3)
    ax.set_xscale("log")
    ax.set_xlabel("sample size (nodes)")
    ax.set_ylabel("fraction of nodes in largest SCC")
    ax.set_ylim(0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return out_png


def render_report(out_dir: str) -> list[str]:
    """Render every figure whose input CSV exists in out_dir."""
    made = []
    ptrf = os.path.join(out_dir, "ptrf.csv")
    if os.path.exists(ptrf):
        made.append(plot_ptrf_curve(
            ptrf, os.path.join(out_dir, "ptrf_curve.png"),
            fit_csv=os.path.join(out_dir, "fit.csv"),
        ))
    latency = os.path.join(out_dir, "latency.csv")
    if os.path.exists(latency):
        made.append(plot_latency_cdfs(latency, os.path.join(out_dir, "latency_cdf.png")))
    curve = os.path.join(out_dir, "scc_curve.csv")
    if os.path.exists(curve):
        made.append(plot_scc_curve(curve, os.path.join(out_dir, "scc_curve.png")))
    if not made:
        raise DataError(f"{out_dir}: nothing to report (no ptrf.csv, latency.csv or scc_curve.csv)")
    return made
