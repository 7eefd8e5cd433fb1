"""Reconstruction of retweet-exposure events from a log, and the estimators.

Everything here works backwards from an event log plus the initial graph; the
simulator is never consulted.  The pipeline is:

  retweet deliveries (who received what, when)
    -> per-pair retweet groups (greedy windows of `delta` seconds)
    -> follow detections (groups whose listener followed within the window)
    -> probability estimates and latency distributions.

Group sizes are follow-truncated, exactly like a live measurement would record
them: once the listener follows the speaker, later deliveries are no longer
exposure events.  The by-size probability estimator therefore uses at-risk
denominators (a product-limit estimate of the follow probability after at most
n received retweets); naive per-size fractions would be biased upward by the
truncation.
"""

from __future__ import annotations

import math
from bisect import bisect_right, insort
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from . import events as ev
from .errors import (
    DataError,
    EmptyInput,
    InconsistentLog,
    NoQualifyingRetweets,
    NoQualifyingTweets,
)
from .graph import TemporalDigraph


@dataclass(frozen=True, slots=True)
class TrEvent:
    """One retweet delivery to an eligible listener.

    Eligible means: the listener followed the repeater at delivery time, did
    not follow the speaker, and is neither of them.  i_delta says whether the
    listener followed the speaker within `delta` of this delivery.  The origin
    tweet's id/time and the speaker->listener edge state ride along for the
    grouping and feature stages.
    """

    speaker: int
    repeater: int
    listener: int
    t_r: float
    i_delta: bool
    origin_t: float
    msg: int
    s_follows_l: bool


@dataclass(frozen=True, slots=True)
class RetweetGroup:
    """Deliveries of one speaker to one listener inside one window."""

    speaker: int
    listener: int
    t_r: float                      # first delivery in the window
    n: int                          # deliveries counted (truncated at a follow)
    i_delta: bool
    reciprocal: bool                # speaker followed listener at window open
    members: tuple[TrEvent, ...]
    follow_t: float | None          # when i_delta: the follow instant


@dataclass(frozen=True, slots=True)
class TrfDetection:
    speaker: int
    repeater: int
    listener: int
    t_s: float
    t_r: float
    t_l: float
    latency: float
    reciprocal: bool


# -- replaying a log against the initial graph ------------------------------------

def follow_times_from_log(log: Sequence[ev.Event]) -> dict[tuple[int, int], float]:
    """(follower, followee) -> time of the follow event (first occurrence)."""
    ft: dict[tuple[int, int], float] = {}
    for e in log:
        if e.kind == ev.FOLLOW:
            ft.setdefault((e.follower, e.followee), e.t)
    return ft


def extract_tr_events(
    log: Sequence[ev.Event],
    initial_graph: TemporalDigraph,
    delta: float,
) -> list[TrEvent]:
    """All retweet deliveries to eligible listeners, in log order.

    Listeners of one retweet are enumerated in ascending id.  Raises
    InconsistentLog when a follow event duplicates an existing edge.
    """
    ev.check_sorted(log)
    # edge state: (follower, followee) -> created_at; initial edges enter when
    # their creation time passes (synthetic initial graphs sit at t = 0)
    initial = sorted(
        ((t, a, b) for a, b, t in initial_graph.edges()),
        key=lambda x: x[0],
    )
    edges: dict[tuple[int, int], float] = {}
    followers: dict[int, list[int]] = defaultdict(list)   # followee -> sorted followers
    ptr = 0

    def apply_edge(a: int, b: int, t: float) -> None:
        if (a, b) in edges:
            raise InconsistentLog(f"follow {a}->{b} at t={t} but the edge already exists")
        edges[(a, b)] = t
        insort(followers[b], a)

    def catch_up(t: float) -> None:
        nonlocal ptr
        while ptr < len(initial) and initial[ptr][0] <= t:
            t0, a0, b0 = initial[ptr]
            ptr += 1
            apply_edge(a0, b0, t0)

    follow_time = follow_times_from_log(log)
    out: list[TrEvent] = []
    for e in log:
        if e.kind == ev.FOLLOW:
            catch_up(e.t)
            apply_edge(e.follower, e.followee, e.t)
        elif e.kind == ev.RETWEET:
            catch_up(e.t)
            s, r = e.origin_author, e.repeater
            for li in followers.get(r, ()):
                if li == s or li == r or (li, s) in edges:
                    continue
                ft = follow_time.get((li, s))
                out.append(TrEvent(
                    speaker=s, repeater=r, listener=li, t_r=e.t,
                    i_delta=ft is not None and ft <= e.t + delta,
                    origin_t=e.origin_t, msg=e.msg,
                    s_follows_l=(s, li) in edges,
                ))
    return out


def group_retweets(
    tr_events: Sequence[TrEvent],
    follow_times: Mapping[tuple[int, int], float],
    delta: float,
) -> list[RetweetGroup]:
    """Greedy per-pair windows over the deliveries.

    A group opens at the first unassigned delivery and absorbs deliveries in
    [t_open, t_open + delta).  A follow at t in [t_open, t_open + delta] marks
    the group converted and truncates membership to deliveries at or before t
    (the delivery that coincides with the follow is the one that caused it).
    """
    per_pair: dict[tuple[int, int], list[TrEvent]] = defaultdict(list)
    for tr in tr_events:
        per_pair[(tr.speaker, tr.listener)].append(tr)

    out: list[RetweetGroup] = []
    for (s, li), deliveries in per_pair.items():
        ft = follow_times.get((li, s), math.inf)
        i = 0
        while i < len(deliveries):
            t_open = deliveries[i].t_r
            j = i + 1
            while j < len(deliveries) and deliveries[j].t_r < t_open + delta:
                j += 1
            window = deliveries[i:j]
            if t_open <= ft <= t_open + delta:
                members = tuple(m for m in window if m.t_r <= ft)
                out.append(RetweetGroup(
                    speaker=s, listener=li, t_r=t_open, n=len(members),
                    i_delta=True, reciprocal=members[0].s_follows_l,
                    members=members, follow_t=ft,
                ))
                break  # the pair is joined; nothing after the follow qualifies
            out.append(RetweetGroup(
                speaker=s, listener=li, t_r=t_open, n=len(window),
                i_delta=False, reciprocal=window[0].s_follows_l,
                members=tuple(window), follow_t=None,
            ))
            i = j
    out.sort(key=lambda g: (g.t_r, g.speaker, g.listener))
    return out


def detect_trf(
    log: Sequence[ev.Event],
    initial_graph: TemporalDigraph,
    delta: float,
) -> list[TrfDetection]:
    """Follows explained by a retweet delivery within `delta` beforehand.

    Each detection is attributed to the most recent qualifying delivery at or
    before the follow; its origin tweet supplies t_s.
    """
    trs = extract_tr_events(log, initial_graph, delta)
    follow_time = follow_times_from_log(log)
    groups = group_retweets(trs, follow_time, delta)
    out = []
    for g in groups:
        if not g.i_delta:
            continue
        trigger = g.members[-1]
        out.append(TrfDetection(
            speaker=g.speaker, repeater=trigger.repeater, listener=g.listener,
            t_s=trigger.origin_t, t_r=trigger.t_r, t_l=g.follow_t,
            latency=g.follow_t - trigger.t_r, reciprocal=g.reciprocal,
        ))
    out.sort(key=lambda d: (d.t_l, d.speaker, d.listener))
    return out


def detect_from_snapshots(
    snapshots: Sequence[ev.Snapshot],
    retweet_deliveries: Sequence[TrEvent],
    delta: float,
) -> list[TrfDetection]:
    """Detections from periodic follower polls instead of exact follow times.

    A new face in a speaker's follower list counts when it received a
    qualifying delivery within `delta` before the poll; the follow time is
    recorded as the poll instant (what a measurement actually sees).  New
    followers with no delivery in the window are classified exogenous and
    skipped.
    """
    per_pair: dict[tuple[int, int], list[TrEvent]] = defaultdict(list)
    for tr in retweet_deliveries:
        per_pair[(tr.speaker, tr.listener)].append(tr)

    by_user: dict[int, list[ev.Snapshot]] = defaultdict(list)
    for s in snapshots:
        by_user[s.user].append(s)

    out = []
    for user in sorted(by_user):
        polls = sorted(by_user[user], key=lambda s: s.t)
        prev = set(polls[0].followers)
        for snap in polls[1:]:
            cur = set(snap.followers)
            for li in sorted(cur - prev):
                candidates = [
                    tr for tr in per_pair.get((user, li), ())
                    if tr.t_r <= snap.t and snap.t - tr.t_r <= delta
                ]
                if not candidates:
                    continue
                trigger = max(candidates, key=lambda tr: tr.t_r)
                out.append(TrfDetection(
                    speaker=user, repeater=trigger.repeater, listener=li,
                    t_s=trigger.origin_t, t_r=trigger.t_r, t_l=snap.t,
                    latency=snap.t - trigger.t_r, reciprocal=trigger.s_follows_l,
                ))
            prev = cur
    out.sort(key=lambda d: (d.t_l, d.speaker, d.listener))
    return out


# -- probability estimators ----------------------------------------------------------

@dataclass(frozen=True, slots=True)
class EstimateRow:
    """One line of the follow-probability table.

    For by-size rows, `groups` is the number of groups at risk at the n-th
    delivery (recorded size >= n), `followers` the number converted exactly at
    their n-th delivery, and `probability` the product-limit estimate of the
    follow probability after at most n received retweets.
    """

    stratum: str
    n: int
    groups: int
    followers: int
    probability: float
    se: float


def stratified_rates(
    conversions: Mapping[int, int],
    censored: Mapping[int, int],
    stratum: str,
) -> list[EstimateRow]:
    """Product-limit table from (size -> converted) and (size -> unconverted)."""
    if not conversions and not censored:
        raise EmptyInput("no groups in stratum")
    n_max = max(list(conversions) + list(censored))
    closures = [conversions.get(n, 0) + censored.get(n, 0) for n in range(n_max + 1)]
    at_risk_after = 0  # groups with recorded size > n
    at_risk = [0] * (n_max + 1)
    for n in range(n_max, 0, -1):
        at_risk[n] = at_risk_after + closures[n]
        at_risk_after = at_risk[n]
    rows = []
    surv = 1.0
    green = 0.0
    for n in range(1, n_max + 1):
        r = at_risk[n]
        c = conversions.get(n, 0)
        if r <= 0:
            break
        surv *= 1.0 - c / r
        if r > c:
            green += c / (r * (r - c))
        prob = 1.0 - surv
        se = surv * math.sqrt(green)
        rows.append(EstimateRow(stratum=stratum, n=n, groups=r, followers=c,
                                probability=prob, se=se))
    return rows


def _filter_groups(groups: Sequence[RetweetGroup], which: str) -> list[RetweetGroup]:
    if which == "all":
        picked = list(groups)
    elif which == "reciprocal":
        picked = [g for g in groups if g.reciprocal]
    elif which == "nonreciprocal":
        picked = [g for g in groups if not g.reciprocal]
    else:
        raise ValueError(f"unknown filter {which!r}")
    return picked


def estimate_p_trf(
    groups: Sequence[RetweetGroup],
    which: str = "all",
    by_n: bool = False,
) -> list[EstimateRow]:
    """Fraction of retweet groups that ended in a follow.

    With by_n=False: a single row with the plain fraction.  With by_n=True:
    the product-limit table of follow probability after at most n retweets
    (see stratified_rates).
    """
    picked = _filter_groups(groups, which)
    if not picked:
        raise EmptyInput(f"no groups after filter {which!r}")
    if not by_n:
        total = len(picked)
        follows = sum(1 for g in picked if g.i_delta)
        prob = follows / total
        se = math.sqrt(prob * (1.0 - prob) / total)
        return [EstimateRow(stratum=which, n=0, groups=total, followers=follows,
                            probability=prob, se=se)]
    conv: dict[int, int] = defaultdict(int)
    cens: dict[int, int] = defaultdict(int)
    for g in picked:
        (conv if g.i_delta else cens)[g.n] += 1
    return stratified_rates(conv, cens, which)


class _EdgeClock:
    """Edge-existence queries with the log's causal tie order.

    Initial-graph edges are the state at the start of the log and always
    exist.  A follow event takes effect immediately *after* its instant: a
    follow at exactly a retweet's timestamp was caused by that retweet, so it
    must not remove its listener from the pool being measured at that instant.
    """

    def __init__(self, graph: TemporalDigraph, log: Sequence[ev.Event]) -> None:
        self.initial_in: dict[int, set[int]] = defaultdict(set)
        self.time: dict[tuple[int, int], float] = {}
        for a, b, t in graph.edges():
            self.initial_in[b].add(a)
            self.time[(a, b)] = -math.inf
        self.log_in: dict[int, list[tuple[float, int]]] = defaultdict(list)
        for e in log:
            if e.kind == ev.FOLLOW:
                key = (e.follower, e.followee)
                if key not in self.time:
                    self.time[key] = e.t
                    self.log_in[e.followee].append((e.t, e.follower))

    def followers_before(self, user: int, t: float) -> set[int]:
        out = set(self.initial_in.get(user, ()))
        for t_f, follower in self.log_in.get(user, ()):
            if t_f < t:
                out.add(follower)
        return out

    def second_hop_before(self, user: int, t: float) -> set[int]:
        """Followers of followers of `user` that do not follow `user`, just
        before instant t."""
        direct = self.followers_before(user, t)
        pool: set[int] = set()
        for y in direct:
            pool |= self.followers_before(y, t)
        pool -= direct
        pool.discard(user)
        return pool

    def created_by(self, a: int, b: int, t: float) -> bool:
        return self.time.get((a, b), math.inf) <= t


def estimate_p_exo(
    log: Sequence[ev.Event],
    graph: TemporalDigraph,
    delta: float,
) -> tuple[float, int]:
    """Chance that a second-hop follower starts following the speaker within
    `delta` of a tweet that was never retweeted in that window.

    Averaged per qualifying tweet over its candidate pool; tweets with an empty
    pool, or whose window runs past the end of the log, are skipped.  Returns
    (probability, number of qualifying tweets).
    """
    ev.check_sorted(log)
    clock = _EdgeClock(graph, log)
    t_end = log[-1].t if log else 0.0
    retweets_of: dict[int, list[float]] = defaultdict(list)
    for e in log:
        if e.kind == ev.RETWEET:
            retweets_of[e.msg].append(e.t)
    ratios = []
    for e in log:
        if e.kind != ev.TWEET or e.t + delta > t_end:
            continue
        if any(e.t <= tr <= e.t + delta for tr in retweets_of.get(e.msg, ())):
            continue
        pool = clock.second_hop_before(e.author, e.t)
        if not pool:
            continue
        gained = sum(1 for li in pool if clock.created_by(li, e.author, e.t + delta))
        ratios.append(gained / len(pool))
    if not ratios:
        raise NoQualifyingTweets(
            "no tweet with an un-retweeted, fully observed window and a nonempty pool"
        )
    return sum(ratios) / len(ratios), len(ratios)


def estimate_p_endo(
    log: Sequence[ev.Event],
    graph: TemporalDigraph,
    delta: float,
) -> tuple[float, int]:
    """Chance that a second-hop follower exposed through a retweet follows the
    speaker within `delta` of the retweet.

    The candidate pool of a retweet is the speaker's second-hop follower set
    restricted to followers of the repeater.  Returns (probability, number of
    qualifying retweets).
    """
    ev.check_sorted(log)
    clock = _EdgeClock(graph, log)
    t_end = log[-1].t if log else 0.0
    ratios = []
    for e in log:
        if e.kind != ev.RETWEET or e.t + delta > t_end:
            continue
        s = e.origin_author
        phi = clock.second_hop_before(s, e.t)
        if not phi:
            continue
        pool = phi & clock.followers_before(e.repeater, e.t)
        if not pool:
            continue
        gained = sum(1 for li in pool if clock.created_by(li, s, e.t + delta))
        ratios.append(gained / len(pool))
    if not ratios:
        raise NoQualifyingRetweets("no retweet with a nonempty candidate pool")
    return sum(ratios) / len(ratios), len(ratios)


# -- latency distributions --------------------------------------------------------------

DEFAULT_BIN_EDGES = (
    60.0, 300.0, 600.0, 1800.0, 3600.0, 7200.0, 21600.0, 43200.0,
    86400.0, 172800.0, 345600.0,
)


@dataclass(frozen=True, slots=True)
class EmpiricalCdf:
    edges: tuple[float, ...]
    values: tuple[float, ...]
    count: int

    def at(self, x: float) -> float:
        """Fraction of observations <= x (exact, not interpolated)."""
        best = 0.0
        for e, v in zip(self.edges, self.values):
            if e <= x:
                best = v
        return best


def _cdf(samples: Sequence[float], edges: Sequence[float]) -> EmpiricalCdf:
    xs = sorted(samples)
    values = [bisect_right(xs, edge) / len(xs) for edge in edges]
    return EmpiricalCdf(edges=tuple(edges), values=tuple(values), count=len(xs))


def latency_histograms(
    detections: Sequence[TrfDetection],
    retweet_events: Sequence[ev.Event],
    bin_edges: Sequence[float] = DEFAULT_BIN_EDGES,
) -> tuple[EmpiricalCdf, EmpiricalCdf]:
    """(follow-latency CDF, retweet-latency CDF).

    Retweet latency is retweet time minus origin tweet time; follow latency is
    follow time minus the attributed delivery time.
    """
    if not detections or not retweet_events:
        raise EmptyInput("latency histograms need nonempty detections and retweets")
    trf_lat = [d.latency for d in detections]
    rt_lat = []
    for e in retweet_events:
        if e.kind != ev.RETWEET:
            raise ValueError(f"expected retweet events, got {e.kind!r}")
        rt_lat.append(e.t - e.origin_t)
    return _cdf(trf_lat, bin_edges), _cdf(rt_lat, bin_edges)


# -- feature assembly for the factor regression -----------------------------------------

GROUP_FEATURE_NAMES = ("reciprocal", "n_retweets", "n_repeaters", "n_tweets")


def group_feature_table(groups: Sequence[RetweetGroup]) -> tuple[list[list[float]], list[int]]:
    """Per-group regression rows: structural and informational factors.

    Columns follow GROUP_FEATURE_NAMES; the label is whether the group ended
    in a follow.
    """
    xs, ys = [], []
    for g in groups:
        xs.append([
            float(g.reciprocal),
            float(g.n),
            float(len({m.repeater for m in g.members})),
            float(len({m.msg for m in g.members})),
        ])
        ys.append(int(g.i_delta))
    return xs, ys


# -- CSV surfaces ------------------------------------------------------------------------

DETECTIONS_CSV_HEADER = "speaker,repeater,listener,t_s,t_r,t_l,latency,reciprocal"
ESTIMATE_CSV_HEADER = "stratum,n,groups,followers,probability"


def write_detections_csv(detections: Sequence[TrfDetection], path: str) -> None:
    with open(path, "w") as fp:
        fp.write(DETECTIONS_CSV_HEADER + "\n")
        for d in detections:
            fp.write(f"{d.speaker},{d.repeater},{d.listener},{d.t_s!r},{d.t_r!r},"
                     f"{d.t_l!r},{d.latency!r},{int(d.reciprocal)}\n")


def write_estimate_csv(rows: Iterable[EstimateRow], path: str) -> None:
    with open(path, "w") as fp:
        fp.write(ESTIMATE_CSV_HEADER + "\n")
        for r in rows:
            fp.write(f"{r.stratum},{r.n},{r.groups},{r.followers},{r.probability!r}\n")


def read_estimate_csv(path: str) -> list[EstimateRow]:
    rows = []
    with open(path) as fp:
        header = fp.readline().strip()
        if header != ESTIMATE_CSV_HEADER:
            raise DataError(f"{path}: expected header '{ESTIMATE_CSV_HEADER}'")
        for lineno, line in enumerate(fp, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 fields")
            try:
                rows.append(EstimateRow(
                    stratum=parts[0], n=int(parts[1]), groups=int(parts[2]),
                    followers=int(parts[3]), probability=float(parts[4]), se=0.0,
                ))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return rows
