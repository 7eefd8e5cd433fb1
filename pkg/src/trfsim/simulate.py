"""Event-driven generator of co-evolving tweet/retweet/follow dynamics.

Mechanism per user pair (speaker S, listener L):

* every tweeter emits tweets as a Poisson process; each follower of the author
  independently retweets with a configured probability after a random latency;
* when a retweet of S's message reaches an eligible listener L (L follows the
  repeater, does not follow S, is neither S nor the repeater), L's open
  "retweet group" for S absorbs the delivery — a group opens at its first
  delivery and spans a window of `delta` seconds;
* at group opening a single Bernoulli(p) draw decides whether L reads this
  group at all (p depends on whether S already follows L); every delivered
  retweet of a read group then causes a follow with probability q at the
  delivery instant, which closes the group and rewires the graph;
* independently, users follow random two-hop followees at a configured
  exogenous Poisson rate.

The loop processes scheduled tweet/retweet/exogenous events through one heap;
retweet fan-out (the hot path) is vectorized over the repeater's followers, so
multi-million-delivery runs stay in the seconds range.  Identical seeds yield
byte-identical outputs.
"""

from __future__ import annotations

import heapq
import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import events as ev
from .errors import InvalidConfig
from .graph import TemporalDigraph, graph_from_arrays
from .inference import TrfModelParams
from .rng import substream

# Table-derived defaults for a 24-hour observation window: (p, p*q) of
# (24.0e-4, 10.2e-4) when the speaker already follows the listener and
# (0.7e-4, 0.16e-4) when she does not.
DEFAULT_RECIPROCAL = TrfModelParams(p=24.0e-4, q=10.2 / 24.0)
DEFAULT_NONRECIPROCAL = TrfModelParams(p=0.7e-4, q=0.16 / 0.7)


# -- retweet latency ------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class LatencyDist:
    """Retweet latency distribution: lognormal(median, sigma), exponential(mean)
    or fixed(value).  Latencies are strictly positive seconds."""

    kind: str
    a: float
    b: float = 0.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "lognormal":
            return rng.lognormal(mean=math.log(self.a), sigma=self.b, size=size)
        if self.kind == "exponential":
            return rng.exponential(scale=self.a, size=size) + 1e-9
        return np.full(size, self.a)

    def spec(self) -> str:
        if self.kind == "lognormal":
            return f"lognormal(median={self.a!r},sigma={self.b!r})"
        if self.kind == "exponential":
            return f"exponential(mean={self.a!r})"
        return f"fixed({self.a!r})"


# Default: lognormal with a 10-minute median and sigma such that >90% of
# latencies fall under one hour.
DEFAULT_LATENCY = LatencyDist("lognormal", 600.0, 1.25)

_LAT_RE = re.compile(r"^(lognormal|exponential|fixed)\((.*)\)$")


def parse_latency_dist(text: str) -> LatencyDist:
    m = _LAT_RE.match(text.strip())
    if not m:
        raise InvalidConfig(f"cannot parse latency distribution {text!r}")
    kind, body = m.group(1), m.group(2)
    kv: dict[str, float] = {}
    args: list[float] = []
    for part in filter(None, (p.strip() for p in body.split(","))):
        if "=" in part:
            k, v = part.split("=", 1)
            kv[k.strip()] = float(v)
        else:
            args.append(float(part))
    try:
        if kind == "lognormal":
            a = kv.pop("median") if "median" in kv else args.pop(0)
            b = kv.pop("sigma") if "sigma" in kv else args.pop(0)
            dist = LatencyDist("lognormal", a, b)
        elif kind == "exponential":
            a = kv.pop("mean") if "mean" in kv else args.pop(0)
            dist = LatencyDist("exponential", a)
        else:
            a = kv.pop("value") if "value" in kv else args.pop(0)
            dist = LatencyDist("fixed", a)
    except IndexError:
        raise InvalidConfig(f"missing parameter in latency distribution {text!r}") from None
    if kv or args:
        raise InvalidConfig(f"unexpected parameters in latency distribution {text!r}")
    if dist.a <= 0 or (dist.kind == "lognormal" and dist.b <= 0):
        raise InvalidConfig(f"latency parameters must be positive: {text!r}")
    return dist


# -- configuration ----------------------------------------------------------------

@dataclass
class SimConfig:
    initial_graph: TemporalDigraph
    duration: float
    delta: float = 86400.0
    tweet_rate: float = 1e-4
    retweet_prob: float = 0.1
    retweet_latency_dist: LatencyDist = DEFAULT_LATENCY
    params_reciprocal: TrfModelParams = DEFAULT_RECIPROCAL
    params_nonreciprocal: TrfModelParams = DEFAULT_NONRECIPROCAL
    exo_follow_rate: float = 0.0
    seed: int = 0
    poll_interval: float = 300.0
    multi_hop: bool = False
    # Users that tweet (None = everyone).  Listener-only populations keep large
    # parameter-recovery runs free of irrelevant events.
    tweeters: tuple[int, ...] | None = None

    def validate(self) -> None:
        if self.duration <= 0:
            raise InvalidConfig(f"duration must be > 0, got {self.duration}")
        if self.delta <= 0:
            raise InvalidConfig(f"delta must be > 0, got {self.delta}")
        if self.poll_interval <= 0:
            raise InvalidConfig(f"poll_interval must be > 0, got {self.poll_interval}")
        for name in ("tweet_rate", "retweet_prob", "exo_follow_rate"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be >= 0")
        if not (0.0 <= self.retweet_prob <= 1.0):
            raise InvalidConfig(f"retweet_prob must be in [0, 1], got {self.retweet_prob}")
        if not self.initial_graph.users():
            raise InvalidConfig("initial graph has no users")
        if self.tweeters is not None:
            missing = [u for u in self.tweeters if not self.initial_graph.has_user(u)]
            if missing:
                raise InvalidConfig(f"tweeters not in graph: {missing[:5]}")


@dataclass(frozen=True, slots=True)
class GroundTruthTrf:
    """A follow the engine actually caused through a retweet group."""

    speaker: int
    repeater: int
    listener: int
    t_s: float
    t_r: float
    t_l: float
    n_received: int
    reciprocal: bool


class GroupTable:
    """Aggregate outcome counts of retweet groups, by reciprocity class and size.

    `conv[c][n]` counts groups of class c that converted (the listener followed
    the speaker) at exactly their n-th received retweet; `cens[c][n]` counts
    groups that closed unconverted after n retweets (window expiry or end of
    run).
    """

    def __init__(self) -> None:
        self._cap = 64
        self.conv = np.zeros((2, self._cap), dtype=np.int64)
        self.cens = np.zeros((2, self._cap), dtype=np.int64)

    def _ensure(self, n_max: int) -> None:
        while n_max >= self._cap:
            self._cap *= 2
        if self.conv.shape[1] < self._cap:
            pad = ((0, 0), (0, self._cap - self.conv.shape[1]))
            self.conv = np.pad(self.conv, pad)
            self.cens = np.pad(self.cens, pad)

    def add_conversions(self, recip: np.ndarray, n: np.ndarray) -> None:
        if len(n):
            self._ensure(int(n.max()))
            np.add.at(self.conv, (recip.astype(np.int64), n), 1)

    def add_censored(self, recip: np.ndarray, n: np.ndarray) -> None:
        if len(n):
            self._ensure(int(n.max()))
            np.add.at(self.cens, (recip.astype(np.int64), n), 1)

    def counts(self, reciprocal: bool) -> tuple[dict[int, int], dict[int, int]]:
        """(conversions by n, censored by n) for one reciprocity class."""
        c = int(reciprocal)
        conv = {n: int(v) for n, v in enumerate(self.conv[c]) if v}
        cens = {n: int(v) for n, v in enumerate(self.cens[c]) if v}
        return conv, cens

    def total_groups(self, reciprocal: bool) -> int:
        c = int(reciprocal)
        return int(self.conv[c].sum() + self.cens[c].sum())


@dataclass
class SimResult:
    events: list[ev.Event] | None
    trf_events: list[GroundTruthTrf]
    groups: GroupTable
    final_graph: TemporalDigraph


# -- engine ------------------------------------------------------------------------

_NEG_INF = -math.inf


class _SpeakerState:
    """Per-speaker dense arrays over all users: group bookkeeping for one S."""

    __slots__ = ("t_open", "n_rec", "observed", "recip", "follows_me", "i_follow")

    def __init__(self, n_users: int, followers: np.ndarray, followees: Sequence[int]) -> None:
        self.t_open = np.full(n_users, _NEG_INF)
        self.n_rec = np.zeros(n_users, dtype=np.int64)
        self.observed = np.zeros(n_users, dtype=bool)
        self.recip = np.zeros(n_users, dtype=bool)
        self.follows_me = np.zeros(n_users, dtype=bool)
        self.follows_me[followers] = True
        self.i_follow = np.zeros(n_users, dtype=bool)
        if followees:
            self.i_follow[list(followees)] = True


class _Engine:
    def __init__(self, config: SimConfig, collect_events: bool) -> None:
        config.validate()
        self.cfg = config
        self.rng = substream(config.seed, "simulation")
        self.users = config.initial_graph.users()
        self.n = len(self.users)
        self.index = {u: i for i, u in enumerate(self.users)}
        # current-state adjacency (indices); append-only
        self.followers: list[list[int]] = [[] for _ in range(self.n)]
        self.followees: list[set[int]] = [set() for _ in range(self.n)]
        for a, b, _t in config.initial_graph.edges():
            ia, ib = self.index[a], self.index[b]
            self.followers[ib].append(ia)
            self.followees[ia].add(ib)
        self._fol_arr: list[np.ndarray | None] = [None] * self.n
        self.speakers: dict[int, _SpeakerState] = {}
        self.heap: list[tuple] = []
        self.seq = 0
        self.msg_counter = 0
        self.events: list[ev.Event] | None = [] if collect_events else None
        self.follow_events: list[ev.Event] = []
        self.truth: list[GroundTruthTrf] = []
        self.groups = GroupTable()
        self.retweeted_by: dict[int, set[int]] = {}
        if config.tweeters is None:
            self.tweeters = np.arange(self.n, dtype=np.int64)
        else:
            self.tweeters = np.array(sorted(self.index[u] for u in config.tweeters),
                                     dtype=np.int64)

    # - helpers -

    def _followers_arr(self, i: int) -> np.ndarray:
        arr = self._fol_arr[i]
        lst = self.followers[i]
        if arr is None or arr.shape[0] != len(lst):
            arr = np.array(lst, dtype=np.int64)
            self._fol_arr[i] = arr
        return arr

    def _speaker_state(self, s: int) -> _SpeakerState:
        state = self.speakers.get(s)
        if state is None:
            state = _SpeakerState(self.n, self._followers_arr(s), self.followees[s])
            self.speakers[s] = state
        return state

    def _push(self, t: float, rank: int, payload: tuple) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (t, rank, self.seq, payload))

    def _record(self, event: ev.Event) -> None:
        if self.events is not None:
            self.events.append(event)
        if event.kind == ev.FOLLOW:
            self.follow_events.append(event)

    def _apply_follow(self, follower: int, followee: int, t: float) -> None:
        """Rewire state for a new edge follower -> followee, closing any open
        retweet group the pair had (the listener now follows the speaker)."""
        self.followers[followee].append(follower)
        self.followees[follower].add(followee)
        state = self.speakers.get(followee)
        if state is not None:
            state.follows_me[follower] = True
            t_open = state.t_open[follower]
            if t_open != _NEG_INF:
                n = np.array([state.n_rec[follower]])
                rec = np.array([state.recip[follower]])
                if t < t_open + self.cfg.delta:
                    self.groups.add_conversions(rec, n)
                else:
                    self.groups.add_censored(rec, n)
                state.t_open[follower] = _NEG_INF
        fstate = self.speakers.get(follower)
        if fstate is not None:
            fstate.i_follow[followee] = True

    # - event handlers -

    def _handle_tweet(self, t: float) -> None:
        author = int(self.tweeters[int(self.rng.integers(self.tweeters.size))])
        msg = self.msg_counter
        self.msg_counter += 1
        self._record(ev.tweet(t, self.users[author], msg))
        if self.cfg.retweet_prob <= 0.0:
            return
        flw = self._followers_arr(author)
        if not flw.size:
            return
        mask = self.rng.random(flw.size) < self.cfg.retweet_prob
        reps = flw[mask]
        if not reps.size:
            return
        lats = self.cfg.retweet_latency_dist.sample(self.rng, reps.size)
        if self.cfg.multi_hop:
            self.retweeted_by[msg] = set(reps.tolist())
        for r, lat in zip(reps.tolist(), lats.tolist()):
            tr = t + lat
            if tr <= self.cfg.duration:
                self._push(tr, 1, (r, msg, author, t))

    def _handle_retweet(self, t_r: float, repeater: int, msg: int,
                        speaker: int, t_s: float) -> None:
        self._record(ev.retweet(t_r, self.users[repeater], msg, self.users[speaker], t_s))
        listeners = self._followers_arr(repeater)
        if listeners.size:
            self._deliver(t_r, repeater, msg, speaker, t_s, listeners)
        if self.cfg.multi_hop and listeners.size:
            self._multi_hop(t_r, msg, speaker, t_s, listeners)

    def _deliver(self, t_r: float, repeater: int, msg: int, speaker: int,
                 t_s: float, listeners: np.ndarray) -> None:
        cfg = self.cfg
        state = self._speaker_state(speaker)
        elig = ~state.follows_me[listeners]
        elig &= listeners != speaker
        elig &= listeners != repeater
        act = listeners[elig]
        if not act.size:
            return
        t_open = state.t_open[act]
        fresh = (t_r - t_open) >= cfg.delta      # never-opened slots are -inf: fresh
        expired = fresh & (t_open != _NEG_INF)
        if expired.any():
            idx = act[expired]
            self.groups.add_censored(state.recip[idx], state.n_rec[idx])
        new = act[fresh]
        if new.size:
            state.t_open[new] = t_r
            state.n_rec[new] = 1
            rec = state.i_follow[new]
            state.recip[new] = rec
            p = np.where(rec, cfg.params_reciprocal.p, cfg.params_nonreciprocal.p)
            state.observed[new] = self.rng.random(new.size) < p
        ongoing = act[~fresh]
        if ongoing.size:
            state.n_rec[ongoing] += 1
        rec_all = state.recip[act]
        q = np.where(rec_all, cfg.params_reciprocal.q, cfg.params_nonreciprocal.q)
        fire = state.observed[act] & (self.rng.random(act.size) < q)
        if not fire.any():
            return
        for li in act[fire].tolist():
            n = int(state.n_rec[li])
            rec_flag = bool(state.recip[li])
            self._record(ev.follow(t_r, self.users[li], self.users[speaker]))
            self.truth.append(GroundTruthTrf(
                speaker=self.users[speaker], repeater=self.users[repeater],
                listener=self.users[li], t_s=t_s, t_r=t_r, t_l=t_r,
                n_received=n, reciprocal=rec_flag,
            ))
            # _apply_follow records the conversion through the open group
            self._apply_follow(li, speaker, t_r)

    def _multi_hop(self, t_r: float, msg: int, speaker: int, t_s: float,
                   receivers: np.ndarray) -> None:
        """Receivers of a retweet may retweet the message themselves (once)."""
        done = self.retweeted_by.setdefault(msg, set())
        for x in receivers.tolist():
            if x == speaker or x in done:
                continue
            if self.rng.random() < self.cfg.retweet_prob:
                done.add(x)
                lat = float(self.cfg.retweet_latency_dist.sample(self.rng, 1)[0])
                tr = t_r + lat
                if tr <= self.cfg.duration:
                    self._push(tr, 1, (x, msg, speaker, t_s))

    def _handle_exo(self, t: float) -> None:
        """One exogenous follow attempt: a uniform user follows a uniform
        two-hop followee (no-op when the candidate pool is empty)."""
        li = int(self.rng.integers(self.n))
        direct = self.followees[li]
        pool: set[int] = set()
        for y in direct:
            pool.update(self.followees[y])
        pool -= direct
        pool.discard(li)
        if not pool:
            return
        cand = sorted(pool)
        target = cand[int(self.rng.integers(len(cand)))]
        self._record(ev.follow(t, self.users[li], self.users[target]))
        self._apply_follow(li, target, t)

    # - main loop -

    def run(self) -> SimResult:
        cfg = self.cfg
        if cfg.tweet_rate > 0 and self.tweeters.size:
            rate = cfg.tweet_rate * self.tweeters.size
            self._push(float(self.rng.exponential(1.0 / rate)), 0, ("tweet",))
        if cfg.exo_follow_rate > 0:
            rate = cfg.exo_follow_rate * self.n
            self._push(float(self.rng.exponential(1.0 / rate)), 2, ("exo",))
        while self.heap:
            t, rank, _seq, payload = heapq.heappop(self.heap)
            if t > cfg.duration:
                break  # heap pops in time order: everything left is past the horizon
            if rank == 0:
                nxt = t + float(self.rng.exponential(1.0 / (cfg.tweet_rate * self.tweeters.size)))
                if nxt <= cfg.duration:
                    self._push(nxt, 0, ("tweet",))
                self._handle_tweet(t)
            elif rank == 1:
                self._handle_retweet(t, *payload)
            else:
                nxt = t + float(self.rng.exponential(1.0 / (cfg.exo_follow_rate * self.n)))
                if nxt <= cfg.duration:
                    self._push(nxt, 2, ("exo",))
                self._handle_exo(t)
        # groups still open at the horizon close unconverted with what they saw
        for state in self.speakers.values():
            open_idx = np.flatnonzero(state.t_open != _NEG_INF)
            if open_idx.size:
                self.groups.add_censored(state.recip[open_idx], state.n_rec[open_idx])
                state.t_open[open_idx] = _NEG_INF

        events = self.events
        if events is not None:
            events.sort(key=ev.sort_key)
        final = ev.replay_graph(cfg.initial_graph, self.follow_events)
        return SimResult(events=events, trf_events=self.truth,
                         groups=self.groups, final_graph=final)


def run_simulation(config: SimConfig, collect_events: bool = True) -> SimResult:
    """Run one seeded simulation.

    Returns the sorted event log (None when collect_events=False, for large
    aggregate-only runs), the ground-truth list of retweet-caused follows, the
    per-class group outcome table, and the final graph.
    """
    return _Engine(config, collect_events).run()


# -- measurement-style observer ----------------------------------------------------

def snapshot_observer(
    log: Sequence[ev.Event],
    initial_graph: TemporalDigraph,
    users: Sequence[int],
    poll_interval: float,
    duration: float | None = None,
) -> list[ev.Snapshot]:
    """Periodic follower-set polls of the monitored users, from the log.

    Polls happen at k * poll_interval for k = 0, 1, ...; the last poll is the
    first one at or after the final event (or floor(duration / poll_interval)
    when a duration is given).  Each snapshot is the follower set implied by
    the initial graph plus all follow events up to the poll instant.
    """
    if poll_interval <= 0:
        raise InvalidConfig(f"poll_interval must be > 0, got {poll_interval}")
    ev.check_sorted(log)
    monitored = sorted(set(users))
    for u in monitored:
        if not initial_graph.has_user(u):
            # listeners can appear mid-log in principle, but polling targets
            # must exist up front
            raise InvalidConfig(f"monitored user {u} is not in the graph")
    if duration is None:
        t_last = log[-1].t if log else 0.0
        k_max = math.ceil(t_last / poll_interval) if t_last > 0 else 0
    else:
        k_max = math.floor(duration / poll_interval)

    arrivals: dict[int, list[tuple[float, int]]] = {u: [] for u in monitored}
    mon_set = set(monitored)
    for u in monitored:
        for f in initial_graph.followers_at(u, math.inf):
            arrivals[u].append((initial_graph.created_at(f, u), f))
    for e in log:
        if e.kind == ev.FOLLOW and e.followee in mon_set:
            arrivals[e.followee].append((e.t, e.follower))
    for u in monitored:
        arrivals[u].sort()

    snapshots = []
    pointer = {u: 0 for u in monitored}
    current: dict[int, set[int]] = {u: set() for u in monitored}
    for k in range(k_max + 1):
        t_poll = k * poll_interval
        for u in monitored:
            arr = arrivals[u]
            i = pointer[u]
            while i < len(arr) and arr[i][0] <= t_poll:
                current[u].add(arr[i][1])
                i += 1
            pointer[u] = i
            snapshots.append(ev.Snapshot(user=u, t=t_poll, followers=tuple(sorted(current[u]))))
    return snapshots


# -- synthetic initial graphs --------------------------------------------------------

def synth_graph(kind: str, size: int, edge_prob: float = 0.0, seed: int = 0) -> TemporalDigraph:
    """Deterministic test topologies; every edge is created at t = 0.

    Kinds: 'cycle' (one directed size-cycle), 'dag_hierarchy' (layered DAG
    whose sinks sit on top), 'reciprocal_pairs' (disjoint mutual pairs), and
    'random' (directed G(n, p)).
    """
    if size < 1:
        raise InvalidConfig(f"size must be >= 1, got {size}")
    rng = substream(seed, "synthesis")
    g = TemporalDigraph()
    for u in range(size):
        g.add_user(u)

    if kind == "cycle":
        if size < 2:
            raise InvalidConfig("a directed cycle needs at least 2 nodes")
        for i in range(size):
            g.add_follow(i, (i + 1) % size, 0.0)
    elif kind == "dag_hierarchy":
        # layer widths 1, 2, 4, ...: node 0 is the sink; each deeper node
        # follows one or two nodes of the previous layer
        layers: list[list[int]] = []
        u = 0
        width = 1
        while u < size:
            layer = list(range(u, min(u + width, size)))
            layers.append(layer)
            u += len(layer)
            width *= 2
        for li in range(1, len(layers)):
            prev = layers[li - 1]
            for node in layers[li]:
                k = 1 if len(prev) == 1 else 1 + int(rng.integers(2))
                picks = rng.choice(len(prev), size=min(k, len(prev)), replace=False)
                for pi in sorted(int(x) for x in picks):
                    g.add_follow(node, prev[pi], 0.0)
    elif kind == "reciprocal_pairs":
        for i in range(0, size - 1, 2):
            g.add_follow(i, i + 1, 0.0)
            g.add_follow(i + 1, i, 0.0)
    elif kind == "random":
        if not (0.0 <= edge_prob <= 1.0):
            raise InvalidConfig(f"edge_prob must be in [0, 1], got {edge_prob}")
        if size <= 2000:
            mask = rng.random((size, size)) < edge_prob
            np.fill_diagonal(mask, False)
            a, b = np.nonzero(mask)
        else:
            # sparse pair sampling: draw ~Binomial(n(n-1), p) distinct ordered
            # pairs instead of materializing an n*n matrix
            total = size * (size - 1)
            m = int(rng.binomial(total, edge_prob))
            codes = rng.integers(0, total, size=int(m * 1.1) + 16)
            codes = np.unique(codes)
            codes = rng.permutation(codes)[:m]
            a = codes // (size - 1)
            r = codes % (size - 1)
            b = r + (r >= a)
        ga = graph_from_arrays(a, b, np.zeros(len(a)))
        for u in range(size):
            ga.add_user(u)
        return ga
    else:
        raise InvalidConfig(f"unknown graph kind {kind!r}")
    return g


# -- CSV for ground truth --------------------------------------------------------------

TRUTH_CSV_HEADER = "speaker,repeater,listener,t_s,t_r,t_l,n_received,reciprocal"


def write_ground_truth_csv(truth: Sequence[GroundTruthTrf], path: str) -> None:
    with open(path, "w") as fp:
        fp.write(TRUTH_CSV_HEADER + "\n")
        for g in truth:
            fp.write(f"{g.speaker},{g.repeater},{g.listener},{g.t_s!r},{g.t_r!r},"
                     f"{g.t_l!r},{g.n_received},{int(g.reciprocal)}\n")
