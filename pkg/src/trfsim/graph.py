"""Temporal directed follower graph.

Edges carry a creation timestamp (seconds); an edge exists at time t iff it was
created at or before t.  Edges only accrue — unfollowing is not modeled — so
every query is monotone in t.  Query results are returned as lists sorted by
ascending user id so downstream consumers are reproducible run to run.
"""

from __future__ import annotations

import math
from typing import Iterable, Iterator

import numpy as np

from .errors import DataError, DuplicateEdge, SelfEdge, UnknownUser

GRAPH_CSV_HEADER = "follower,followee,created_at"


class TemporalDigraph:
    """Directed graph of (follower -> followee) edges with creation times."""

    def __init__(self) -> None:
        # follower -> {followee: created_at}
        self._out: dict[int, dict[int, float]] = {}
        # followee -> {follower: created_at}
        self._in: dict[int, dict[int, float]] = {}
        self._n_edges = 0

    # -- construction -------------------------------------------------------

    def add_user(self, user: int) -> None:
        if user < 0:
            raise DataError(f"user ids must be non-negative, got {user}")
        self._out.setdefault(user, {})
        self._in.setdefault(user, {})

    def add_follow(self, follower: int, followee: int, t: float) -> None:
        """Create the edge follower -> followee at time t."""
        if follower == followee:
            raise SelfEdge(f"user {follower} cannot follow herself")
        if not math.isfinite(t) or t < 0:
            raise DataError(f"created_at must be finite and non-negative, got {t}")
        self.add_user(follower)
        self.add_user(followee)
        if followee in self._out[follower]:
            raise DuplicateEdge(f"edge {follower}->{followee} already exists")
        self._out[follower][followee] = t
        self._in[followee][follower] = t
        self._n_edges += 1

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int, float]]) -> "TemporalDigraph":
        g = cls()
        for a, b, t in edges:
            g.add_follow(a, b, t)
        return g

    def copy(self) -> "TemporalDigraph":
        g = TemporalDigraph()
        g._out = {u: dict(d) for u, d in self._out.items()}
        g._in = {u: dict(d) for u, d in self._in.items()}
        g._n_edges = self._n_edges
        return g

    # -- inspection ---------------------------------------------------------

    @property
    def n_edges(self) -> int:
        return self._n_edges

    def users(self) -> list[int]:
        return sorted(self._out)

    def has_user(self, user: int) -> bool:
        return user in self._out

    def edges(self) -> Iterator[tuple[int, int, float]]:
        """All edges as (follower, followee, created_at), sorted."""
        for a in sorted(self._out):
            out = self._out[a]
            for b in sorted(out):
                yield a, b, out[b]

    def _check_user(self, user: int) -> None:
        if user not in self._out:
            raise UnknownUser(f"user {user} is not registered")

    # -- queries ------------------------------------------------------------

    def followers_at(self, user: int, t: float) -> list[int]:
        """Users following `user` at time t, ascending."""
        self._check_user(user)
        return sorted(x for x, ts in self._in[user].items() if ts <= t)

    def followees_at(self, user: int, t: float) -> list[int]:
        """Users that `user` follows at time t, ascending."""
        self._check_user(user)
        return sorted(x for x, ts in self._out[user].items() if ts <= t)

    def edge_at(self, a: int, b: int, t: float) -> bool:
        """Did the edge a -> b exist at time t?"""
        self._check_user(a)
        self._check_user(b)
        ts = self._out[a].get(b)
        return ts is not None and ts <= t

    def created_at(self, a: int, b: int) -> float | None:
        """Creation time of edge a -> b, or None if absent."""
        self._check_user(a)
        return self._out[a].get(b)

    def followers_of_followers(self, s: int, t: float) -> list[int]:
        """Second-hop followers of s at time t.

        Users X (X != s) that follow some follower of s but do not follow s
        directly.  This is the candidate pool from which s can gain new
        followers through retweet exposure.
        """
        self._check_user(s)
        direct = {x for x, ts in self._in[s].items() if ts <= t}
        second: set[int] = set()
        for y in direct:
            for x, ts in self._in[y].items():
                if ts <= t:
                    second.add(x)
        second.discard(s)
        second -= direct
        return sorted(second)

    def followees_of_followees(self, user: int, t: float) -> list[int]:
        """Two-hop followees of `user` at time t, excluding direct followees.

        The mirror view of followers_of_followers: `user` belongs to the
        second-hop follower pool of exactly these users.
        """
        self._check_user(user)
        direct = {x for x, ts in self._out[user].items() if ts <= t}
        second: set[int] = set()
        for y in direct:
            for x, ts in self._out[y].items():
                if ts <= t:
                    second.add(x)
        second.discard(user)
        second -= direct
        return sorted(second)


# -- bulk construction (synthetic graphs, large CSV files) -------------------

def graph_from_arrays(
    followers: np.ndarray, followees: np.ndarray, times: np.ndarray
) -> TemporalDigraph:
    """Build a graph from parallel arrays without per-edge validation overhead.

    Duplicate or self edges still raise, but checks are vectorized.
    """
    followers = np.asarray(followers, dtype=np.int64)
    followees = np.asarray(followees, dtype=np.int64)
    times = np.asarray(times, dtype=np.float64)
    if np.any(followers == followees):
        raise SelfEdge("self edge in bulk input")
    if followers.size and (followers.min() < 0 or followees.min() < 0):
        raise DataError("user ids must be non-negative")
    if times.size and (not np.all(np.isfinite(times)) or times.min() < 0):
        raise DataError("created_at must be finite and non-negative")
    g = TemporalDigraph()
    out = g._out
    inn = g._in
    for a, b, t in zip(followers.tolist(), followees.tolist(), times.tolist()):
        d = out.get(a)
        if d is None:
            d = out[a] = {}
            inn.setdefault(a, {})
        if b in d:
            raise DuplicateEdge(f"edge {a}->{b} appears twice in bulk input")
        d[b] = t
        di = inn.get(b)
        if di is None:
            di = inn[b] = {}
            out.setdefault(b, {})
        di[a] = t
    g._n_edges = followers.size
    return g


# -- CSV snapshot file --------------------------------------------------------

def write_graph_csv(graph: TemporalDigraph, path: str) -> None:
    """One edge per line: follower,followee,created_at."""
    with open(path, "w") as fp:
        fp.write(GRAPH_CSV_HEADER + "\n")
        for a, b, t in graph.edges():
            fp.write(f"{a},{b},{t!r}\n")


def read_graph_csv(path: str) -> TemporalDigraph:
    with open(path) as fp:
        header = fp.readline().strip()
        if header != GRAPH_CSV_HEADER:
            raise DataError(f"{path}: expected header '{GRAPH_CSV_HEADER}', got '{header}'")
        g = TemporalDigraph()
        for lineno, line in enumerate(fp, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                a, b, t = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            try:
                g.add_follow(a, b, t)
            except (SelfEdge, DuplicateEdge, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return g
