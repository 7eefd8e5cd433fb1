"""Structural analyses of the follower graph.

Strongly connected components (iterative Tarjan, safe on million-edge graphs),
weakly connected node sampling (random walk with restart, snowball/BFS), the
transitive-closure fixed point that repeated retweet-driven follows drive a
graph toward, and the largest-SCC-fraction-vs-sample-size curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import Unreachable, UnknownUser
from .graph import TemporalDigraph

# Timestamp given to closure-added edges: far beyond any simulated time, but
# finite so graph invariants still hold.
EQUILIBRIUM_TIME = 2.0**62


def _index_graph(graph: TemporalDigraph) -> tuple[list[int], dict[int, int], list[list[int]]]:
    """Dense node indexing plus followee adjacency (all edges, any timestamp)."""
    nodes = graph.users()
    index = {u: i for i, u in enumerate(nodes)}
    adj: list[list[int]] = [[] for _ in nodes]
    for a, b, _t in graph.edges():
        adj[index[a]].append(index[b])
    return nodes, index, adj


@dataclass(frozen=True)
class SccResult:
    component: dict[int, int]      # node -> component id (0-based, discovery order)
    sizes: list[int]               # component id -> member count
    largest_fraction: float        # |largest component| / |nodes|

    @property
    def n_components(self) -> int:
        return len(self.sizes)


def tarjan_scc(graph: TemporalDigraph) -> SccResult:
    """Exact strongly connected components via an explicit-stack Tarjan."""
    nodes, _, adj = _index_graph(graph)
    n = len(nodes)
    index = [-1] * n
    lowlink = [0] * n
    on_stack = [False] * n
    scc_id = [-1] * n
    tarjan_stack: list[int] = []
    sizes: list[int] = []
    counter = 0

    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = lowlink[v] = counter
                counter += 1
                tarjan_stack.append(v)
                on_stack[v] = True
            recurse = False
            neighbors = adj[v]
            while pi < len(neighbors):
                w = neighbors[pi]
                pi += 1
                if index[w] == -1:
                    work[-1] = (v, pi)
                    work.append((w, 0))
                    recurse = True
                    break
                if on_stack[w]:
                    if index[w] < lowlink[v]:
                        lowlink[v] = index[w]
            if recurse:
                continue
            work.pop()
            if lowlink[v] == index[v]:
                cid = len(sizes)
                size = 0
                while True:
                    w = tarjan_stack.pop()
                    on_stack[w] = False
                    scc_id[w] = cid
                    size += 1
                    if w == v:
                        break
                sizes.append(size)
            if work:
                parent = work[-1][0]
                if lowlink[v] < lowlink[parent]:
                    lowlink[parent] = lowlink[v]

    component = {nodes[i]: scc_id[i] for i in range(n)}
    largest = max(sizes) if sizes else 0
    fraction = largest / n if n else 0.0
    return SccResult(component=component, sizes=sizes, largest_fraction=fraction)


# -- sampling -------------------------------------------------------------------

def _undirected_adjacency(graph: TemporalDigraph) -> tuple[list[int], dict[int, int], list[list[int]]]:
    nodes, index, adj = _index_graph(graph)
    und: list[set[int]] = [set() for _ in nodes]
    for i, nbrs in enumerate(adj):
        for j in nbrs:
            und[i].add(j)
            und[j].add(i)
    return nodes, index, [sorted(s) for s in und]


def _pick_start(nodes: list[int], index: dict[int, int], rng: np.random.Generator,
                start: int | None) -> int:
    if start is not None:
        if start not in index:
            raise UnknownUser(f"start node {start} is not in the graph")
        return index[start]
    return int(rng.integers(len(nodes)))


def random_walk_sample(
    graph: TemporalDigraph,
    target_size: int,
    restart_prob: float = 0.15,
    seed: int = 0,
    start: int | None = None,
    max_steps: int | None = None,
) -> list[int]:
    """Nodes visited by a restart-to-origin random walk on the undirected view.

    Collects distinct nodes until target_size is reached; the induced sample is
    weakly connected by construction.  Raises Unreachable when the walk cannot
    collect enough nodes within the step cap (e.g. the start's weak component
    is too small).
    """
    nodes, index, und = _undirected_adjacency(graph)
    if not (1 <= target_size <= len(nodes)):
        raise Unreachable(f"target_size {target_size} not in [1, {len(nodes)}]")
    if not (0.0 <= restart_prob < 1.0):
        raise ValueError(f"restart_prob must be in [0, 1), got {restart_prob}")
    rng = np.random.default_rng(seed)
    origin = _pick_start(nodes, index, rng, start)
    if max_steps is None:
        max_steps = 10_000 + 2_000 * target_size
    visited = {origin}
    current = origin
    steps = 0
    while len(visited) < target_size:
        if steps >= max_steps:
            raise Unreachable(
                f"collected {len(visited)} < {target_size} nodes after {max_steps} steps"
            )
        steps += 1
        nbrs = und[current]
        if not nbrs or rng.random() < restart_prob:
            current = origin
            continue
        current = nbrs[int(rng.integers(len(nbrs)))]
        visited.add(current)
    return sorted(nodes[i] for i in visited)


def snowball_sample(
    graph: TemporalDigraph,
    target_size: int,
    seed: int = 0,
    start: int | None = None,
) -> list[int]:
    """Breadth-first sample of the undirected view, truncated at target_size.

    The final BFS frontier is truncated in ascending node order, so the sample
    is deterministic given (seed, start).
    """
    nodes, index, und = _undirected_adjacency(graph)
    if not (1 <= target_size <= len(nodes)):
        raise Unreachable(f"target_size {target_size} not in [1, {len(nodes)}]")
    rng = np.random.default_rng(seed)
    origin = _pick_start(nodes, index, rng, start)
    visited = {origin}
    frontier = [origin]
    while frontier and len(visited) < target_size:
        nxt: set[int] = set()
        for v in frontier:
            for w in und[v]:
                if w not in visited:
                    nxt.add(w)
        frontier = sorted(nxt)
        room = target_size - len(visited)
        if len(frontier) > room:
            frontier = frontier[:room]
        visited.update(frontier)
    if len(visited) < target_size:
        raise Unreachable(
            f"weak component of start has only {len(visited)} nodes, need {target_size}"
        )
    return sorted(nodes[i] for i in visited)


# -- reachability and the follow-closure fixed point ------------------------------

def reachable_followees(graph: TemporalDigraph, x: int) -> list[int]:
    """Every user reachable from x along followee edges (x itself only via a cycle)."""
    if not graph.has_user(x):
        raise UnknownUser(f"user {x} is not registered")
    nodes, index, adj = _index_graph(graph)
    startidx = index[x]
    seen: set[int] = set()
    stack = list(adj[startidx])
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        stack.extend(w for w in adj[v] if w not in seen)
    return sorted(nodes[i] for i in seen)


def trf_closure(graph: TemporalDigraph) -> TemporalDigraph:
    """Transitive closure of the followee digraph.

    The fixed point of retweet-driven link addition: a user ends up following
    everyone she can currently receive a retweet from.  Original edges keep
    their timestamps; added edges are stamped EQUILIBRIUM_TIME.  Self edges
    are never added (a user cannot follow herself).
    """
    closed = graph.copy()
    for x in graph.users():
        already = set(graph.followees_at(x, math.inf))
        for y in reachable_followees(graph, x):
            if y != x and y not in already:
                closed.add_follow(x, y, EQUILIBRIUM_TIME)
    return closed


def is_trf_equilibrium(graph: TemporalDigraph) -> bool:
    """True iff no new edge could be added by retweet-driven follows."""
    for x in graph.users():
        already = set(graph.followees_at(x, math.inf))
        for y in reachable_followees(graph, x):
            if y != x and y not in already:
                return False
    return True


# -- SCC fraction vs sample size ---------------------------------------------------

@dataclass(frozen=True, slots=True)
class CurvePoint:
    size: int
    mean_fraction: float
    ci_low: float
    ci_high: float
    repetitions: int


def _induced_subgraph(graph: TemporalDigraph, members: list[int]) -> TemporalDigraph:
    sub = TemporalDigraph()
    member_set = set(members)
    for u in members:
        sub.add_user(u)
        for v in graph.followees_at(u, math.inf):
            if v in member_set:
                sub.add_follow(u, v, graph.created_at(u, v))
    return sub


def scc_fraction_curve(
    graph: TemporalDigraph,
    method: str,
    sizes: list[int],
    repetitions: int,
    seed: int = 0,
    restart_prob: float = 0.15,
) -> list[CurvePoint]:
    """Mean largest-SCC fraction of sampled subgraphs, per sample size.

    For each size, `repetitions` independent samples are drawn (seeded from one
    master stream, so the whole curve is reproducible) and the fraction of
    sampled nodes in the largest SCC of the induced subgraph is averaged, with
    a 95% normal-approximation confidence interval.
    """
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if method not in ("random_walk", "snowball"):
        raise ValueError(f"unknown sampling method {method!r}")
    rng = np.random.default_rng(seed)
    points = []
    for size in sizes:
        fractions = np.empty(repetitions)
        for rep in range(repetitions):
            sub_seed = int(rng.integers(2**63))
            if method == "random_walk":
                members = random_walk_sample(graph, size, restart_prob, seed=sub_seed)
            else:
                members = snowball_sample(graph, size, seed=sub_seed)
            sub = _induced_subgraph(graph, members)
            fractions[rep] = tarjan_scc(sub).largest_fraction
        mean = float(fractions.mean())
        if repetitions > 1:
            half = 1.96 * float(fractions.std(ddof=1)) / math.sqrt(repetitions)
        else:
            half = 0.0
        points.append(CurvePoint(
            size=size, mean_fraction=mean,
            ci_low=mean - half, ci_high=mean + half,
            repetitions=repetitions,
        ))
    return points
