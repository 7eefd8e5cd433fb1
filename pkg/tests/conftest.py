"""Shared builders for the test suite."""

import numpy as np
import pytest

import trfsim as t


def build_block_graph(n_speakers, reps_per, pool, ks=(1, 2, 4, 8), reciprocal_stride=2):
    """Speakers with dedicated repeaters and a shared listener pool.

    Listener sub-block j follows the first ks[j] repeaters of every speaker, so
    pair delivery multiplicity (and hence group size) is mixed.  Every
    `reciprocal_stride`-th listener of each sub-block is followed back by every
    speaker, which marks those pairs reciprocal (None: no reciprocal edges).

    Returns (graph, speakers, listeners).
    """
    g = t.TemporalDigraph()
    uid = 0
    speakers, rep_sets = [], []
    for _ in range(n_speakers):
        s = uid
        uid += 1
        speakers.append(s)
        reps = list(range(uid, uid + reps_per))
        uid += reps_per
        rep_sets.append(reps)
        for r in reps:
            g.add_follow(r, s, 0.0)
    sub = pool // len(ks)
    listeners = list(range(uid, uid + sub * len(ks)))
    for j, k in enumerate(ks):
        for i in range(sub):
            li = listeners[j * sub + i]
            for s, reps in zip(speakers, rep_sets):
                for r in reps[:k]:
                    g.add_follow(li, r, 0.0)
                if reciprocal_stride is not None and i % reciprocal_stride == 0:
                    g.add_follow(s, li, 0.0)
    return g, speakers, listeners


def random_digraph(n, p, rng):
    """Plain G(n, p) digraph as a TemporalDigraph with all edges at t=0."""
    g = t.TemporalDigraph()
    for u in range(n):
        g.add_user(u)
    mask = rng.random((n, n)) < p
    np.fill_diagonal(mask, False)
    for a, b in zip(*np.nonzero(mask)):
        g.add_follow(int(a), int(b), 0.0)
    return g


def adjacency_matrix(graph):
    """Dense boolean followee adjacency over graph.users() order."""
    nodes = graph.users()
    index = {u: i for i, u in enumerate(nodes)}
    m = np.zeros((len(nodes), len(nodes)), dtype=bool)
    for a, b, _t in graph.edges():
        m[index[a], index[b]] = True
    return nodes, m


def reachability(adj):
    """Transitive closure of a boolean adjacency matrix (matrix squaring)."""
    n = adj.shape[0]
    reach = adj.copy()
    while True:
        nxt = reach | (reach @ reach)
        if np.array_equal(nxt, reach):
            return reach
        reach = nxt


@pytest.fixture(scope="session")
def day():
    return 86400.0
