import math

import numpy as np
import pytest

from trfsim import TemporalDigraph
from trfsim.errors import DataError, DuplicateEdge, SelfEdge, UnknownUser
from trfsim.graph import read_graph_csv, write_graph_csv

from conftest import random_digraph


def test_edge_visible_from_creation_time():
    g = TemporalDigraph()
    g.add_follow(1, 2, 5.0)
    assert g.edge_at(1, 2, 5.0) is True
    assert g.edge_at(1, 2, 4.9) is False


def test_self_edge_rejected():
    g = TemporalDigraph()
    with pytest.raises(SelfEdge):
        g.add_follow(1, 1, 0.0)


def test_duplicate_edge_rejected():
    g = TemporalDigraph()
    g.add_follow(1, 2, 0.0)
    with pytest.raises(DuplicateEdge):
        g.add_follow(1, 2, 3.0)


def test_bad_timestamps_rejected():
    g = TemporalDigraph()
    with pytest.raises(DataError):
        g.add_follow(1, 2, -1.0)
    with pytest.raises(DataError):
        g.add_follow(1, 2, math.inf)


def test_followers_at_boundary_inclusive():
    g = TemporalDigraph()
    g.add_follow(2, 1, 0.0)
    g.add_follow(3, 1, 10.0)
    assert g.followers_at(1, 5) == [2]
    assert g.followers_at(1, 10) == [2, 3]


def test_followers_unknown_user():
    g = TemporalDigraph()
    g.add_follow(2, 1, 0.0)
    with pytest.raises(UnknownUser):
        g.followers_at(9, 0)


def test_followees():
    g = TemporalDigraph()
    g.add_follow(1, 2, 0.0)
    assert g.followees_at(1, 0) == [2]
    assert g.followees_at(2, 0) == []
    assert g.followees_at(1, -1) == []


def test_edge_at_cases():
    g = TemporalDigraph()
    g.add_follow(1, 2, 0.0)
    g.add_follow(2, 1, 0.0)
    g.add_user(3)
    assert g.edge_at(2, 1, 0) is True
    assert g.edge_at(3, 1, 100) is False
    g.add_follow(4, 5, 7.0)
    assert g.edge_at(4, 5, 6.999) is False


def test_followers_of_followers_excludes_direct_and_self():
    g = TemporalDigraph()
    g.add_follow(2, 1, 0.0)
    g.add_follow(3, 2, 0.0)
    assert g.followers_of_followers(1, 0) == [3]
    g.add_follow(3, 1, 0.0)  # 3 now follows 1 directly
    assert g.followers_of_followers(1, 0) == []


def test_followers_of_followers_star_no_second_hop():
    g = TemporalDigraph()
    for leaf in (2, 3, 4):
        g.add_follow(leaf, 1, 0.0)
    assert g.followers_of_followers(1, 0) == []


def test_monotonicity_and_duality_on_random_graphs():
    rng = np.random.default_rng(42)
    for _ in range(25):
        n = int(rng.integers(3, 50))
        g = TemporalDigraph()
        for u in range(n):
            g.add_user(u)
        m = int(rng.integers(1, 4 * n))
        for _ in range(m):
            a, b = int(rng.integers(n)), int(rng.integers(n))
            t = float(rng.uniform(0, 100))
            if a == b or g.created_at(a, b) is not None:
                continue
            g.add_follow(a, b, t)
        for t1, t2 in ((10, 50), (0, 100), (30, 30)):
            lo, hi = min(t1, t2), max(t1, t2)
            for u in g.users():
                assert set(g.followers_at(u, lo)) <= set(g.followers_at(u, hi))
        t = float(rng.uniform(0, 100))
        for u in g.users():
            for x in g.followers_at(u, t):
                assert u in g.followees_at(x, t)
                assert g.edge_at(x, u, t)
            fof = set(g.followers_of_followers(u, t))
            assert fof.isdisjoint(set(g.followers_at(u, t)) | {u})


def test_queries_match_naive_scan():
    rng = np.random.default_rng(7)
    for _ in range(10):
        n = int(rng.integers(3, 50))
        edges = []
        g = TemporalDigraph()
        for u in range(n):
            g.add_user(u)
        for _ in range(int(rng.integers(1, 3 * n))):
            a, b = int(rng.integers(n)), int(rng.integers(n))
            t = float(rng.uniform(0, 100))
            if a == b or any(e[0] == a and e[1] == b for e in edges):
                continue
            edges.append((a, b, t))
            g.add_follow(a, b, t)
        t = float(rng.uniform(0, 100))
        for u in range(n):
            naive_followers = sorted(a for a, b, ts in edges if b == u and ts <= t)
            naive_followees = sorted(b for a, b, ts in edges if a == u and ts <= t)
            assert g.followers_at(u, t) == naive_followers
            assert g.followees_at(u, t) == naive_followees
            direct = set(naive_followers)
            fof = set()
            for y in direct:
                fof.update(a for a, b, ts in edges if b == y and ts <= t)
            fof -= direct | {u}
            assert g.followers_of_followers(u, t) == sorted(fof)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    g = random_digraph(20, 0.15, rng)
    path = tmp_path / "graph.csv"
    write_graph_csv(g, str(path))
    g2 = read_graph_csv(str(path))
    assert list(g.edges()) == list(g2.edges())
    assert g.users() == g2.users()


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,0.0\n")
    with pytest.raises(DataError):
        read_graph_csv(str(path))


def test_csv_rejects_garbage_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("follower,followee,created_at\n1,2\n")
    with pytest.raises(DataError):
        read_graph_csv(str(path))
