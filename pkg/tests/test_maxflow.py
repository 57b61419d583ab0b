from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geocuts.maxflow import FlowNetwork, max_flow_value, min_cut

from oracles import brute_min_cut, random_network


def _connected(n, s, t, arcs, removed):
    adj = [[] for _ in range(n)]
    for e, (u, v, c) in enumerate(arcs):
        if e not in removed and c > 0:
            adj[u].append(v)
            adj[v].append(u)
    seen, todo = {s}, deque([s])
    while todo:
        x = todo.popleft()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                todo.append(y)
    return t in seen


def test_path_bottleneck():
    net = FlowNetwork(3, 0, 2, [(0, 1, 3.0), (1, 2, 1.0)])
    r = min_cut(net)
    assert r.cut_value == 1.0
    assert r.cut_edges == {1}
    assert r.source_side == {0, 1}


def test_disconnected_terminals():
    r = min_cut(FlowNetwork(4, 0, 3, [(0, 1, 2.0), (2, 3, 5.0)]))
    assert r.cut_value == 0.0 and r.cut_edges == set()
    assert 3 not in r.source_side


def test_undirected_arcs():
    # the arc is listed t -> s; flow must still pass s -> t
    r = min_cut(FlowNetwork(2, 0, 1, [(1, 0, 4.0)]))
    assert r.cut_value == 4.0


def test_parallel_arcs_add_up():
    r = min_cut(FlowNetwork(2, 0, 1, [(0, 1, 1.5), (0, 1, 2.5)]))
    assert r.cut_value == 4.0 and r.cut_edges == {0, 1}


def test_same_terminals_rejected():
    with pytest.raises(ValueError):
        FlowNetwork(3, 1, 1)


def test_negative_capacity_rejected():
    net = FlowNetwork(2, 0, 1)
    with pytest.raises(ValueError):
        net.add_arc(0, 1, -1.0)


def test_source_side_is_closest_to_source():
    # two equal min cuts; the residual-reachable side is the smaller one
    r = min_cut(FlowNetwork(3, 0, 2, [(0, 1, 1.0), (1, 2, 1.0)]))
    assert r.source_side == {0}


def test_against_brute_force_random():
    rng = np.random.default_rng(12)
    for _ in range(200):
        n, s, t, arcs = random_network(rng, 8, 14)
        r = min_cut(FlowNetwork(n, s, t, list(arcs)))
        assert r.cut_value == pytest.approx(brute_min_cut(n, s, t, arcs), rel=1e-9, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cut_properties(seed):
    n, s, t, arcs = random_network(np.random.default_rng(seed))
    r = min_cut(FlowNetwork(n, s, t, list(arcs)))
    assert s in r.source_side and t not in r.source_side
    assert r.cut_value == pytest.approx(sum(arcs[e][2] for e in r.cut_edges), rel=1e-9, abs=1e-12)
    assert r.cut_value == pytest.approx(r.flow_value, rel=1e-9, abs=1e-12)
    assert not _connected(n, s, t, arcs, r.cut_edges)
    for e in r.cut_edges:
        u, v, _ = arcs[e]
        assert (u in r.source_side) != (v in r.source_side)


def test_max_flow_matches_cut():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n, s, t, arcs = random_network(rng)
        assert max_flow_value(FlowNetwork(n, s, t, list(arcs))) == pytest.approx(
            brute_min_cut(n, s, t, arcs), rel=1e-9, abs=1e-12)


def test_deterministic():
    rng = np.random.default_rng(5)
    n, s, t, arcs = random_network(rng)
    a, b = min_cut(FlowNetwork(n, s, t, list(arcs))), min_cut(FlowNetwork(n, s, t, list(arcs)))
    assert a.cut_edges == b.cut_edges and a.source_side == b.source_side


def test_larger_grid_network():
    # 30x30 grid with unit capacities; the min cut between opposite corners is 2
    side = 30
    arcs = []
    for i in range(side):
        for j in range(side):
            v = i * side + j
            if j + 1 < side:
                arcs.append((v, v + 1, 1.0))
            if i + 1 < side:
                arcs.append((v, v + side, 1.0))
    r = min_cut(FlowNetwork(side * side, 0, side * side - 1, arcs))
    assert r.cut_value == 2.0
