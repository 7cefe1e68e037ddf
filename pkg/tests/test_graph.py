import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from higen.graph import (ConsistencyError, GraphError, HierarchicalGraph, InvalidPartitionError,
                         LevelGraph, bfs_order_community, build_hg, candidate_edges_at_step, coarsen,
                         parse_edge_lists, read_edge_lists, read_hg_jsonl, validate_hg,
                         write_edge_lists, write_hg_jsonl)

from conftest import random_graph, random_partition_stack


def cycle4():
    return LevelGraph(4, {(0, 1): 1, (1, 2): 1, (2, 3): 1, (0, 3): 1}, 2)


def two_triangles_bridge():
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]
    return LevelGraph(6, {e: 1 for e in edges}, 0)


# ---------------------------------------------------------------- LevelGraph

def test_edges_are_canonicalised():
    g = LevelGraph(3, {(2, 0): 1, (1, 2): 4}, 1)
    assert set(g.edges) == {(0, 2), (1, 2)}
    assert g.total_weight == 5


@pytest.mark.parametrize("edges", [{(0, 1): 0}, {(0, 3): 1}, {(-1, 0): 1}])
def test_bad_edges_rejected(edges):
    with pytest.raises(GraphError):
        LevelGraph(3, edges, 0)


def test_adjacency_symmetric_with_self_loop_once():
    g = LevelGraph(2, {(0, 0): 3, (0, 1): 2}, 0)
    a = g.adjacency()
    assert np.array_equal(a, a.T)
    assert a[0, 0] == 3 and a[0, 1] == 2
    assert list(g.strength()) == [8, 2]


# ---------------------------------------------------------------- coarsen

def test_coarsen_cycle_two_clusters():
    h = coarsen(cycle4(), [0, 0, 1, 1])
    assert h.edges == {(0, 0): 1, (1, 1): 1, (0, 1): 2}
    assert h.total_weight == 4


def test_coarsen_all_in_one():
    g = two_triangles_bridge()
    h = coarsen(g, [0] * 6)
    assert h.node_count == 1 and h.edges == {(0, 0): 7}


def test_coarsen_identity_keeps_graph():
    g = two_triangles_bridge()
    assert coarsen(g, range(6)).edges == g.edges


def test_coarsen_counts_existing_self_loops():
    g = LevelGraph(3, {(0, 0): 2, (0, 1): 1, (2, 2): 5, (1, 2): 3}, 1)
    assert coarsen(g, [0, 0, 1]).edges == {(0, 0): 3, (1, 1): 5, (0, 1): 3}


@pytest.mark.parametrize("assignment", [[0, 2, 2, 0], [1, 1, 2, 2], [0, 0, 1]])
def test_coarsen_rejects_bad_assignment(assignment):
    with pytest.raises(InvalidPartitionError):
        coarsen(cycle4(), assignment)


def test_coarsen_relabel_invariance(rng):
    for _ in range(20):
        g = random_graph(rng, 12, 0.3)
        a = rng.integers(0, 4, size=12)
        a = np.unique(a, return_inverse=True)[1]
        perm = rng.permutation(12)
        # node i of g becomes perm[i] in h
        h = g.relabel(perm)
        b = np.empty(12, dtype=int)
        b[perm] = a
        loops = lambda x: sorted(w for (u, v), w in x.edges.items() if u == v)  # noqa: E731
        cross = lambda x: sorted(w for (u, v), w in x.edges.items() if u != v)  # noqa: E731
        assert loops(coarsen(g, a)) == loops(coarsen(h, b))
        assert cross(coarsen(g, a)) == cross(coarsen(h, b))


# ---------------------------------------------------------------- ordering

def test_bfs_weighted_path():
    # u=0, v=1, x=2 with (u,v)=3 and (v,x)=1
    g = LevelGraph(3, {(0, 1): 3, (1, 2): 1}, 1)
    assert bfs_order_community(g) == [1, 0, 2]


def test_bfs_single_node():
    assert bfs_order_community(LevelGraph(1, {}, 0)) == [0]


def test_bfs_star_ties_by_id():
    g = LevelGraph(5, {(3, 0): 1, (3, 1): 1, (3, 2): 1, (3, 4): 1}, 2)
    assert bfs_order_community(g) == [3, 0, 1, 2, 4]


def test_bfs_counts_self_loop_in_queue_key():
    # node 2 has a heavy self-loop so it is taken before node 1 despite equal links
    g = LevelGraph(3, {(0, 1): 1, (0, 2): 1, (2, 2): 4, (0, 0): 9}, 1)
    assert bfs_order_community(g) == [0, 2, 1]


def test_bfs_components_largest_first():
    g = LevelGraph(5, {(0, 1): 1, (2, 3): 1, (3, 4): 1}, 2)
    order = bfs_order_community(g)
    assert set(order[:3]) == {2, 3, 4} and set(order[3:]) == {0, 1}


def test_bfs_empty_community():
    with pytest.raises(GraphError):
        bfs_order_community(LevelGraph(2, {}, 0), nodes=[])


def test_bfs_deterministic(rng):
    g = random_graph(rng, 15, 0.3)
    assert bfs_order_community(g) == bfs_order_community(g)


def test_candidates():
    assert candidate_edges_at_step(4, t=3, leaf=True) == [(3, 0), (3, 1), (3, 2)]
    assert candidate_edges_at_step(3, t=2, leaf=False) == [(2, 0), (2, 1), (2, 2)]
    assert candidate_edges_at_step(2, t=1, leaf=True) == [(1, 0)]
    assert candidate_edges_at_step(2, t=0, leaf=False) == [(0, 0)]
    with pytest.raises(GraphError):
        candidate_edges_at_step(3, t=0, leaf=True)
    with pytest.raises(GraphError):
        candidate_edges_at_step(3, t=3, leaf=True)


# ---------------------------------------------------------------- hierarchy

def test_build_two_triangles():
    g = two_triangles_bridge()
    hg = build_hg(g, [[0, 0, 0, 1, 1, 1], [0, 0]])
    assert hg.depth == 2
    assert [lv.total_weight for lv in hg.levels] == [7, 7, 7]
    assert hg.levels[1].edges == {(0, 0): 3, (1, 1): 3, (0, 1): 1}
    assert hg.parents[1] == (0, 0, 0, 1, 1, 1)


def test_build_depth_zero():
    hg = build_hg(LevelGraph(1, {}, 0), [])
    assert hg.depth == 0 and hg.w0 == 0


def test_leaf_labels_map_back_to_input():
    g = two_triangles_bridge().relabel([5, 3, 1, 0, 2, 4])
    hg = build_hg(g, [[1, 0, 0, 1, 0, 1], [0, 0]])
    back = hg.leaf.relabel(hg.leaf_labels)
    assert back.edges == g.edges


def test_communities_contiguous_and_bipartites():
    g = two_triangles_bridge()
    hg = build_hg(g, [[0, 0, 0, 1, 1, 1], [0, 0]])
    comms = hg.communities(2)
    assert [c.nodes for c in comms] == [(0, 1, 2), (3, 4, 5)]
    assert sum(c.total_weight for c in comms) == 6
    (b,) = hg.bipartites(2)
    assert b.parent_edge == (0, 1) and b.total_weight == 1
    assert all(hg.parents[1][u] != hg.parents[1][v] for u, v in b.edges)


def test_build_rejects_stack_not_reaching_root():
    with pytest.raises(InvalidPartitionError):
        build_hg(two_triangles_bridge(), [[0, 0, 0, 1, 1, 1]])


def test_validate_catches_tampering():
    hg = build_hg(two_triangles_bridge(), [[0, 0, 0, 1, 1, 1], [0, 0]])
    mid = LevelGraph(2, {(0, 0): 4, (1, 1): 2, (0, 1): 1}, 1)
    bad = HierarchicalGraph((hg.levels[0], mid, hg.levels[2]), hg.parents)
    with pytest.raises(ConsistencyError):
        validate_hg(bad)


def test_conservation_random(rng):
    for _ in range(100):
        g = random_graph(rng, int(rng.integers(2, 25)), float(rng.uniform(0.1, 0.6)))
        stack = random_partition_stack(g.node_count, int(rng.integers(1, 4)), rng)
        hg = build_hg(g, stack)
        assert all(lv.total_weight == g.total_weight for lv in hg.levels)
        validate_hg(hg)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 14), st.integers(0, 10_000), st.integers(1, 3))
def test_hierarchy_invariants_property(n, seed, depth):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, 0.4)
    hg = build_hg(g, random_partition_stack(n, depth, rng))
    validate_hg(hg)
    assert hg.depth == depth
    for l in range(1, depth + 1):
        for p, a, b in hg.community_slices(l):
            assert hg.levels[l - 1].self_loop(p) == hg.community(l, p).total_weight


# ---------------------------------------------------------------- I/O

def test_edge_list_round_trip(tmp_path, rng):
    graphs = [random_graph(rng, int(rng.integers(1, 12)), 0.3) for _ in range(6)]
    graphs.append(LevelGraph(4, {(0, 1): 1}, 0))  # trailing isolated nodes
    path = tmp_path / "g.txt"
    write_edge_lists(graphs, path)
    back = read_edge_lists(path)
    assert back == graphs


def test_edge_list_error_has_line_number():
    with pytest.raises(GraphError, match="line 3"):
        parse_edge_lists("0 1 1\n1 2 1\n1 x 1\n")


def test_hg_json_round_trip(tmp_path):
    hg = build_hg(two_triangles_bridge(), [[0, 0, 0, 1, 1, 1], [0, 0]])
    path = tmp_path / "hg.jsonl"
    write_hg_jsonl([hg, hg], path)
    back = read_hg_jsonl(path)
    assert back[0].levels == hg.levels and back[1].parents == hg.parents
    doc = json.loads(path.read_text().splitlines()[0])
    assert set(doc) >= {"levels", "parents"}
    assert doc["levels"][0] == {"n": 1, "edges": [[0, 0, 7]]}
