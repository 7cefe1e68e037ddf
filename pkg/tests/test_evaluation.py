import itertools
import math

import networkx as nx
import numpy as np
import pytest

from higen.datasets import SbmSpec, synth_sbm
from higen.evaluation import (DEFAULT_SIGMA, brute_force_orbit_counts, clustering_histogram, degree_histogram,
                              erdos_renyi_like, evaluate, graph_stats, laplacian_spectrum, local_clustering,
                              metric_mmd, mmd, mmd_tv, modularity_report, orbit_counts, spectrum_histogram,
                              stats_for, worker_count, write_stats_csv)
from higen.graph import GraphError, LevelGraph

from conftest import random_graph


def G(n, edges):
    return LevelGraph(n, {e: 1 for e in edges}, 0)


K3 = G(3, [(0, 1), (1, 2), (0, 2)])
P2 = G(2, [(0, 1)])
C4 = G(4, [(0, 1), (1, 2), (2, 3), (0, 3)])


def to_nx(g):
    h = nx.Graph()
    h.add_nodes_from(range(g.node_count))
    h.add_edges_from(g.edges)
    return h


# ------------------------------------------------------------ statistics

def test_triangle():
    assert np.allclose(local_clustering(K3.adjacency().astype(float)), 1.0)
    assert np.allclose(laplacian_spectrum(K3), [0, 1.5, 1.5], atol=1e-9)
    h = clustering_histogram(K3)
    assert h.size == 100 and h[-1] == 1.0


def test_path_spectrum():
    assert np.allclose(laplacian_spectrum(P2), [0, 2], atol=1e-9)


def test_cycle_orbits():
    per_node, graphlets = orbit_counts(C4)
    assert list(graphlets) == [0, 0, 1, 0, 0, 0]
    assert np.all(per_node[:, 4] == 1) and per_node.sum() == 4
    bf = brute_force_orbit_counts(C4)
    assert np.array_equal(per_node, bf[0]) and np.array_equal(graphlets, bf[1])


def test_small_graphlet_orbits():
    star = G(4, [(0, 1), (0, 2), (0, 3)])
    per_node, graphlets = orbit_counts(star)
    assert list(graphlets) == [0, 1, 0, 0, 0, 0]
    assert list(per_node[:, 3]) == [1, 0, 0, 0] and list(per_node[1:, 2]) == [1, 1, 1]
    k4 = G(4, list(itertools.combinations(range(4), 2)))
    assert list(orbit_counts(k4)[1]) == [0, 0, 0, 0, 0, 1]
    paw = G(4, [(0, 1), (1, 2), (0, 2), (2, 3)])
    per_node, graphlets = orbit_counts(paw)
    assert list(graphlets) == [0, 0, 0, 1, 0, 0]
    assert per_node[3, 5] == 1 and per_node[2, 7] == 1 and per_node[0, 6] == per_node[1, 6] == 1
    diamond = G(4, [(0, 1), (1, 2), (0, 2), (2, 3), (1, 3)])
    per_node, graphlets = orbit_counts(diamond)
    assert list(graphlets) == [0, 0, 0, 0, 1, 0]
    assert per_node[1, 9] == per_node[2, 9] == 1 and per_node[0, 8] == per_node[3, 8] == 1


def test_orbits_match_brute_force(rng):
    for _ in range(60):
        n = int(rng.integers(1, 31))
        g = random_graph(rng, n, float(rng.uniform(0.05, 0.5)))
        a, b = orbit_counts(g), brute_force_orbit_counts(g)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_graphlet_count_matches_networkx_subgraphs(rng):
    g = random_graph(rng, 10, 0.4)
    h = to_nx(g)
    connected = sum(nx.is_connected(h.subgraph(q)) for q in itertools.combinations(range(10), 4))
    assert orbit_counts(g)[1].sum() == connected


def test_clustering_and_spectrum_match_networkx(rng):
    for _ in range(10):
        g = random_graph(rng, 15, 0.3)
        h = to_nx(g)
        ref = nx.clustering(h)
        assert np.allclose(local_clustering(g.adjacency().astype(float)), [ref[i] for i in range(15)])
        assert np.allclose(laplacian_spectrum(g), np.sort(nx.normalized_laplacian_spectrum(h)), atol=1e-9)


def test_histograms_sum_to_one(rng):
    g = random_graph(rng, 20, 0.2)
    for h in (degree_histogram(g), clustering_histogram(g), spectrum_histogram(g)):
        assert h.sum() == pytest.approx(1.0)
    assert spectrum_histogram(g).size == 200


def test_degree_histogram_support():
    star = G(4, [(0, 1), (0, 2), (0, 3)])
    assert np.allclose(degree_histogram(star), [0, 0.75, 0, 0.25])


def test_stats_isomorphism_invariant(rng):
    g = random_graph(rng, 12, 0.35)
    perm = rng.permutation(12)
    a, b = graph_stats(g), graph_stats(g.relabel(perm))
    for name in ("degree", "clustering", "orbit", "spectral", "graphlets"):
        assert np.allclose(a.metric(name), b.metric(name))
    assert np.allclose(a.eigenvalues, b.eigenvalues)


def test_stats_errors():
    with pytest.raises(GraphError):
        graph_stats(LevelGraph(0, {}, 0))
    with pytest.raises(GraphError):
        graph_stats(LevelGraph(2, {(0, 1): 2}, 0))


def test_parallel_stats_equal_serial(rng):
    graphs = [random_graph(rng, 10, 0.3) for _ in range(4)]
    a, b = stats_for(graphs, 1), stats_for(graphs, 2)
    assert all(np.array_equal(x.degree, y.degree) and np.array_equal(x.orbit, y.orbit) for x, y in zip(a, b))


# ------------------------------------------------------------ MMD

def test_mmd_two_point():
    assert mmd_tv([[1, 0]], [[0, 1]]) == pytest.approx(2 - 2 * math.exp(-0.5), abs=1e-9)


def test_mmd_identical_and_symmetric(rng):
    a = [rng.dirichlet(np.ones(5)) for _ in range(6)]
    b = [rng.dirichlet(np.ones(5)) for _ in range(4)]
    assert mmd_tv(a, a) == 0.0
    assert mmd_tv(a, b) == pytest.approx(mmd_tv(b, a), abs=1e-15)
    assert mmd(a, b, "gaussian-emd") == pytest.approx(mmd(b, a, "gaussian-emd"), abs=1e-15)
    assert mmd_tv(a, b) >= 0


def test_mmd_pads_different_supports():
    assert mmd_tv([[0.5, 0.5]], [[0.5, 0.5, 0.0]]) == 0.0
    with pytest.raises(ValueError):
        mmd([[1.0]], [[0.5, 0.5]], pad=False)


def test_mmd_errors():
    with pytest.raises(ValueError):
        mmd_tv([], [[1.0]])
    with pytest.raises(ValueError):
        mmd_tv([[1.0]], [[1.0]], sigma=0)


def test_emd_kernel_hand_value():
    # unit mass moved by one bin: EMD = 1
    assert mmd([[1, 0]], [[0, 1]], "gaussian-emd") == pytest.approx(2 - 2 * math.exp(-0.5), abs=1e-12)
    assert mmd([[1, 0, 0]], [[0, 0, 1]], "gaussian-emd") == pytest.approx(2 - 2 * math.exp(-2), abs=1e-12)


def test_rewiring_increases_degree_mmd(rng):
    base = [random_graph(rng, 20, 0.2) for _ in range(10)]
    sa = stats_for(base)
    values = []
    for level in (0, 10, 40):
        trials = []
        for _ in range(20):
            moved = []
            for g in base:
                edges = set(g.edges)
                # move edges onto node 0 to skew the degree distribution
                for e in list(edges)[:level]:
                    edges.discard(e)
                    cand = [(0, v) for v in range(1, g.node_count) if (0, v) not in edges]
                    if cand:
                        edges.add(cand[int(rng.integers(len(cand)))])
                moved.append(G(g.node_count, edges))
            trials.append(metric_mmd("degree", sa, stats_for(moved)).value)
        values.append(np.mean(trials))
    assert values[0] == 0.0 and values[0] <= values[1] <= values[2]


def test_metric_mmd_defaults_and_errors(rng):
    stats = stats_for([random_graph(rng, 10, 0.3) for _ in range(3)])
    for m in ("degree", "clustering", "orbit", "spectral"):
        r = metric_mmd(m, stats, stats)
        assert r.value == 0.0 and r.sigma == DEFAULT_SIGMA[m]
    assert metric_mmd("orbit", stats, stats).kernel == "gaussian"
    with pytest.raises(ValueError):
        metric_mmd("triangles", stats, stats)
    with pytest.raises(ValueError):
        metric_mmd("degree", stats, stats, kernel="rbf")


# ------------------------------------------------------------ modularity and report

def test_modularity_report():
    planted = synth_sbm(SbmSpec(8, (3, 3), (10, 10), 0.6, 0.02, seed=1))
    er = erdos_renyi_like(planted, np.random.default_rng(0))
    rep = modularity_report(planted, er)
    assert rep["samples"]["mean"] > rep["reference"]["mean"]
    assert all(-0.5 <= q <= 1 for q in rep["samples"]["values"] + rep["reference"]["values"])
    same = modularity_report(planted, planted)
    assert same["samples"] == same["reference"]
    with pytest.raises(ValueError):
        modularity_report([], planted)


def test_erdos_renyi_like_density(rng):
    graphs = [random_graph(rng, 30, 0.2) for _ in range(50)]
    er = erdos_renyi_like(graphs, rng)
    assert [g.node_count for g in er] == [g.node_count for g in graphs]
    assert np.mean([len(g.edges) for g in er]) == pytest.approx(np.mean([len(g.edges) for g in graphs]), rel=0.05)


def test_evaluate_and_csv(tmp_path, rng):
    a = [random_graph(rng, 12, 0.3) for _ in range(3)]
    b = [random_graph(rng, 12, 0.3) for _ in range(3)]
    report, sa, sb = evaluate(a, b, metrics=("degree", "orbit"))
    assert set(report["mmd"]) == {"degree", "orbit"}
    assert report["num_samples"] == 3
    write_stats_csv(tmp_path / "s.csv", {"samples": (a, sa), "reference": (b, sb)})
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert len(lines) == 7 and lines[0].startswith("set,index,nodes")


def test_worker_count(monkeypatch):
    monkeypatch.delenv("HIGEN_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("HIGEN_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("HIGEN_THREADS", "many")
    with pytest.raises(ValueError):
        worker_count()
