"""Graph statistics and MMD scoring of generated sets against references.

Histogram conventions: degree over ``0..max degree``, clustering in 100
bins on [0, 1], normalized-Laplacian spectrum in 200 bins on [0, 2].  Orbit
statistics are per-node counts of the eleven orbits of connected 4-node
graphlets (path, star, cycle, paw, diamond, K4), averaged over nodes.
"""
from __future__ import annotations

import csv
import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .graph import GraphError, LevelGraph
from .partition import louvain

CLUSTERING_BINS = 100
SPECTRUM_BINS = 200
METRICS = ("degree", "clustering", "orbit", "spectral")
KERNELS = ("tv", "gaussian-emd")

# graphlet names in orbit order; each entry lists its orbits
GRAPHLETS = ("path", "star", "cycle", "paw", "diamond", "clique")
ORBITS = 11

# bandwidths carried over from the usual evaluation lineage; orbits use a
# plain Gaussian on mean counts
DEFAULT_SIGMA = {"degree": 1.0, "clustering": 0.1, "orbit": 30.0, "spectral": 1.0}


@dataclass
class GraphStats:
    degree: np.ndarray
    clustering: np.ndarray
    orbit: np.ndarray
    spectral: np.ndarray
    eigenvalues: np.ndarray
    graphlets: np.ndarray

    def metric(self, name: str) -> np.ndarray:
        return getattr(self, name)


@dataclass
class MMDResult:
    metric: str
    value: float
    kernel: str
    sigma: float


# ----------------------------------------------------------------- statistics

def _simple_adjacency(g: LevelGraph) -> np.ndarray:
    if g.node_count == 0:
        raise GraphError("empty graph")
    if not g.is_simple():
        raise GraphError("graph statistics need a simple graph")
    a = np.zeros((g.node_count, g.node_count))
    for u, v in g.edges:
        a[u, v] = a[v, u] = 1.0
    return a


def degree_histogram(g: LevelGraph) -> np.ndarray:
    deg = _simple_adjacency(g).sum(1).astype(int)
    h = np.bincount(deg, minlength=int(deg.max()) + 1).astype(float)
    return h / h.sum()


def local_clustering(a: np.ndarray) -> np.ndarray:
    deg = a.sum(1)
    tri = np.einsum("ij,jk,ki->i", a, a, a) / 2.0
    pairs = deg * (deg - 1) / 2.0
    return np.divide(tri, pairs, out=np.zeros_like(tri), where=pairs > 0)


def clustering_histogram(g: LevelGraph, bins: int = CLUSTERING_BINS) -> np.ndarray:
    h, _ = np.histogram(local_clustering(_simple_adjacency(g)), bins=bins, range=(0.0, 1.0))
    return h / h.sum()


def laplacian_spectrum(g: LevelGraph) -> np.ndarray:
    """Sorted eigenvalues of ``I - D^-1/2 A D^-1/2`` (isolated nodes get a zero row)."""
    a = _simple_adjacency(g)
    deg = a.sum(1)
    inv = np.divide(1.0, np.sqrt(deg), out=np.zeros_like(deg), where=deg > 0)
    lap = np.diag((deg > 0).astype(float)) - inv[:, None] * a * inv[None, :]
    return np.sort(np.linalg.eigvalsh(lap))


def spectrum_histogram(g: LevelGraph, bins: int = SPECTRUM_BINS) -> np.ndarray:
    ev = np.clip(laplacian_spectrum(g), 0.0, 2.0)
    h, _ = np.histogram(ev, bins=bins, range=(0.0, 2.0))
    return h / h.sum()


def _classify(nodes: Sequence[int], adj: Sequence[set]) -> tuple[int, list[int]]:
    """Graphlet index and per-node orbit index (0..10) of a connected 4-node set."""
    deg = [sum(1 for o in nodes if o != v and o in adj[v]) for v in nodes]
    m = sum(deg) // 2
    if m == 3:
        if max(deg) == 3:
            return 1, [3 if d == 3 else 2 for d in deg]
        return 0, [0 if d == 1 else 1 for d in deg]
    if m == 4:
        if max(deg) == 2:
            return 2, [4] * 4
        return 3, [{1: 5, 2: 6, 3: 7}[d] for d in deg]
    if m == 5:
        return 4, [8 if d == 2 else 9 for d in deg]
    return 5, [10] * 4


def _adjacency_sets(g: LevelGraph) -> list[set]:
    _simple_adjacency(g)
    adj = [set() for _ in range(g.node_count)]
    for u, v in g.edges:
        adj[u].add(v)
        adj[v].add(u)
    return adj


def connected_quads(adj: Sequence[set]):
    """Each connected 4-node subset exactly once (ESU enumeration)."""
    def extend(sub, ext, root):
        if len(sub) == 4:
            yield tuple(sub)
            return
        ext = list(ext)
        while ext:
            w = ext.pop()
            excl = set().union(*(adj[s] for s in sub)) | set(sub)
            new = [u for u in adj[w] if u > root and u not in excl]
            yield from extend(sub + [w], ext + new, root)

    for v in range(len(adj)):
        yield from extend([v], [u for u in adj[v] if u > v], v)


def orbit_counts(g: LevelGraph) -> tuple[np.ndarray, np.ndarray]:
    """``(per-node orbit counts (n, 11), graphlet counts (6,))``."""
    adj = _adjacency_sets(g)
    per_node = np.zeros((g.node_count, ORBITS), dtype=np.int64)
    graphlets = np.zeros(len(GRAPHLETS), dtype=np.int64)
    for quad in connected_quads(adj):
        kind, orbs = _classify(quad, adj)
        graphlets[kind] += 1
        for v, o in zip(quad, orbs):
            per_node[v, o] += 1
    return per_node, graphlets


def brute_force_orbit_counts(g: LevelGraph) -> tuple[np.ndarray, np.ndarray]:
    """Reference counter over all 4-subsets; only for small graphs."""
    adj = _adjacency_sets(g)
    per_node = np.zeros((g.node_count, ORBITS), dtype=np.int64)
    graphlets = np.zeros(len(GRAPHLETS), dtype=np.int64)
    for quad in itertools.combinations(range(g.node_count), 4):
        seen, stack = {quad[0]}, [quad[0]]
        while stack:
            v = stack.pop()
            for u in quad:
                if u not in seen and u in adj[v]:
                    seen.add(u)
                    stack.append(u)
        if len(seen) < 4:
            continue
        kind, orbs = _classify(quad, adj)
        graphlets[kind] += 1
        for v, o in zip(quad, orbs):
            per_node[v, o] += 1
    return per_node, graphlets


def graph_stats(g: LevelGraph) -> GraphStats:
    per_node, graphlets = orbit_counts(g)
    ev = laplacian_spectrum(g)
    spec, _ = np.histogram(np.clip(ev, 0.0, 2.0), bins=SPECTRUM_BINS, range=(0.0, 2.0))
    return GraphStats(degree=degree_histogram(g), clustering=clustering_histogram(g),
                      orbit=per_node.mean(0), spectral=spec / spec.sum(), eigenvalues=ev,
                      graphlets=graphlets)


def stats_for(graphs: Sequence[LevelGraph], workers: int = 1) -> list[GraphStats]:
    if workers > 1 and len(graphs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(graph_stats, graphs))
    return [graph_stats(g) for g in graphs]


# ----------------------------------------------------------------------- MMD

def _align(hists: Sequence[np.ndarray], pad: bool) -> np.ndarray:
    sizes = {np.asarray(h).size for h in hists}
    if len(sizes) > 1 and not pad:
        raise ValueError(f"histograms have different supports: {sorted(sizes)}")
    width = max(sizes)
    out = np.zeros((len(hists), width))
    for i, h in enumerate(hists):
        out[i, :np.asarray(h).size] = h
    return out


def _normalize(x: np.ndarray) -> np.ndarray:
    s = x.sum(1, keepdims=True)
    return np.divide(x, s, out=np.zeros_like(x), where=s > 0)


def tv_kernel(x: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    d = 0.5 * np.abs(x[:, None, :] - y[None, :, :]).sum(-1)
    return np.exp(-d * d / (2 * sigma * sigma))


def emd_kernel(x: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    # 1-d earth mover's distance with unit bin spacing
    d = np.abs(np.cumsum(x, 1)[:, None, :] - np.cumsum(y, 1)[None, :, :]).sum(-1)
    return np.exp(-d * d / (2 * sigma * sigma))


def gaussian_kernel(x: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    d2 = ((x[:, None, :] - y[None, :, :]) ** 2).sum(-1)
    return np.exp(-d2 / (2 * sigma * sigma))


def mmd(set_a, set_b, kernel: Callable | str = "tv", sigma: float = 1.0,
        normalize: bool = True, pad: bool = True) -> float:
    """Squared MMD with the plug-in (V-statistic) estimator, clamped at zero.

    Identical multisets give exactly zero and the value is symmetric in its
    arguments.
    """
    if len(set_a) == 0 or len(set_b) == 0:
        raise ValueError("MMD needs two nonempty sets")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if isinstance(kernel, str):
        kernel = {"tv": tv_kernel, "gaussian-emd": emd_kernel, "gaussian": gaussian_kernel}[kernel]
    both = _align(list(set_a) + list(set_b), pad)
    if normalize:
        both = _normalize(both)
    x, y = both[:len(set_a)], both[len(set_a):]
    val = kernel(x, x, sigma).mean() + kernel(y, y, sigma).mean() - 2 * kernel(x, y, sigma).mean()
    return max(float(val), 0.0)


def mmd_tv(set_a, set_b, sigma: float = 1.0) -> float:
    return mmd(set_a, set_b, "tv", sigma)


def metric_mmd(metric: str, stats_a: Sequence[GraphStats], stats_b: Sequence[GraphStats],
               kernel: str = "tv", sigma: float | None = None) -> MMDResult:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; choose from {KERNELS}")
    sigma = DEFAULT_SIGMA[metric] if sigma is None else sigma
    a = [s.metric(metric) for s in stats_a]
    b = [s.metric(metric) for s in stats_b]
    if metric == "orbit":
        return MMDResult(metric, mmd(a, b, "gaussian", sigma, normalize=False, pad=False), "gaussian", sigma)
    return MMDResult(metric, mmd(a, b, kernel, sigma, pad=metric == "degree"), kernel, sigma)


# ---------------------------------------------------------------- modularity

def louvain_modularity(g: LevelGraph, seed: int = 0) -> float:
    if g.total_weight == 0:
        return 0.0
    return louvain(g, seed)[-1].modularity


def modularity_report(sample_set: Sequence[LevelGraph], reference_set: Sequence[LevelGraph],
                      seed: int = 0) -> dict:
    if not sample_set or not reference_set:
        raise ValueError("modularity report needs two nonempty sets")

    def summary(graphs):
        q = np.array([louvain_modularity(g, seed) for g in graphs])
        return {"mean": float(q.mean()), "std": float(q.std()), "count": int(q.size),
                "values": [round(float(x), 6) for x in q]}

    return {"samples": summary(sample_set), "reference": summary(reference_set)}


# -------------------------------------------------------------------- report

def evaluate(samples: Sequence[LevelGraph], reference: Sequence[LevelGraph],
             metrics: Sequence[str] = METRICS, kernel: str = "tv",
             sigmas: dict | None = None, seed: int = 0, workers: int = 1):
    """Return ``(report dict, sample stats, reference stats)``."""
    sigmas = sigmas or {}
    sa = stats_for(samples, workers)
    sb = stats_for(reference, workers)
    report = {
        "num_samples": len(samples),
        "num_reference": len(reference),
        "mmd": {m: asdict(metric_mmd(m, sa, sb, kernel, sigmas.get(m))) for m in metrics},
        "modularity": modularity_report(samples, reference, seed),
    }
    return report, sa, sb


STATS_COLUMNS = ("set", "index", "nodes", "edges", "mean_degree", "mean_clustering",
                 "spectral_gap", *GRAPHLETS)


def stats_rows(name: str, graphs: Sequence[LevelGraph], stats: Sequence[GraphStats]):
    for i, (g, s) in enumerate(zip(graphs, stats)):
        deg = np.arange(s.degree.size) @ s.degree
        clus = local_clustering(_simple_adjacency(g)).mean()
        nz = s.eigenvalues[s.eigenvalues > 1e-9]
        row = {"set": name, "index": i, "nodes": g.node_count, "edges": len(g.edges),
               "mean_degree": round(float(deg), 6), "mean_clustering": round(float(clus), 6),
               "spectral_gap": round(float(nz[0]) if nz.size else 0.0, 6)}
        row.update(dict(zip(GRAPHLETS, map(int, s.graphlets))))
        yield row


def write_stats_csv(path, sets: dict) -> None:
    """``sets`` maps a set name to ``(graphs, stats)``."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=STATS_COLUMNS)
        w.writeheader()
        for name, (graphs, stats) in sets.items():
            w.writerows(stats_rows(name, graphs, stats))


def erdos_renyi_like(graphs: Sequence[LevelGraph], rng: np.random.Generator) -> list[LevelGraph]:
    """One G(n, p) graph per input with the same node count and edge density."""
    out = []
    for g in graphs:
        n = g.node_count
        p = len(g.edges) / max(n * (n - 1) / 2, 1)
        iu, ju = np.triu_indices(n, 1)
        keep = rng.random(iu.size) < p
        out.append(LevelGraph(n, {(int(a), int(b)): 1 for a, b in zip(iu[keep], ju[keep])}, 0))
    return out


def worker_count() -> int:
    env = os.environ.get("HIGEN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"HIGEN_THREADS must be an integer, got {env!r}") from None
    return 1
