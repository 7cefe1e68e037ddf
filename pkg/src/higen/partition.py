"""Modularity and Louvain hierarchical clustering on weighted graphs.

Self-loops follow the usual weighted-graph convention: a self-loop of weight
``w`` adds ``w`` to the internal weight of its community and ``2w`` to the
node's degree.  Under this convention coarsening a graph preserves the
modularity of the induced partition, so Louvain passes can be run on the
aggregated graphs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import GraphError, LevelGraph, coarsen


@dataclass(frozen=True)
class PartitionResult:
    assignment: tuple[int, ...]
    modularity: float
    pass_count: int

    @property
    def num_clusters(self) -> int:
        return max(self.assignment) + 1 if self.assignment else 0


def relabel_contiguous(assignment: Sequence[int]) -> np.ndarray:
    """Renumber cluster ids 0.. in order of first appearance."""
    seen: dict[int, int] = {}
    out = np.empty(len(assignment), dtype=np.int64)
    for i, c in enumerate(assignment):
        out[i] = seen.setdefault(int(c), len(seen))
    return out


def modularity(g: LevelGraph, assignment: Sequence[int]) -> float:
    a = np.asarray(assignment, dtype=np.int64)
    if a.shape != (g.node_count,):
        raise GraphError("assignment must cover every node")
    m = g.total_weight
    if m == 0:
        raise GraphError("modularity is undefined on a graph without edges")
    k = int(a.max()) + 1
    internal = np.zeros(k)
    tot = np.zeros(k)
    for (u, v), w in g.edges.items():
        tot[a[u]] += w
        tot[a[v]] += w
        if a[u] == a[v]:
            internal[a[u]] += w
    return float(np.sum(internal / m - (tot / (2.0 * m)) ** 2))


def _local_moves(g: LevelGraph, rng: np.random.Generator, tol: float = 1e-12) -> tuple[np.ndarray, bool]:
    """One Louvain local-move phase on ``g``; returns (assignment, moved)."""
    n = g.node_count
    m = float(g.total_weight)
    nbrs = g.neighbors()
    k = g.strength().astype(float)
    comm = np.arange(n)
    tot = k.copy()
    moved_any = False
    improved = True
    while improved:
        improved = False
        for i in rng.permutation(n):
            ci = comm[i]
            links: dict[int, float] = {}
            for j, w in nbrs[i].items():
                if j != i:
                    links[comm[j]] = links.get(comm[j], 0.0) + w
            tot[ci] -= k[i]
            # gain of inserting isolated i into community c (scaled by m)
            stay = links.get(ci, 0.0) - tot[ci] * k[i] / (2.0 * m)
            best_c, best_gain = ci, stay
            for c in sorted(links):
                gain = links[c] - tot[c] * k[i] / (2.0 * m)
                if gain > best_gain + tol:
                    best_c, best_gain = c, gain
            tot[best_c] += k[i]
            if best_c != ci:
                comm[i] = best_c
                improved = True
                moved_any = True
    return relabel_contiguous(comm), moved_any


def louvain(g: LevelGraph, seed=None) -> list[PartitionResult]:
    """Run Louvain passes until no local move improves modularity.

    Returns one :class:`PartitionResult` per pass that changed the partition,
    each expressed on the nodes of ``g`` (coarser passes nest inside finer
    ones).  A graph where no move helps yields a single identity pass.
    """
    if g.total_weight == 0:
        raise GraphError("Louvain needs at least one edge")
    rng = np.random.default_rng(seed)
    current = g
    leaf_assign = np.arange(g.node_count)
    results: list[PartitionResult] = []
    while True:
        local, moved = _local_moves(current, rng)
        if not moved:
            break
        leaf_assign = local[leaf_assign]
        results.append(PartitionResult(tuple(int(x) for x in leaf_assign),
                                       modularity(g, leaf_assign), len(results) + 1))
        current = coarsen(current, local)
        if current.node_count == 1:
            break
    if not results:
        ident = tuple(range(g.node_count))
        results.append(PartitionResult(ident, modularity(g, ident), 1))
    return results


def _is_refinement(fine: np.ndarray, coarse: np.ndarray) -> bool:
    lookup: dict[int, int] = {}
    for f, c in zip(fine, coarse):
        if lookup.setdefault(int(f), int(c)) != c:
            return False
    return True


def _step_assignment(fine: np.ndarray, coarse: np.ndarray) -> np.ndarray:
    """Express ``coarse`` (on leaf nodes) as an assignment of ``fine``'s clusters."""
    out = np.empty(int(fine.max()) + 1, dtype=np.int64)
    out[fine] = coarse
    return out


def build_partition_stack(g: LevelGraph, depth: int, seed=None,
                          passes: Sequence[PartitionResult] | None = None) -> list[np.ndarray]:
    """Bottom-up assignment stack of length ``depth`` ending in a single cluster.

    Depth 2 keeps the coarsest non-trivial Louvain partition.  Deeper stacks
    also keep the partitions from the second Louvain pass upwards, and any
    shortfall is padded with identity partitions just below the root.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    n = g.node_count
    if passes is None:
        passes = louvain(g, seed) if g.total_weight > 0 else []
    nontrivial = [np.asarray(p.assignment) for p in passes if 1 < p.num_clusters < n]

    kept: list[np.ndarray] = []
    if depth >= 2 and nontrivial:
        coarsest = nontrivial[-1]
        middle = nontrivial[1:-1][: depth - 2]
        kept = middle + [coarsest]
    identity = np.arange(n)
    while len(kept) < depth - 1:
        kept.append(kept[-1].copy() if kept else identity.copy())
    chain = [identity] + kept + [np.zeros(n, dtype=np.int64)]
    stack = []
    for fine, coarse in zip(chain[:-1], chain[1:]):
        if not _is_refinement(fine, coarse):
            raise GraphError("Louvain levels are not nested")
        stack.append(_step_assignment(fine, coarse))
    return stack
