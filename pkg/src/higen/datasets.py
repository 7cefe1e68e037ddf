"""Synthetic planted-partition graphs, edge-list ingestion and seeded splits."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .graph import LevelGraph, read_edge_lists, write_edge_lists


@dataclass(frozen=True)
class SbmSpec:
    num_graphs: int = 200
    communities: tuple[int, int] = (2, 5)
    community_size: tuple[int, int] = (20, 40)
    p_intra: float = 0.3
    p_inter: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "communities", tuple(self.communities))
        object.__setattr__(self, "community_size", tuple(self.community_size))
        for name in ("p_intra", "p_inter"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        for name in ("communities", "community_size"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} range must be nonempty and positive, got {(lo, hi)}")
        if self.num_graphs < 0:
            raise ValueError("num_graphs must be non-negative")

    def as_dict(self) -> dict:
        return asdict(self)


def _one_sbm(spec: SbmSpec, rng: np.random.Generator):
    k = int(rng.integers(spec.communities[0], spec.communities[1] + 1))
    sizes = rng.integers(spec.community_size[0], spec.community_size[1] + 1, size=k)
    blocks = np.repeat(np.arange(k), sizes)
    n = blocks.size
    iu, ju = np.triu_indices(n, 1)
    p = np.where(blocks[iu] == blocks[ju], spec.p_intra, spec.p_inter)
    keep = rng.random(iu.size) < p
    g = LevelGraph(n, {(int(a), int(b)): 1 for a, b in zip(iu[keep], ju[keep])}, 0)
    comps = g.connected_components()
    if len(comps) > 1:
        big = sorted(max(comps, key=len))
        g = g.subgraph(big)
        blocks = blocks[big]
    return g, blocks


def synth_sbm(spec: SbmSpec, rng: np.random.Generator | None = None, return_blocks: bool = False):
    """Planted-partition graphs; a disconnected draw keeps its largest component.

    With ``return_blocks`` the planted block of every kept node is returned as
    a second list.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    graphs, blocks = [], []
    for _ in range(spec.num_graphs):
        g, b = _one_sbm(spec, rng)
        graphs.append(g)
        blocks.append(b)
    return (graphs, blocks) if return_blocks else graphs


def load_dataset(path) -> list[LevelGraph]:
    return read_edge_lists(path)


def save_dataset(graphs: Sequence[LevelGraph], path) -> None:
    write_edge_lists(graphs, path)


def split(dataset: Sequence, ratios: Sequence[float] = (0.8, 0.2), seed: int = 0) -> tuple[list, ...]:
    """Seeded shuffle cut into ``len(ratios)`` parts; sizes follow rounded cumulative ratios."""
    r = np.asarray(ratios, dtype=float)
    if r.size == 0 or np.any(r < 0) or r.sum() <= 0:
        raise ValueError(f"invalid split ratios {tuple(ratios)}")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    cuts = np.rint(np.cumsum(r / r.sum()) * len(dataset)).astype(int)
    cuts[-1] = len(dataset)
    parts, start = [], 0
    for c in cuts:
        parts.append([dataset[i] for i in perm[start:c]])
        start = c
    return tuple(parts)


def train_val_test(dataset: Sequence, seed: int = 0, test: float = 0.2, val: float = 0.2):
    """80/20 train/test, then ``val`` of the training part held out for validation."""
    train, rest = split(dataset, (1 - test, test), seed)
    fit, held = split(train, (1 - val, val), seed + 1)
    return fit, held, rest


def toy_graph() -> LevelGraph:
    """Two triangles joined by one bridge edge (6 nodes, 7 edges)."""
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]
    return LevelGraph(6, {e: 1 for e in edges}, 0)
