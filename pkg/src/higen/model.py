"""Per-level networks, teacher-forcing inputs, and checkpoints.

Every level ``l = 1..L`` owns its own parent-graph encoder, community
encoder and head, and bipartite encoder and head; no parameters are shared
across levels.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .encoder import (DTYPE, CommunityEncoder, GraphInput, LevelEncoder, community_feature_dim,
                      community_step_features, level_feature_dim, level_features, make_batch)
from .graph import HierarchicalGraph, LevelGraph, canon
from .heads import BipartiteHead, CommunityRowHead, MixtureHeadOutput, segment_sum

CHECKPOINT_VERSION = 1
VARIANTS = ("higen-m", "higen")
BIPARTITE_MODES = ("joint", "sequential")


@dataclass
class ModelConfig:
    depth: int = 2
    hidden_dim: int = 64
    layers: int = 8
    k_eig: int = 8
    k_rw: int = 8
    mixtures: int = 20
    variant: str = "higen-m"
    leaf_activation: str = "multihot"
    bipartite_mode: str = "joint"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.bipartite_mode not in BIPARTITE_MODES:
            raise ValueError(f"bipartite mode must be one of {BIPARTITE_MODES}")
        if self.leaf_activation not in ("softmax", "multihot"):
            raise ValueError("leaf activation must be softmax or multihot")
        if min(self.depth, self.hidden_dim, self.layers, self.mixtures) < 1:
            raise ValueError("depth, hidden_dim, layers and mixtures must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RootDistribution:
    """Empirical distribution of total weights ``w0`` (node counts kept for diagnostics)."""
    w0_values: list[int]
    node_counts: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.w0_values:
            raise ValueError("root distribution needs at least one graph")

    def sample(self, rng: np.random.Generator) -> int:
        return int(self.w0_values[int(rng.integers(len(self.w0_values)))])

    def prob(self, w0: int) -> float:
        return self.w0_values.count(int(w0)) / len(self.w0_values)

    def support(self) -> dict[int, float]:
        vals, counts = np.unique(self.w0_values, return_counts=True)
        return {int(v): c / len(self.w0_values) for v, c in zip(vals, counts)}


class LevelModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.hidden_dim
        lf = level_feature_dim(cfg.k_eig, cfg.k_rw)
        self.parent_encoder = LevelEncoder(lf, d, cfg.layers)
        self.community_encoder = CommunityEncoder(community_feature_dim(cfg.k_eig, cfg.k_rw), d, cfg.layers)
        self.community_head = CommunityRowHead(d, cfg.mixtures)
        self.bipartite_encoder = LevelEncoder(lf, d, cfg.layers)
        self.bipartite_head = BipartiteHead(d, cfg.mixtures)

    def parent_embeddings(self, inputs: Sequence[GraphInput]) -> list[torch.Tensor]:
        batch = make_batch(inputs, with_mask=True)
        h = self.parent_encoder(batch)
        sizes = [g.x.shape[0] for g in inputs]
        return list(torch.split(h, sizes))

    def community_rows(self, steps: Sequence["StepInput"], ctx: torch.Tensor, mode: str) -> MixtureHeadOutput:
        batch = make_batch([s.graph for s in steps])
        h = self.community_encoder(batch)
        src, dst, is_self, seg = [], [], [], []
        off = 0
        for i, s in enumerate(steps):
            src.append(s.cand_src + off)
            dst.append(s.cand_dst + off)
            is_self.append(s.cand_src == s.cand_dst)
            seg.append(np.full(len(s.cand_src), i))
            off += s.graph.x.shape[0]
        src = torch.from_numpy(np.concatenate(src))
        dst = torch.from_numpy(np.concatenate(dst))
        self_mask = torch.from_numpy(np.concatenate(is_self))[:, None]
        # self-edge candidates use the new node's embedding directly
        edge = h[src] - torch.where(self_mask, torch.zeros_like(h[dst]), h[dst])
        pooled = segment_sum(h, batch.graph_index, len(steps))
        seg = torch.from_numpy(np.concatenate(seg))
        return self.community_head(edge, seg, pooled, ctx, mode)

    def bipartite_rows(self, graphs: Sequence[GraphInput], cands: Sequence[Sequence[tuple[np.ndarray, np.ndarray]]],
                       ctx: torch.Tensor, mode: str) -> MixtureHeadOutput:
        """``cands[g]`` lists ``(left, right)`` node arrays of each bipartite in graph ``g``;
        ``ctx`` holds one row per bipartite in the same flattened order."""
        batch = make_batch(graphs, with_mask=True)
        h = self.bipartite_encoder(batch)
        left, right, seg = [], [], []
        off, b = 0, 0
        for g, blist in zip(graphs, cands):
            for a_idx, b_idx in blist:
                left.append(a_idx + off)
                right.append(b_idx + off)
                seg.append(np.full(len(a_idx), b))
                b += 1
            off += g.x.shape[0]
        left = torch.from_numpy(np.concatenate(left))
        right = torch.from_numpy(np.concatenate(right))
        seg = torch.from_numpy(np.concatenate(seg))
        return self.bipartite_head(h[left] - h[right], seg, ctx, mode)


class HiGenModel(nn.Module):
    def __init__(self, cfg: ModelConfig, root: RootDistribution | None = None,
                 max_community: Sequence[int] | None = None):
        super().__init__()
        self.cfg = cfg
        self.levels = nn.ModuleList(LevelModel(cfg) for _ in range(cfg.depth))
        self.root = root
        self.max_community = list(max_community) if max_community else [0] * cfg.depth

    def level(self, l: int) -> LevelModel:
        return self.levels[l - 1]

    def mode(self, l: int) -> str:
        if l < self.cfg.depth:
            return "softmax"
        return "bernoulli" if self.cfg.variant == "higen" else self.cfg.leaf_activation

    def level_params(self, l: int) -> list[tuple[str, nn.Parameter]]:
        return [(f"levels.{l - 1}.{n}", p) for n, p in self.level(l).named_parameters()]

    # ------------------------------------------------------------ checkpoint

    def save(self, directory) -> str:
        os.makedirs(directory, exist_ok=True)
        tensors = {k: {"shape": list(v.shape), "data": v.detach().reshape(-1).tolist()}
                   for k, v in self.state_dict().items()}
        doc = {
            "format": "higen-checkpoint",
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.cfg),
            "root": asdict(self.root) if self.root else None,
            "max_community": self.max_community,
            "tensors": tensors,
        }
        path = os.path.join(directory, "model.json")
        with open(path, "w") as fh:
            json.dump(doc, fh)
        return path

    @classmethod
    def load(cls, path) -> "HiGenModel":
        if os.path.isdir(path):
            path = os.path.join(path, "model.json")
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format") != "higen-checkpoint" or doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path} is not a version {CHECKPOINT_VERSION} checkpoint")
        root = RootDistribution(**doc["root"]) if doc.get("root") else None
        model = cls(ModelConfig.from_dict(doc["config"]), root, doc.get("max_community"))
        state = {k: torch.tensor(v["data"], dtype=DTYPE).reshape(v["shape"]) for k, v in doc["tensors"].items()}
        model.load_state_dict(state)
        return model


# ------------------------------------------------------------ featurisation

@dataclass
class StepInput:
    """One autoregressive community step: partial graph plus candidate edges.

    ``cand_src`` is always the new node's local index; ``cand_dst`` equals it
    for the self-edge.
    """
    graph: GraphInput
    cand_src: np.ndarray
    cand_dst: np.ndarray
    remaining: int
    parent: int = 0
    u: np.ndarray | None = None


def community_step_input(t: int, edges: dict, remaining: int, total: int, leaf: bool,
                         k_eig: int, k_rw: int, parent: int = 0) -> StepInput:
    """Step ``t`` of a community whose first ``t`` nodes carry ``edges`` (position keys)."""
    g = LevelGraph(t + 1, {e: w for e, w in edges.items() if e[1] < t})
    x = community_step_features(g, remaining, total, k_eig, k_rw)
    real = np.array(list(g.edges), dtype=np.int64).reshape(-1, 2)
    real_w = np.array(list(g.edges.values()), dtype=float)
    dst = np.arange(t) if leaf else np.arange(t + 1)
    src = np.full(dst.size, t)
    cand = np.stack([src, dst], axis=1)
    return StepInput(GraphInput(x, real, real_w, cand), src, dst, remaining, parent)


def parent_input(g: LevelGraph, k_eig: int, k_rw: int) -> GraphInput:
    real = np.array(list(g.edges), dtype=np.int64).reshape(-1, 2)
    return GraphInput(level_features(g, k_eig, k_rw), real,
                      np.array(list(g.edges.values()), dtype=float), np.zeros((0, 2), dtype=np.int64))


def bipartite_input(nodes: Sequence[int], edges: dict, groups: Sequence[int], targets: Sequence[tuple],
                    linked: Sequence[tuple], slices: dict, k_eig: int, k_rw: int):
    """Augmented graph over ``nodes`` with real ``edges`` and candidate edges of each target bipartite.

    ``slices[c]`` lists the (global) nodes of community ``c``.  Returns the
    graph input and the ``(left, right)`` local index arrays per target.
    """
    pos = {n: i for i, n in enumerate(nodes)}
    g = LevelGraph(len(nodes), {canon(pos[u], pos[v]): w for (u, v), w in edges.items()})
    x = level_features(g, k_eig, k_rw)
    real = np.array(list(g.edges), dtype=np.int64).reshape(-1, 2)
    real_w = np.array(list(g.edges.values()), dtype=float)
    cands, cand_pairs = [], []
    for i, j in targets:
        a = np.array([pos[n] for n in slices[i]], dtype=np.int64)
        b = np.array([pos[n] for n in slices[j]], dtype=np.int64)
        la, lb = np.repeat(a, b.size), np.tile(b, a.size)
        cands.append((la, lb))
        cand_pairs.append(np.stack([la, lb], axis=1))
    cand = np.concatenate(cand_pairs) if cand_pairs else np.zeros((0, 2), dtype=np.int64)
    gi = GraphInput(x, real, real_w, cand, np.asarray(groups), set(map(tuple, linked)))
    return gi, cands


@dataclass
class LevelData:
    parent: GraphInput
    steps: list[StepInput]
    steps_per_community: list[list[int]]
    bip_graphs: list[GraphInput]
    bip_cands: list[list[tuple[np.ndarray, np.ndarray]]]
    bip_edges: list[tuple[int, int]]
    bip_u: list[np.ndarray]


@dataclass
class HGData:
    hg: HierarchicalGraph
    levels: list[LevelData]


def community_steps(hg: HierarchicalGraph, level: int, k_eig: int, k_rw: int) -> tuple[list[StepInput], list[list[int]]]:
    """Teacher-forced steps of every community; steps with no remaining weight are dropped."""
    steps: list[StepInput] = []
    per_comm: list[list[int]] = []
    leaf = level == hg.depth
    for view in hg.communities(level):
        start = view.nodes[0] if view.nodes else 0
        local = {(v - start, u - start): w for (u, v), w in view.edges.items()}  # (t, j), j <= t
        total = view.total_weight
        remaining = total
        idx = []
        for t in range(1 if leaf else 0, len(view.nodes)):
            targets = [local.get((t, j), 0) for j in range(t)] + ([] if leaf else [local.get((t, t), 0)])
            if remaining > 0:
                prefix = {(j, i): w for (i, j), w in local.items() if i < t}
                rec = community_step_input(t, prefix, remaining, total, leaf, k_eig, k_rw, view.parent)
                rec.u = np.asarray(targets, dtype=float)
                idx.append(len(steps))
                steps.append(rec)
            remaining -= sum(targets)
        per_comm.append(idx)
    return steps, per_comm


def bipartite_data(hg: HierarchicalGraph, level: int, mode: str, k_eig: int, k_rw: int):
    g = hg.levels[level]
    par = hg.parents[level - 1]
    slices = {p: list(range(a, b)) for p, a, b in hg.community_slices(level)}
    views = hg.bipartites(level)
    intra = {e: w for e, w in g.edges.items() if par[e[0]] == par[e[1]]}
    targets = [v.parent_edge for v in views]
    us = []
    for v in views:
        us.append(np.array([v.edges.get((a, b), 0) for a in v.left for b in v.right], dtype=float))
    if not views:
        return [], [], [], []
    parent_edges = [e for e in hg.levels[level - 1].edges if e[0] != e[1]]
    if mode == "joint":
        gi, cands = bipartite_input(list(range(g.node_count)), intra, par, targets, parent_edges,
                                    slices, k_eig, k_rw)
        return [gi], [cands], targets, us
    graphs, cand_lists = [], []
    done_edges: dict = {}
    for k, (i, j) in enumerate(targets):
        comms = set(range(max(i, j) + 1)) | {c for e in targets[:k] for c in e}
        nodes = [n for c in sorted(comms) for n in slices[c]]
        edges = {e: w for e, w in intra.items() if par[e[0]] in comms}
        edges.update(done_edges)
        linked = [e for e in parent_edges if e[0] in comms and e[1] in comms]
        gi, cands = bipartite_input(nodes, edges, [par[n] for n in nodes], [(i, j)], linked, slices, k_eig, k_rw)
        graphs.append(gi)
        cand_lists.append(cands)
        done_edges.update(views[k].edges)
    return graphs, cand_lists, targets, us


def prepare_hg(hg: HierarchicalGraph, cfg: ModelConfig) -> HGData:
    if hg.depth != cfg.depth:
        raise ValueError(f"hierarchy depth {hg.depth} does not match model depth {cfg.depth}")
    levels = []
    for l in range(1, hg.depth + 1):
        steps, per_comm = community_steps(hg, l, cfg.k_eig, cfg.k_rw)
        graphs, cands, edges, us = bipartite_data(hg, l, cfg.bipartite_mode, cfg.k_eig, cfg.k_rw)
        levels.append(LevelData(parent_input(hg.levels[l - 1], cfg.k_eig, cfg.k_rw), steps, per_comm,
                                graphs, cands, edges, us))
    return HGData(hg, levels)
