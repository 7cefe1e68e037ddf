"""Node features and graph encoders.

Two encoders share the same building blocks:

* :class:`CommunityEncoder` runs ``R`` rounds of attentive message passing on
  the augmented community graph of one autoregressive step;
* :class:`LevelEncoder` interleaves the same message passing with a masked
  scaled-dot-product attention layer and encodes parent graphs and the
  augmented graphs used for bipartite generation.

Inputs are packed into a :class:`GraphBatch`, a disjoint union of small
graphs.  All tensors are float64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .graph import LevelGraph

DTYPE = torch.float64
EDGE_DIM = 3  # [is_real, is_candidate, log1p(weight)]


# --------------------------------------------------------------- features

def structural_encodings(g: LevelGraph | np.ndarray, k_eig: int = 8, k_rw: int = 8) -> np.ndarray:
    """Per-node ``[degree share, self-loop share, k_eig eigenvector entries, k_rw return probs]``.

    Eigenvectors belong to the smallest non-zero eigenvalues of the symmetric
    normalised Laplacian (self-loops included in the adjacency), each with its
    first non-negligible entry made positive.  Return probabilities are the
    diagonal of ``(D^-1 A)^s`` for ``s = 1..k_rw``.  Isolated nodes get zeros in
    both blocks.
    """
    a = g.adjacency().astype(float) if isinstance(g, LevelGraph) else np.asarray(g, dtype=float)
    n = a.shape[0]
    deg = a.sum(axis=1)
    out = np.zeros((n, 2 + k_eig + k_rw))
    if n == 0:
        return out
    total_deg = deg.sum()
    selfw = np.diag(a)
    total_w = (a.sum() + selfw.sum()) / 2.0
    if total_deg > 0:
        out[:, 0] = deg / total_deg
        out[:, 1] = selfw / total_w
    live = np.flatnonzero(deg > 0)
    if live.size:
        sub = a[np.ix_(live, live)]
        d = deg[live]
        inv_sqrt = 1.0 / np.sqrt(d)
        lap = np.eye(live.size) - inv_sqrt[:, None] * sub * inv_sqrt[None, :]
        vals, vecs = np.linalg.eigh((lap + lap.T) / 2.0)
        keep = np.flatnonzero(vals > 1e-8)[:k_eig]
        for col, idx in enumerate(keep):
            v = vecs[:, idx]
            nz = np.flatnonzero(np.abs(v) > 1e-8)
            if nz.size and v[nz[0]] < 0:
                v = -v
            out[live, 2 + col] = v
        p = sub / d[:, None]
        ps = np.eye(live.size)
        for s in range(k_rw):
            ps = ps @ p
            out[live, 2 + k_eig + s] = np.diag(ps)
    return out


def level_features(g: LevelGraph, k_eig: int = 8, k_rw: int = 8) -> np.ndarray:
    """Structural encodings plus log-scaled self-loop, strength and total weight."""
    enc = structural_encodings(g, k_eig, k_rw)
    selfw = np.array([g.self_loop(i) for i in range(g.node_count)], dtype=float)
    strength = g.adjacency().sum(axis=1).astype(float)
    extra = np.stack([np.log1p(selfw), np.log1p(strength),
                      np.full(g.node_count, np.log1p(g.total_weight))], axis=1)
    return np.concatenate([enc, extra], axis=1)


def level_feature_dim(k_eig: int, k_rw: int) -> int:
    return 2 + k_eig + k_rw + 3


def community_step_features(g: LevelGraph, remaining: int, total: int,
                            k_eig: int = 8, k_rw: int = 8) -> np.ndarray:
    """Features of a partially generated community whose last node is the new one.

    Adds a new-node flag, log generated degree so far, the remaining-weight
    fraction, and log-scaled community and remaining weights.
    """
    enc = structural_encodings(g, k_eig, k_rw)
    n = g.node_count
    new = np.zeros(n)
    new[-1] = 1.0
    strength = g.adjacency().sum(axis=1).astype(float)
    frac = remaining / total if total > 0 else 0.0
    extra = np.stack([new, np.log1p(strength), np.full(n, frac),
                      np.full(n, np.log1p(total)), np.full(n, np.log1p(remaining))], axis=1)
    return np.concatenate([enc, extra], axis=1)


def community_feature_dim(k_eig: int, k_rw: int) -> int:
    return 2 + k_eig + k_rw + 5


# ------------------------------------------------------------------ batches

@dataclass
class GraphBatch:
    x: torch.Tensor            # (N, F)
    edge_index: torch.Tensor   # (2, M) directed src -> dst
    edge_attr: torch.Tensor    # (M, EDGE_DIM)
    graph_index: torch.Tensor  # (N,) owning graph of each node
    num_graphs: int
    attn_mask: torch.Tensor | None = None  # (N, N) bool, True = may attend

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]


@dataclass
class GraphInput:
    """Numpy description of one graph before batching.

    ``real`` and ``cand`` hold undirected ``(u, v)`` pairs; ``real_w`` their
    weights.  ``groups`` optionally gives each node a group id used to build
    the attention mask together with ``linked`` group pairs.
    """
    x: np.ndarray
    real: np.ndarray
    real_w: np.ndarray
    cand: np.ndarray
    groups: np.ndarray | None = None
    linked: set | None = None

    def attention_mask(self) -> np.ndarray:
        n = self.x.shape[0]
        if self.groups is None:
            return np.ones((n, n), dtype=bool)
        g = self.groups
        mask = g[:, None] == g[None, :]
        for i, j in self.linked or ():
            mask |= (g[:, None] == i) & (g[None, :] == j)
            mask |= (g[:, None] == j) & (g[None, :] == i)
        return mask


def _directed(pairs: np.ndarray, attr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if pairs.size == 0:
        return np.zeros((2, 0), dtype=np.int64), np.zeros((0, EDGE_DIM))
    u, v = pairs[:, 0], pairs[:, 1]
    loop = u == v
    src = np.concatenate([u, v[~loop]])
    dst = np.concatenate([v, u[~loop]])
    return np.stack([src, dst]), np.concatenate([attr, attr[~loop]])


def make_batch(graphs: Sequence[GraphInput], with_mask: bool = False) -> GraphBatch:
    xs, eis, eas, gidx = [], [], [], []
    offset = 0
    for gi, g in enumerate(graphs):
        n = g.x.shape[0]
        real = np.asarray(g.real, dtype=np.int64).reshape(-1, 2)
        cand = np.asarray(g.cand, dtype=np.int64).reshape(-1, 2)
        attr_r = np.zeros((len(real), EDGE_DIM))
        attr_r[:, 0] = 1.0
        attr_r[:, 2] = np.log1p(np.asarray(g.real_w, dtype=float).reshape(-1))
        attr_c = np.zeros((len(cand), EDGE_DIM))
        attr_c[:, 1] = 1.0
        ei, ea = _directed(np.concatenate([real, cand]), np.concatenate([attr_r, attr_c]))
        xs.append(g.x)
        eis.append(ei + offset)
        eas.append(ea)
        gidx.append(np.full(n, gi))
        offset += n
    mask = None
    if with_mask:
        mask = np.zeros((offset, offset), dtype=bool)
        o = 0
        for g in graphs:
            n = g.x.shape[0]
            mask[o:o + n, o:o + n] = g.attention_mask()
            o += n
        mask = torch.from_numpy(mask)
    return GraphBatch(
        x=torch.from_numpy(np.concatenate(xs)).to(DTYPE),
        edge_index=torch.from_numpy(np.concatenate(eis, axis=1)),
        edge_attr=torch.from_numpy(np.concatenate(eas)).to(DTYPE),
        graph_index=torch.from_numpy(np.concatenate(gidx)),
        num_graphs=len(graphs),
        attn_mask=mask,
    )


# ------------------------------------------------------------------- layers

def mlp(in_dim: int, hidden: int, out_dim: int) -> nn.Sequential:
    """Two hidden layers with ReLU."""
    return nn.Sequential(
        nn.Linear(in_dim, hidden, dtype=DTYPE), nn.ReLU(),
        nn.Linear(hidden, hidden, dtype=DTYPE), nn.ReLU(),
        nn.Linear(hidden, out_dim, dtype=DTYPE),
    )


class GatedResidualCell(nn.Module):
    """GRU-style update ``h + z * n``; a zero aggregate under zero cell weights is a no-op."""

    def __init__(self, dim: int):
        super().__init__()
        self.gates = nn.Linear(2 * dim, 2 * dim, dtype=DTYPE)
        self.cand = nn.Linear(2 * dim, dim, dtype=DTYPE)

    def forward(self, h, agg):
        z, r = torch.sigmoid(self.gates(torch.cat([h, agg], dim=-1))).chunk(2, dim=-1)
        n = torch.tanh(self.cand(torch.cat([r * h, agg], dim=-1)))
        return h + z * n


class AttentiveMessageLayer(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.message = nn.Sequential(nn.Linear(2 * dim + EDGE_DIM, dim, dtype=DTYPE), nn.ReLU(),
                                     nn.Linear(dim, dim, dtype=DTYPE))
        self.gate = nn.Sequential(nn.Linear(2 * dim + EDGE_DIM, dim, dtype=DTYPE), nn.ReLU(),
                                  nn.Linear(dim, dim, dtype=DTYPE))
        self.update = GatedResidualCell(dim)

    def forward(self, h, batch: GraphBatch):
        src, dst = batch.edge_index
        inp = torch.cat([h[dst], h[src], batch.edge_attr], dim=-1)
        msg = self.message(inp) * torch.sigmoid(self.gate(inp))
        agg = torch.zeros_like(h).index_add(0, dst, msg)
        return self.update(h, agg)


class MaskedAttention(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.q = nn.Linear(dim, dim, dtype=DTYPE)
        self.k = nn.Linear(dim, dim, dtype=DTYPE)
        self.v = nn.Linear(dim, dim, dtype=DTYPE)
        self.o = nn.Linear(dim, dim, dtype=DTYPE)
        self.scale = 1.0 / math.sqrt(dim)

    def weights(self, h, mask):
        scores = (self.q(h) @ self.k(h).T) * self.scale
        if mask is not None:
            scores = scores.masked_fill(~mask, -math.inf)
        return torch.softmax(scores, dim=-1)

    def forward(self, h, mask):
        return h + self.o(self.weights(h, mask) @ self.v(h))


class CommunityEncoder(nn.Module):
    def __init__(self, in_dim: int, dim: int, layers: int):
        super().__init__()
        self.embed = nn.Linear(in_dim, dim, dtype=DTYPE)
        self.layers = nn.ModuleList(AttentiveMessageLayer(dim) for _ in range(layers))

    def forward(self, batch: GraphBatch) -> torch.Tensor:
        h = self.embed(batch.x)
        for layer in self.layers:
            h = layer(h, batch)
        return h


class LevelEncoder(nn.Module):
    """Message passing interleaved with masked global attention, one pair per layer."""

    def __init__(self, in_dim: int, dim: int, layers: int):
        super().__init__()
        self.embed = nn.Linear(in_dim, dim, dtype=DTYPE)
        self.layers = nn.ModuleList(AttentiveMessageLayer(dim) for _ in range(layers))
        self.attn = nn.ModuleList(MaskedAttention(dim) for _ in range(layers))

    def forward(self, batch: GraphBatch) -> torch.Tensor:
        mask = batch.attn_mask
        if mask is None:
            gi = batch.graph_index
            mask = gi[:, None] == gi[None, :]
        elif mask.shape != (batch.num_nodes, batch.num_nodes):
            raise ValueError(f"attention mask {tuple(mask.shape)} for {batch.num_nodes} nodes")
        h = self.embed(batch.x)
        for mp, at in zip(self.layers, self.attn):
            h = at(mp(h, batch), mask)
        return h


def encode_community_step(batch: GraphBatch, encoder: CommunityEncoder) -> torch.Tensor:
    return encoder(batch)


def encode_augmented_level(batch: GraphBatch, encoder: LevelEncoder,
                           attention_mask: torch.Tensor | np.ndarray | None = None) -> torch.Tensor:
    if attention_mask is not None:
        batch = GraphBatch(batch.x, batch.edge_index, batch.edge_attr, batch.graph_index,
                           batch.num_graphs, torch.as_tensor(attention_mask, dtype=torch.bool))
    return encoder(batch)


def parent_context(parent_embeddings: torch.Tensor, target) -> torch.Tensor:
    """Context vector for a community (an ``int`` parent) or a bipartite (a parent edge).

    Bipartite contexts use ``h_i - h_j`` with ``i < j`` whatever order the edge
    is given in.
    """
    if isinstance(target, (tuple, list)):
        i, j = sorted(int(x) for x in target)
        if max(i, j) >= parent_embeddings.shape[0]:
            raise KeyError(f"parent edge {target} not embedded")
        return parent_embeddings[i] - parent_embeddings[j]
    t = int(target)
    if not 0 <= t < parent_embeddings.shape[0]:
        raise KeyError(f"parent node {target} not embedded")
    return parent_embeddings[t]
