"""Top-down ancestral sampling of hierarchical graphs.

Each community draws from its own random substream keyed by ``(level,
community index)`` and each bipartite from one keyed by its parent edge, so
the order in which communities are processed does not change the result.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .distributions import (sample_multinomial, sample_truncated_binomial, sample_without_replacement)
from .graph import GraphError, HierarchicalGraph, LevelGraph, validate_hg
from .model import (BIPARTITE_MODES, VARIANTS, HiGenModel, RootDistribution, bipartite_input,
                    community_step_input, parent_input)

_COMMUNITY, _BIPARTITE = 0, 1


@dataclass
class GenConfig:
    variant: str | None = None          # must match the trained model when given
    bipartite_mode: str | None = None   # defaults to the mode the model was trained with
    max_nodes: int | None = None        # per-community cap; default 2x largest training community
    seed: int = 0

    def __post_init__(self):
        if self.variant is not None and self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.bipartite_mode is not None and self.bipartite_mode not in BIPARTITE_MODES:
            raise ValueError(f"bipartite mode must be one of {BIPARTITE_MODES}")
        if self.max_nodes is not None and self.max_nodes < 1:
            raise ValueError("max_nodes must be at least 1")


@dataclass
class Flags:
    capped: int = 0
    non_simple: int = 0

    def as_dict(self) -> dict:
        return {"capped": self.capped, "non_simple": self.non_simple}


def sample_root(root: RootDistribution, rng: np.random.Generator) -> LevelGraph:
    w0 = root.sample(rng)
    return LevelGraph(1, {(0, 0): w0} if w0 > 0 else {}, 0)


def _substream(base: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([base, *key])


def _pick_component(log_beta: torch.Tensor, rng: np.random.Generator) -> int:
    beta = log_beta.exp().numpy()
    return int(min(np.searchsorted(np.cumsum(beta), rng.random() * beta.sum(), side="right"), beta.size - 1))


def _fill_exact(draws: np.ndarray, probs: np.ndarray, target: int) -> np.ndarray:
    """Adjust a 0/1 draw to exactly ``target`` ones, trimming or adding by probability."""
    out = draws.astype(np.int64).copy()
    count = int(out.sum())
    if count > target:
        on = np.flatnonzero(out)
        keep = on[np.argsort(-probs[on], kind="stable")[:target]]
        out[:] = 0
        out[keep] = 1
    elif count < target:
        off = np.flatnonzero(out == 0)
        add = off[np.argsort(-probs[off], kind="stable")[:target - count]]
        out[add] = 1
    return out


def _binary_or_multi(total: int, probs: np.ndarray, rng, flags: Flags) -> np.ndarray:
    """Leaf weights: 0/1 without replacement when feasible, otherwise a flagged multinomial."""
    if total <= probs.size:
        return sample_without_replacement(total, probs, rng)
    flags.non_simple += 1
    return sample_multinomial(total, probs / probs.sum(), rng)


def generate_community(model: HiGenModel, level: int, total_weight: int, context: torch.Tensor,
                       rng: np.random.Generator, cap: int, flags: Flags | None = None,
                       parent: int = 0) -> tuple[int, dict]:
    """Grow one community node by node until its weight is used up.

    Returns ``(node count, edges)`` with edges keyed by position pairs
    ``(j, t)``.  From the second node on, each row receives at least one unit
    of weight; at the leaf a row never exceeds its number of predecessors.
    """
    flags = flags if flags is not None else Flags()
    if total_weight < 0:
        raise ValueError("negative community weight")
    if total_weight == 0:
        return 1, {}
    leaf = level == model.cfg.depth
    mode = model.mode(level)
    lm = model.level(level)
    cfg = model.cfg
    edges: dict = {}
    remaining = total_weight
    t = 1 if leaf else 0
    cap = max(cap, 2)
    while remaining > 0:
        last = t >= cap - 1
        step = community_step_input(t, edges, remaining, total_weight, leaf, cfg.k_eig, cfg.k_rw, parent)
        with torch.no_grad():
            head = lm.community_rows([step], context.reshape(1, -1), mode)
        k = _pick_component(head.log_beta[0], rng)
        n_cand = step.cand_dst.size
        if mode == "bernoulli":
            p = head.log_lam[:, k].exp().numpy()
            draws = rng.random(n_cand) < p
            if not draws.any():
                draws[int(np.argmax(p))] = True
            target = min(int(draws.sum()), remaining)
            if last:
                target = remaining
            if target > n_cand:
                flags.non_simple += 1
                u = sample_multinomial(target, p / p.sum(), rng)
            else:
                u = _fill_exact(draws, p, target)
        else:
            lam = head.log_lam[:, k].exp().numpy()
            lam = lam / lam.sum()
            if last:
                v = remaining
            else:
                eta = float(head.log_eta[0, k].exp())
                hi = min(remaining, n_cand) if leaf else remaining
                lo = 1 if t >= 1 else 0
                v = sample_truncated_binomial(remaining, eta, lo, hi, rng)
            u = _binary_or_multi(v, lam, rng, flags) if leaf else sample_multinomial(v, lam, rng)
        for j, w in zip(step.cand_dst, u):
            if w > 0:
                edges[(int(j), t)] = int(w)
        remaining -= int(u.sum())
        t += 1
        if last and remaining == 0 and t >= cap:
            flags.capped += 1
    return t, edges


def _sample_bipartite(head, seg: int, total: int, leaf: bool, rng, flags: Flags) -> np.ndarray:
    rows = head.segment == seg
    k = _pick_component(head.log_beta[seg], rng)
    if head.mode == "bernoulli":
        p = head.log_lam[rows, k].exp().numpy()
        if total > p.size:
            flags.non_simple += 1
            return sample_multinomial(total, p / p.sum(), rng)
        return _fill_exact(rng.random(p.size) < p, p, total)
    lam = head.log_lam[rows, k].exp().numpy()
    lam = lam / lam.sum()
    return _binary_or_multi(total, lam, rng, flags) if leaf else sample_multinomial(total, lam, rng)


def _targets(parent_graph: LevelGraph) -> list[tuple[int, int]]:
    return [e for e in parent_graph.edges if e[0] != e[1]]


def generate_bipartites_joint(model: HiGenModel, level: int, communities: Sequence[tuple[int, dict]],
                              parent_graph: LevelGraph, parent_h: torch.Tensor, base: int,
                              flags: Flags | None = None) -> dict:
    """Cross edges of every bipartite from one encoder pass over the augmented level graph."""
    flags = flags if flags is not None else Flags()
    nodes, intra, par, slices = _assemble(communities)
    targets = _targets(parent_graph)
    if not targets:
        return {}
    for i, j in targets:
        if not slices[i] or not slices[j]:
            raise GraphError(f"bipartite {(i, j)} has no candidate edges")
    cfg = model.cfg
    gi, cands = bipartite_input(nodes, intra, par, targets, targets, slices, cfg.k_eig, cfg.k_rw)
    ctx = torch.stack([parent_h[i] - parent_h[j] for i, j in targets])
    with torch.no_grad():
        head = model.level(level).bipartite_rows([gi], [cands], ctx, model.mode(level))
    leaf = level == cfg.depth
    cross = {}
    for b, (i, j) in enumerate(targets):
        rng = _substream(base, level, _BIPARTITE, i, j)
        u = _sample_bipartite(head, b, parent_graph.edges[(i, j)], leaf, rng, flags)
        pairs = [(a, c) for a in slices[i] for c in slices[j]]
        cross.update({pairs[e]: int(w) for e, w in enumerate(u) if w > 0})
    return cross


def generate_bipartites_sequential(model: HiGenModel, level: int, communities: Sequence[tuple[int, dict]],
                                   parent_graph: LevelGraph, parent_h: torch.Tensor, base: int,
                                   flags: Flags | None = None) -> dict:
    """Bipartites one at a time in parent-edge order, each conditioned on those already drawn."""
    flags = flags if flags is not None else Flags()
    _, intra, par, slices = _assemble(communities)
    targets = _targets(parent_graph)
    cfg = model.cfg
    leaf = level == cfg.depth
    cross: dict = {}
    for k, (i, j) in enumerate(targets):
        if not slices[i] or not slices[j]:
            raise GraphError(f"bipartite {(i, j)} has no candidate edges")
        comms = set(range(max(i, j) + 1)) | {c for e in targets[:k] for c in e}
        nodes = [n for c in sorted(comms) for n in slices[c]]
        edges = {e: w for e, w in intra.items() if par[e[0]] in comms}
        edges.update(cross)
        linked = [e for e in targets if e[0] in comms and e[1] in comms]
        gi, cands = bipartite_input(nodes, edges, [par[n] for n in nodes], [(i, j)], linked, slices,
                                    cfg.k_eig, cfg.k_rw)
        ctx = (parent_h[i] - parent_h[j]).reshape(1, -1)
        with torch.no_grad():
            head = model.level(level).bipartite_rows([gi], [cands], ctx, model.mode(level))
        rng = _substream(base, level, _BIPARTITE, i, j)
        u = _sample_bipartite(head, 0, parent_graph.edges[(i, j)], leaf, rng, flags)
        pairs = [(a, c) for a in slices[i] for c in slices[j]]
        cross.update({pairs[e]: int(w) for e, w in enumerate(u) if w > 0})
    return cross


def _assemble(communities: Sequence[tuple[int, dict]]):
    nodes, intra, par, slices = [], {}, [], {}
    off = 0
    for c, (n, edges) in enumerate(communities):
        slices[c] = list(range(off, off + n))
        nodes.extend(slices[c])
        par.extend([c] * n)
        intra.update({(a + off, b + off): w for (a, b), w in edges.items()})
        off += n
    return nodes, intra, par, slices


def generate_level(model: HiGenModel, level: int, parent_graph: LevelGraph, base: int,
                   cap: int | None = None, bipartite_mode: str | None = None,
                   order: Sequence[int] | None = None, flags: Flags | None = None):
    """Children of ``parent_graph``: returns ``(level graph, parent map)``.

    ``order`` only changes the processing order of communities; the output
    is the same for any order.
    """
    flags = flags if flags is not None else Flags()
    cfg = model.cfg
    lm = model.level(level)
    cap = cap or 2 * max(model.max_community[level - 1], 1)
    with torch.no_grad():
        parent_h = lm.parent_embeddings([parent_input(parent_graph, cfg.k_eig, cfg.k_rw)])[0]
    n_par = parent_graph.node_count
    order = range(n_par) if order is None else order
    communities: list = [None] * n_par
    for i in order:
        rng = _substream(base, level, _COMMUNITY, i)
        communities[i] = generate_community(model, level, parent_graph.self_loop(i), parent_h[i],
                                            rng, cap, flags, i)
    mode = bipartite_mode or cfg.bipartite_mode
    gen = generate_bipartites_joint if mode == "joint" else generate_bipartites_sequential
    cross = gen(model, level, communities, parent_graph, parent_h, base, flags)
    nodes, intra, par, _ = _assemble(communities)
    edges = dict(intra)
    edges.update(cross)
    return LevelGraph(len(nodes), edges, level), par


def generate_graph(model: HiGenModel, gen_config: GenConfig | None = None,
                   rng: np.random.Generator | None = None) -> tuple[LevelGraph, HierarchicalGraph]:
    """Sample a root weight and expand it level by level into a leaf graph.

    The returned hierarchy carries ``meta`` counters for capped communities
    and leaf rows that could not stay simple.
    """
    gen_config = gen_config or GenConfig()
    if gen_config.variant is not None and gen_config.variant != model.cfg.variant:
        raise ValueError(f"model was trained as {model.cfg.variant!r}, not {gen_config.variant!r}")
    if model.root is None:
        raise ValueError("model has no fitted root distribution")
    rng = rng if rng is not None else np.random.default_rng(gen_config.seed)
    base = int(rng.integers(2 ** 62))
    flags = Flags()
    levels = [sample_root(model.root, _substream(base, 0))]
    parents = []
    for l in range(1, model.cfg.depth + 1):
        g, par = generate_level(model, l, levels[-1], base, gen_config.max_nodes,
                                gen_config.bipartite_mode, flags=flags)
        levels.append(g)
        parents.append(tuple(par))
    hg = HierarchicalGraph(tuple(levels), tuple(parents), meta=flags.as_dict())
    validate_hg(hg, leaf_simple=flags.non_simple == 0)
    return hg.leaf, hg
