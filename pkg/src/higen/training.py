"""Teacher-forced maximum-likelihood training."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
import torch

from .graph import HierarchicalGraph
from .heads import bipartite_logpmf, community_row_logpmf
from .model import HGData, HiGenModel, ModelConfig, RootDistribution, prepare_hg

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 8
    steps: int = 1000
    samples_per_community: int = 8
    seed: int = 0
    log_every: int = 1

    def __post_init__(self):
        if self.lr <= 0 or self.eps <= 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("invalid optimiser hyperparameters")
        if min(self.batch_size, self.steps, self.samples_per_community, self.log_every) < 1:
            raise ValueError("batch size, steps, samples and log interval must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class LossReport:
    total: float
    community: list[float]
    bipartite: list[float]
    root: float = 0.0
    tensor: torch.Tensor | None = field(default=None, repr=False, compare=False)

    def as_row(self) -> dict:
        row = {"nll": self.total, "root": self.root}
        for l, (c, b) in enumerate(zip(self.community, self.bipartite), 1):
            row[f"community_l{l}"] = c
            row[f"bipartite_l{l}"] = b
        return row


def fit_root_distribution(dataset: Sequence[HierarchicalGraph]) -> RootDistribution:
    if not dataset:
        raise ValueError("empty dataset")
    return RootDistribution([hg.w0 for hg in dataset], [hg.leaf.node_count for hg in dataset])


def _as_data(model: HiGenModel, hg) -> HGData:
    return hg if isinstance(hg, HGData) else prepare_hg(hg, model.cfg)


def level_log_probs(model: HiGenModel, datas: Sequence[HGData], level: int,
                    selection: Sequence[Sequence[tuple[int, float]]] | None = None):
    """Per-graph community and bipartite log-likelihood tensors at ``level``.

    ``selection[g]`` lists ``(step index, weight)`` pairs of graph ``g``; by
    default every step counts once.
    """
    lm = model.level(level)
    mode = model.mode(level)
    n = len(datas)
    lds = [d.levels[level - 1] for d in datas]
    parent_h = lm.parent_embeddings([ld.parent for ld in lds])

    steps, ctx, owner, wts = [], [], [], []
    for gi, ld in enumerate(lds):
        sel = [(i, 1.0) for i in range(len(ld.steps))] if selection is None else selection[gi]
        for idx, wt in sel:
            s = ld.steps[idx]
            steps.append(s)
            ctx.append(parent_h[gi][s.parent])
            owner.append(gi)
            wts.append(wt)
    comm = torch.zeros(n, dtype=torch.float64)
    if steps:
        head = lm.community_rows(steps, torch.stack(ctx), mode)
        u = np.concatenate([s.u for s in steps])
        lp = community_row_logpmf(u, [s.remaining for s in steps], head)
        comm = comm.index_add(0, torch.tensor(owner), lp * torch.tensor(wts, dtype=torch.float64))

    graphs, cands, bctx, bowner, us = [], [], [], [], []
    for gi, ld in enumerate(lds):
        graphs.extend(ld.bip_graphs)
        cands.extend(ld.bip_cands)
        for (i, j), u in zip(ld.bip_edges, ld.bip_u):
            bctx.append(parent_h[gi][i] - parent_h[gi][j])
            bowner.append(gi)
            us.append(u)
    bip = torch.zeros(n, dtype=torch.float64)
    if graphs:
        head = lm.bipartite_rows(graphs, cands, torch.stack(bctx), mode)
        lp = bipartite_logpmf(np.concatenate(us), head)
        bip = bip.index_add(0, torch.tensor(bowner), lp)
    return comm, bip


def _root_nll(model: HiGenModel, data: HGData) -> float:
    if model.root is None:
        return 0.0
    p = model.root.prob(data.hg.w0)
    return -math.log(p) if p > 0 else math.inf


def batch_nll(model: HiGenModel, datas: Sequence[HGData], selections=None,
              include_root: bool = True) -> list[LossReport]:
    """One :class:`LossReport` per graph; ``selections[l - 1]`` optionally subsamples level ``l``."""
    comm_terms, bip_terms = [], []
    for l in range(1, model.cfg.depth + 1):
        sel = None if selections is None else selections[l - 1]
        c, b = level_log_probs(model, datas, l, sel)
        comm_terms.append(-c)
        bip_terms.append(-b)
    reports = []
    for gi, d in enumerate(datas):
        root = _root_nll(model, d) if include_root else 0.0
        tensor = sum(c[gi] + b[gi] for c, b in zip(comm_terms, bip_terms)) + root
        reports.append(LossReport(float(tensor.detach()), [float(c[gi].detach()) for c in comm_terms],
                                  [float(b[gi].detach()) for b in bip_terms], root, tensor))
    return reports


def graph_nll(hg: HierarchicalGraph | HGData, model: HiGenModel, include_root: bool = True) -> LossReport:
    """Exact negative log-likelihood of one hierarchy with all AR steps teacher-forced."""
    return batch_nll(model, [_as_data(model, hg)], include_root=include_root)[0]


def sample_steps(data: HGData, level: int, s: int, rng: np.random.Generator) -> list[tuple[int, float]]:
    """Per community, ``min(s, T)`` of its ``T`` live steps without replacement, weighted ``T / s_i``."""
    out = []
    for idx in data.levels[level - 1].steps_per_community:
        T = len(idx)
        if T == 0:
            continue
        k = min(s, T)
        chosen = idx if k == T else [idx[i] for i in sorted(rng.choice(T, size=k, replace=False))]
        out.extend((i, T / k) for i in chosen)
    return out


def subsampled_community_nll(hg: HierarchicalGraph | HGData, model: HiGenModel, s: int,
                             rng: np.random.Generator) -> float:
    """Unbiased estimate of the summed community NLL over all levels."""
    if s < 1:
        raise ValueError("s must be at least 1")
    data = _as_data(model, hg)
    total = 0.0
    for l in range(1, model.cfg.depth + 1):
        c, _ = level_log_probs(model, [data], l, [sample_steps(data, l, s, rng)])
        total -= float(c[0].detach())
    return total


# ------------------------------------------------------------------ optimiser

@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig):
    """Bias-corrected Adam update applied in place; returns ``(params, state)``."""
    for name, g in grads.items():
        if g is None:
            continue
        if not torch.all(torch.isfinite(g)):
            bad = int((~torch.isfinite(g)).sum())
            raise FloatingPointError(f"non-finite gradient in {name}: {bad} of {g.numel()} entries")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(params[name].shape)}")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    with torch.no_grad():
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            m = state.m.get(name, torch.zeros_like(p))
            v = state.v.get(name, torch.zeros_like(p))
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            state.m[name], state.v[name] = m, v
            m_hat = m / (1 - b1 ** state.t)
            v_hat = v / (1 - b2 ** state.t)
            p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps)
    return params, state


# --------------------------------------------------------------- grad check

def _autograd(loss_fn, params: dict) -> dict:
    for p in params.values():
        p.grad = None
    loss = loss_fn(params)
    grads = torch.autograd.grad(loss, list(params.values()), allow_unused=True)
    return {k: (torch.zeros_like(p) if g is None else g) for (k, p), g in zip(params.items(), grads)}


def grad_check_table(loss_fn: Callable, params: dict, rng: np.random.Generator,
                     grad_fn: Callable | None = None, coords: int = 10, step: float = 1e-4,
                     floor: float = 1e-6) -> dict[str, float]:
    """Max relative error per tensor between analytic and central-difference gradients.

    The relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    grads = (grad_fn or (lambda p: _autograd(loss_fn, p)))(params)
    table = {}
    with torch.no_grad():
        for name, p in params.items():
            flat = p.view(-1)
            idx = rng.choice(flat.numel(), size=min(coords, flat.numel()), replace=False)
            worst = 0.0
            for i in idx:
                orig = flat[i].item()
                flat[i] = orig + step
                up = float(loss_fn(params))
                flat[i] = orig - step
                down = float(loss_fn(params))
                flat[i] = orig
                num = (up - down) / (2 * step)
                ana = float(grads[name].reshape(-1)[i])
                worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), floor))
            table[name] = worst
    return table


def grad_check(loss_fn: Callable, params: dict, rng: np.random.Generator,
               grad_fn: Callable | None = None, **kw) -> float:
    return max(grad_check_table(loss_fn, params, rng, grad_fn, **kw).values())


# ------------------------------------------------------------------- training

def max_community_sizes(hgs: Sequence[HierarchicalGraph], depth: int) -> list[int]:
    out = [1] * depth
    for hg in hgs:
        for l in range(1, depth + 1):
            for _, a, b in hg.community_slices(l):
                out[l - 1] = max(out[l - 1], b - a)
    return out


def init_model(cfg: ModelConfig, hgs: Sequence[HierarchicalGraph], seed: int = 0) -> HiGenModel:
    torch.manual_seed(seed)
    return HiGenModel(cfg, fit_root_distribution(hgs), max_community_sizes(hgs, cfg.depth))


def train(hgs: Sequence[HierarchicalGraph], model_cfg: ModelConfig, train_cfg: TrainConfig,
          log_path=None, model: HiGenModel | None = None, progress: Callable | None = None):
    """Fit a model by Adam on teacher-forced subsampled NLL; returns ``(model, log rows)``.

    The optimised loss is the summed NLL of the batch divided by its total
    edge weight; logged ``nll`` values use the same per-edge scale.
    """
    if model is None:
        model = init_model(model_cfg, hgs, train_cfg.seed)
    datas = [prepare_hg(hg, model.cfg) for hg in hgs]
    rng = np.random.default_rng(train_cfg.seed)
    params = dict(model.named_parameters())
    state = AdamState()
    rows = []
    writer = fh = None
    if log_path:
        fh = open(log_path, "w", newline="")
    t0 = time.time()
    try:
        for step in range(1, train_cfg.steps + 1):
            pick = rng.choice(len(datas), size=min(train_cfg.batch_size, len(datas)), replace=False)
            batch = [datas[i] for i in pick]
            sel = [[sample_steps(d, l, train_cfg.samples_per_community, rng) for d in batch]
                   for l in range(1, model.cfg.depth + 1)]
            reports = batch_nll(model, batch, sel, include_root=False)
            weight = float(sum(d.hg.w0 for d in batch))
            loss = sum(r.tensor for r in reports) / weight
            grads = dict(zip(params, torch.autograd.grad(loss, list(params.values()), allow_unused=True)))
            grads = {k: (torch.zeros_like(params[k]) if g is None else g) for k, g in grads.items()}
            adam_step(params, grads, state, train_cfg)
            if step % train_cfg.log_every == 0:
                row = {"step": step, "nll": float(loss.detach()), "seconds": round(time.time() - t0, 3)}
                for l in range(model.cfg.depth):
                    row[f"community_l{l + 1}"] = sum(r.community[l] for r in reports) / weight
                    row[f"bipartite_l{l + 1}"] = sum(r.bipartite[l] for r in reports) / weight
                rows.append(row)
                if fh is not None:
                    if writer is None:
                        writer = csv.DictWriter(fh, fieldnames=list(row))
                        writer.writeheader()
                    writer.writerow(row)
                    fh.flush()
                if progress:
                    progress(row)
    finally:
        if fh is not None:
            fh.close()
    return model, rows


def smoothed(values: Sequence[float], window: int = 50) -> np.ndarray:
    """Trailing moving average (shorter windows at the start)."""
    v = np.asarray(values, dtype=float)
    c = np.cumsum(np.insert(v, 0, 0.0))
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def config_dict(model_cfg: ModelConfig, train_cfg: TrainConfig) -> dict:
    return {"model": asdict(model_cfg), "train": asdict(train_cfg)}
