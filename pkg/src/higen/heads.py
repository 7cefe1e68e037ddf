"""Mixture output heads for community rows and bipartites.

Heads work on segments: candidate-edge rows carry the index of the step (or
bipartite) they belong to, so many rows of different length are evaluated in
one call.  Per-segment softmax/normalisation is done with scatter reductions.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .encoder import DTYPE, mlp

ACTIVATIONS = ("softmax", "multihot", "bernoulli")


@dataclass
class MixtureHeadOutput:
    """Mixture parameters in log space.

    ``log_beta`` is ``(S, K)``; ``log_eta``/``log_1m_eta`` are ``(S, K)`` or
    ``None`` for bipartite heads; ``log_lam`` is ``(E, K)`` with rows grouped by
    ``segment``.  For the Bernoulli activation ``log_lam`` holds ``log p`` and
    ``log_1m_lam`` holds ``log(1 - p)``.
    """
    log_beta: torch.Tensor
    log_lam: torch.Tensor
    segment: torch.Tensor
    mode: str
    log_eta: torch.Tensor | None = None
    log_1m_eta: torch.Tensor | None = None
    log_1m_lam: torch.Tensor | None = None

    @property
    def beta(self):
        return self.log_beta.exp()

    @property
    def eta(self):
        return None if self.log_eta is None else self.log_eta.exp()

    @property
    def lam(self):
        return self.log_lam.exp()

    def lambda_matrix(self, s: int = 0) -> torch.Tensor:
        """``K x E`` parameter matrix of segment ``s``."""
        return self.lam[self.segment == s].T


def segment_sum(values: torch.Tensor, segment: torch.Tensor, num: int) -> torch.Tensor:
    out = torch.zeros((num,) + values.shape[1:], dtype=values.dtype)
    return out.index_add(0, segment, values)


def segment_log_softmax(logits: torch.Tensor, segment: torch.Tensor, num: int) -> torch.Tensor:
    with torch.no_grad():
        shift = torch.full((num,) + logits.shape[1:], -torch.inf, dtype=logits.dtype)
        shift = shift.scatter_reduce(0, segment[:, None].expand_as(logits), logits, "amax")
    z = logits - shift[segment]
    lse = torch.log(segment_sum(z.exp(), segment, num))
    return z - lse[segment]


def leaf_activation(logits: torch.Tensor, mode: str, segment: torch.Tensor | None = None,
                    num: int | None = None):
    """Map edge logits ``(E, K)`` to log-parameters.

    ``softmax`` and ``multihot`` normalise within each segment (multihot is
    ``sigmoid(z_i) / sum_j sigmoid(z_j)``); ``bernoulli`` returns
    ``(log p, log(1 - p))`` elementwise.
    """
    if mode not in ACTIVATIONS:
        raise ValueError(f"unknown activation {mode!r}")
    if segment is None:
        segment = torch.zeros(logits.shape[0], dtype=torch.long)
        num = 1
    if mode == "softmax":
        return segment_log_softmax(logits, segment, num)
    if mode == "multihot":
        ls = F.logsigmoid(logits)
        return ls - torch.log(segment_sum(ls.exp(), segment, num))[segment]
    return F.logsigmoid(logits), F.logsigmoid(-logits)


class CommunityRowHead(nn.Module):
    def __init__(self, dim: int, mixtures: int):
        super().__init__()
        self.theta = mlp(3 * dim, dim, mixtures)
        self.eta = mlp(2 * dim, dim, mixtures)
        self.beta = mlp(2 * dim, dim, mixtures)

    def forward(self, edge_embeds, segment, pooled, parent_ctx, mode: str = "softmax") -> MixtureHeadOutput:
        """``edge_embeds`` is ``(E, d)`` with ``segment`` (E,) mapping rows to steps;
        ``pooled`` and ``parent_ctx`` are ``(S, d)``."""
        if edge_embeds.shape[0] == 0:
            raise ValueError("community row needs at least one candidate edge")
        num = pooled.shape[0]
        graph_in = torch.cat([pooled, parent_ctx], dim=-1)
        logits = self.theta(torch.cat([edge_embeds, graph_in[segment]], dim=-1))
        eta_logit = self.eta(graph_in)
        log_beta = torch.log_softmax(self.beta(graph_in), dim=-1)
        out = MixtureHeadOutput(log_beta, None, segment, mode,
                                F.logsigmoid(eta_logit), F.logsigmoid(-eta_logit))
        act = leaf_activation(logits, mode, segment, num)
        if mode == "bernoulli":
            out.log_lam, out.log_1m_lam = act
        else:
            out.log_lam = act
        return out


class BipartiteHead(nn.Module):
    def __init__(self, dim: int, mixtures: int):
        super().__init__()
        self.theta = mlp(2 * dim, dim, mixtures)
        self.beta = mlp(2 * dim, dim, mixtures)

    def forward(self, edge_embeds, segment, parent_edge_ctx, mode: str = "softmax") -> MixtureHeadOutput:
        if edge_embeds.shape[0] == 0:
            raise ValueError("bipartite needs at least one candidate edge")
        num = parent_edge_ctx.shape[0]
        logits = self.theta(torch.cat([edge_embeds, parent_edge_ctx[segment]], dim=-1))
        pooled = segment_sum(edge_embeds, segment, num)
        log_beta = torch.log_softmax(self.beta(torch.cat([pooled, parent_edge_ctx], dim=-1)), dim=-1)
        out = MixtureHeadOutput(log_beta, None, segment, mode)
        act = leaf_activation(logits, mode, segment, num)
        if mode == "bernoulli":
            out.log_lam, out.log_1m_lam = act
        else:
            out.log_lam = act
        return out


def community_row_head(edge_embeds, pooled, parent_ctx, head: CommunityRowHead,
                       mode: str = "softmax") -> MixtureHeadOutput:
    """Single-row convenience wrapper."""
    seg = torch.zeros(edge_embeds.shape[0], dtype=torch.long)
    return head(edge_embeds, seg, pooled.reshape(1, -1), parent_ctx.reshape(1, -1), mode)


def bipartite_head(edge_embeds, parent_edge_ctx, head: BipartiteHead, mode: str = "softmax") -> MixtureHeadOutput:
    seg = torch.zeros(edge_embeds.shape[0], dtype=torch.long)
    return head(edge_embeds, seg, parent_edge_ctx.reshape(1, -1), mode)


def _as_tensor(x) -> torch.Tensor:
    return torch.as_tensor(x, dtype=DTYPE)


def _multinomial_part(u, log_lam, segment, num, totals):
    """``log Mu(u | total, lam_k)`` per segment and mixture, shape ``(S, K)``."""
    coef = torch.lgamma(totals + 1) - segment_sum(torch.lgamma(u + 1), segment, num)
    # zero counts contribute nothing even where the parameter underflows
    ulog = torch.where(u[:, None] > 0, u[:, None] * log_lam, torch.zeros_like(log_lam))
    return coef[:, None] + segment_sum(ulog, segment, num)


def _bernoulli_part(u, head: MixtureHeadOutput, num):
    ll = u[:, None] * head.log_lam + (1 - u[:, None]) * head.log_1m_lam
    return segment_sum(ll, head.segment, num)


def community_row_logpmf(u, remaining, head: MixtureHeadOutput) -> torch.Tensor:
    """Mixture log-pmf of each row: ``log sum_k beta_k Bi(v | r, eta_k) Mu(u | v, lam_k)``.

    ``u`` is the flat ``(E,)`` count vector aligned with ``head.segment`` and
    ``remaining`` is ``(S,)``.  Returns ``(S,)``.
    """
    u = _as_tensor(u)
    r = _as_tensor(remaining).reshape(-1)
    num = head.log_beta.shape[0]
    v = segment_sum(u, head.segment, num)
    if torch.any(v > r):
        raise ValueError("row weight exceeds the remaining weight")
    if head.mode == "bernoulli":
        comp = _bernoulli_part(u, head, num)
    else:
        binom = (torch.lgamma(r + 1) - torch.lgamma(v + 1) - torch.lgamma(r - v + 1))[:, None]
        binom = binom + torch.where(v[:, None] > 0, v[:, None] * head.log_eta, torch.zeros_like(head.log_eta))
        binom = binom + torch.where((r - v)[:, None] > 0, (r - v)[:, None] * head.log_1m_eta,
                                    torch.zeros_like(head.log_1m_eta))
        comp = binom + _multinomial_part(u, head.log_lam, head.segment, num, v)
    return torch.logsumexp(head.log_beta + comp, dim=-1)


def bipartite_logpmf(u, head: MixtureHeadOutput) -> torch.Tensor:
    """Mixture multinomial (or Bernoulli) log-pmf of each bipartite's weights, ``(S,)``."""
    u = _as_tensor(u)
    num = head.log_beta.shape[0]
    if head.mode == "bernoulli":
        comp = _bernoulli_part(u, head, num)
    else:
        totals = segment_sum(u, head.segment, num)
        comp = _multinomial_part(u, head.log_lam, head.segment, num, totals)
    return torch.logsumexp(head.log_beta + comp, dim=-1)
