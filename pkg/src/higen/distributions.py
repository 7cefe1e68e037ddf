"""Exact multinomial log-probabilities, their binomial factorisations, and samplers.

Everything is in the log domain with log-gamma factorials.  The three
multinomial evaluations (direct, edge-by-edge stick breaking, and the grouped
binomial x multinomial chain) are algebraically equal; the enumeration helpers
exist so that equality can be checked exhaustively on small supports.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

PROB_CLAMP = 1e-12
SIMPLEX_TOL = 1e-9
ENUM_LIMIT = 1_000_000


@dataclass(frozen=True)
class MultinomialParams:
    total: int
    probs: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if self.total < 0:
            raise ValueError("total must be non-negative")
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probs must be a non-empty vector")
        if np.any(p < -SIMPLEX_TOL) or np.any(p > 1 + SIMPLEX_TOL) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"probs must lie on the simplex, got {p}")
        object.__setattr__(self, "probs", tuple(float(x) for x in np.clip(p, 0.0, 1.0)))

    @property
    def dim(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class FactorizedStep:
    """One group of the chain: remaining weight, group sum, counts, and parameters."""
    remaining: int
    group_sum: int
    counts: tuple[int, ...]
    eta: float
    lam: tuple[float, ...]


def _xlogy(x: float, y: float) -> float:
    if x == 0:
        return 0.0
    if y <= 0:
        return -math.inf
    return x * math.log(y)


def _raw_multinomial_logpmf(w: Sequence[int], total: int, probs: Sequence[float]) -> float:
    out = math.lgamma(total + 1) - sum(math.lgamma(x + 1) for x in w)
    for x, p in zip(w, probs):
        out += _xlogy(x, p)
        if out == -math.inf:
            return out
    return out


def multinomial_logpmf(w_vec: Sequence[int], params: MultinomialParams) -> float:
    w = [int(x) for x in w_vec]
    if len(w) != params.dim:
        raise ValueError(f"count vector of length {len(w)} for {params.dim} categories")
    if any(x < 0 for x in w):
        raise ValueError("counts must be non-negative")
    if sum(w) != params.total:
        raise ValueError(f"counts sum to {sum(w)}, expected {params.total}")
    return _raw_multinomial_logpmf(w, params.total, params.probs)


def binomial_logpmf(k: int, n: int, p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    out = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    return out + _xlogy(k, p) + _xlogy(n - k, 1.0 - p)


def _clamp(p: float) -> float:
    return min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)


def _safe_ratio(num: float, den: float) -> float:
    """Conditional probability ``num / den`` with the degenerate cases pinned."""
    if den <= 0.0:
        return 1.0
    return min(max(num / den, 0.0), 1.0)


def _support_logpmf_binomial(k: int, n: int, p: float) -> float:
    """Binomial log-pmf where exact 0/1 probabilities stay exact and others are clamped."""
    if p <= 0.0 or p >= 1.0:
        return binomial_logpmf(k, n, 1.0 if p >= 1.0 else 0.0)
    return binomial_logpmf(k, n, _clamp(p))


def stick_break_logpmf(w_vec: Sequence[int], params: MultinomialParams) -> float:
    """Multinomial log-pmf as a product of conditional binomials, one per category."""
    w = [int(x) for x in w_vec]
    if len(w) != params.dim:
        raise ValueError(f"count vector of length {len(w)} for {params.dim} categories")
    if sum(w) != params.total:
        raise ValueError(f"counts sum to {sum(w)}, expected {params.total}")
    remaining = params.total
    mass_left = 1.0
    out = 0.0
    for x, p in zip(w, params.probs):
        theta_hat = _safe_ratio(p, mass_left)
        out += _support_logpmf_binomial(x, remaining, theta_hat)
        if out == -math.inf:
            return out
        remaining -= x
        mass_left -= p
    return out


def _check_grouping(grouping: Sequence[Sequence[int]], dim: int) -> list[list[int]]:
    groups = [list(g) for g in grouping]
    flat = sorted(itertools.chain.from_iterable(groups))
    if flat != list(range(dim)) or any(len(g) == 0 for g in groups):
        raise ValueError("grouping must partition the category indices into non-empty groups")
    return groups


def chain_steps(w_vec: Sequence[int], params: MultinomialParams,
                grouping: Sequence[Sequence[int]]) -> list[FactorizedStep]:
    """Split counts and probabilities into binomial/multinomial chain steps."""
    groups = _check_grouping(grouping, params.dim)
    w = [int(x) for x in w_vec]
    theta = params.probs
    steps = []
    remaining = params.total
    mass_left = 1.0
    for g in groups:
        mass = sum(theta[i] for i in g)
        eta = _safe_ratio(mass, mass_left)
        lam = tuple(theta[i] / mass for i in g) if mass > 0 else tuple(1.0 / len(g) for _ in g)
        counts = tuple(w[i] for i in g)
        steps.append(FactorizedStep(remaining, sum(counts), counts, eta, lam))
        remaining -= sum(counts)
        mass_left -= mass
    return steps


def grouped_chain_logpmf(w_vec: Sequence[int], params: MultinomialParams,
                         grouping: Sequence[Sequence[int]]) -> float:
    """Chain of Bi(v_t | r_t, eta_t) * Mu(u_t | v_t, lambda_t) over the groups."""
    if len(w_vec) != params.dim:
        raise ValueError(f"count vector of length {len(w_vec)} for {params.dim} categories")
    if sum(int(x) for x in w_vec) != params.total:
        raise ValueError("counts do not sum to total")
    out = 0.0
    for step in chain_steps(w_vec, params, grouping):
        out += _support_logpmf_binomial(step.group_sum, step.remaining, step.eta)
        if out == -math.inf:
            return out
        out += _raw_multinomial_logpmf(step.counts, step.group_sum, step.lam)
        if out == -math.inf:
            return out
    return out


def mixture_logpmf(component_logpmfs: Sequence[float], log_beta: Sequence[float]) -> float:
    comp = np.asarray(component_logpmfs, dtype=float)
    lb = np.asarray(log_beta, dtype=float)
    if comp.shape != lb.shape:
        raise ValueError("component and weight vectors differ in length")
    return float(logsumexp(comp + lb))


def stars_and_bars(dim: int, total: int) -> int:
    return math.comb(total + dim - 1, dim - 1)


def enumerate_multinomial_support(dim: int, total: int) -> list[tuple[int, ...]]:
    """All non-negative integer vectors of length ``dim`` summing to ``total``, lexicographic."""
    if dim < 1 or total < 0:
        raise ValueError("need dim >= 1 and total >= 0")
    if stars_and_bars(dim, total) > ENUM_LIMIT:
        raise ValueError(f"support of size {stars_and_bars(dim, total)} exceeds {ENUM_LIMIT}")

    def rec(d: int, t: int) -> Iterable[tuple[int, ...]]:
        if d == 1:
            yield (t,)
            return
        for first in range(t + 1):
            for rest in rec(d - 1, t - first):
                yield (first,) + rest

    return list(rec(dim, total))


def set_partitions(items: Sequence[int]) -> Iterable[list[list[int]]]:
    """Every partition of ``items`` into non-empty blocks (blocks kept in first-element order)."""
    items = list(items)
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[head]] + part
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1:]


def ordered_groupings(dim: int) -> list[list[list[int]]]:
    """All ordered set partitions of ``range(dim)`` (group order matters for the chain)."""
    out = []
    for part in set_partitions(range(dim)):
        for perm in itertools.permutations(part):
            out.append([sorted(b) for b in perm])
    return out


# ------------------------------------------------------------------- sampling

def sample_binomial(n, p, rng: np.random.Generator, size=None) -> np.ndarray:
    """Binomial draws; inversion on the CDF for ``n <= 64``, Bernoulli sums above.

    ``n`` and ``p`` broadcast.  Each draw consumes one uniform when ``n <= 64``
    and ``n`` uniforms otherwise.
    """
    n = np.asarray(n, dtype=np.int64)
    p = np.asarray(p, dtype=float)
    shape = np.broadcast_shapes(n.shape, p.shape, () if size is None else tuple(np.atleast_1d(size)))
    n = np.broadcast_to(n, shape)
    p = np.broadcast_to(p, shape)
    if np.any(n < 0) or np.any((p < 0) | (p > 1)):
        raise ValueError("invalid binomial parameters")
    out = np.zeros(shape, dtype=np.int64)
    small = n <= 64
    if np.any(small):
        ns, ps = n[small], p[small]
        u = rng.random(ns.shape)
        q = 1.0 - ps
        pmf = np.where(ps < 1.0, q ** ns, (ns == 0).astype(float))
        cdf = pmf.copy()
        k = np.zeros(ns.shape, dtype=np.int64)
        ratio = np.divide(ps, q, out=np.zeros_like(ps), where=q > 0)
        for j in range(int(ns.max()) if ns.size else 0):
            step = (u > cdf) & (j < ns)
            k += step
            pmf = pmf * np.where(j < ns, (ns - j) / (j + 1.0), 0.0) * ratio
            cdf = cdf + pmf
        k = np.where(ps >= 1.0, ns, k)
        k = np.where(ps <= 0.0, 0, k)
        out[small] = np.minimum(k, ns)
    if np.any(~small):
        nb, pb = n[~small], p[~small]
        m = int(nb.max())
        draws = rng.random(nb.shape + (m,)) < pb[..., None]
        draws &= np.arange(m) < nb[..., None]
        out[~small] = draws.sum(axis=-1)
    return out


def sample_multinomial(total: int, probs: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """Multinomial draw by left-to-right conditional binomials."""
    probs = np.asarray(probs, dtype=float)
    out = np.zeros(probs.size, dtype=np.int64)
    remaining = int(total)
    mass_left = 1.0
    for i, p in enumerate(probs):
        if remaining == 0:
            break
        if i == probs.size - 1:
            out[i] = remaining
            break
        frac = _safe_ratio(p, mass_left)
        out[i] = int(sample_binomial(remaining, frac, rng))
        remaining -= out[i]
        mass_left -= p
    return out


def sample_grouped_chain(params: MultinomialParams, grouping: Sequence[Sequence[int]],
                         rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Sample via the chain: group sum ``v_t ~ Bi(r_t, eta_t)`` then ``u_t ~ Mu(v_t, lambda_t)``.

    With ``size`` the draws are vectorised and an array of shape
    ``(size, dim)`` is returned.
    """
    groups = _check_grouping(grouping, params.dim)
    theta = np.asarray(params.probs)
    n = 1 if size is None else int(size)
    out = np.zeros((n, params.dim), dtype=np.int64)
    remaining = np.full(n, params.total, dtype=np.int64)
    mass_left = 1.0
    for gi, g in enumerate(groups):
        mass = float(theta[g].sum())
        eta = 1.0 if gi == len(groups) - 1 else _safe_ratio(mass, mass_left)
        v = sample_binomial(remaining, eta, rng)
        remaining -= v
        mass_left -= mass
        lam = theta[g] / mass if mass > 0 else np.full(len(g), 1.0 / len(g))
        # within-group split, left to right
        rem_g = v.copy()
        lam_left = 1.0
        for j, idx in enumerate(g):
            if j == len(g) - 1:
                out[:, idx] = rem_g
                break
            frac = _safe_ratio(lam[j], lam_left)
            x = sample_binomial(rem_g, frac, rng)
            out[:, idx] = x
            rem_g -= x
            lam_left -= lam[j]
    return out[0] if size is None else out


def truncated_binomial_probs(n: int, p: float, low: int, high: int) -> np.ndarray:
    """Probabilities of Bi(n, p) restricted to ``low..high`` and renormalised."""
    if not 0 <= low <= high <= n:
        raise ValueError("need 0 <= low <= high <= n")
    ks = np.arange(low, high + 1)
    p = _clamp(p)
    logp = gammaln(n + 1) - gammaln(ks + 1) - gammaln(n - ks + 1) + ks * np.log(p) + (n - ks) * np.log1p(-p)
    logp -= logsumexp(logp)
    return np.exp(logp)


def sample_truncated_binomial(n: int, p: float, low: int, high: int, rng: np.random.Generator) -> int:
    probs = truncated_binomial_probs(n, p, low, high)
    idx = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
    return low + min(idx, probs.size - 1)


def sample_without_replacement(k: int, probs: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """0/1 vector with ``k`` ones, chosen one at a time proportionally to ``probs``."""
    probs = np.asarray(probs, dtype=float).copy()
    if k > probs.size:
        raise ValueError("cannot pick more items than available")
    out = np.zeros(probs.size, dtype=np.int64)
    for _ in range(k):
        avail = np.where(out == 0, np.maximum(probs, 0.0), 0.0)
        s = avail.sum()
        if s <= 0:
            avail = (out == 0).astype(float)
            s = avail.sum()
        idx = int(np.searchsorted(np.cumsum(avail), rng.random() * s, side="right"))
        idx = min(idx, probs.size - 1)
        while out[idx]:
            idx = (idx + 1) % probs.size
        out[idx] = 1
    return out
