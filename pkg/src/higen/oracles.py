"""Brute-force checks of the multinomial factorisation on enumerable supports.

Each check compares a factorised quantity against one computed directly from
the multinomial pmf by enumeration, so the two sides share no code beyond
``multinomial_logpmf``.
"""
from __future__ import annotations

import math
from collections import defaultdict
from typing import Iterator

import numpy as np

from .distributions import (MultinomialParams, enumerate_multinomial_support, grouped_chain_logpmf,
                            multinomial_logpmf, ordered_groupings, sample_grouped_chain,
                            stick_break_logpmf)


def random_theta(dim: int, rng: np.random.Generator, zero_prob: float = 0.1) -> np.ndarray:
    """Dirichlet(1) draw; with probability ``zero_prob`` one entry is zeroed (dim > 1)."""
    th = rng.dirichlet(np.ones(dim))
    if dim > 1 and rng.random() < zero_prob:
        th[rng.integers(dim)] = 0.0
        th /= th.sum()
    return th


def _diff(a: float, b: float) -> float:
    if a == b:  # covers matching -inf
        return 0.0
    return abs(a - b)


def exactness_rows(max_dims: int = 4, max_total: int = 5, trials: int = 100,
                   rng: np.random.Generator | None = None) -> Iterator[dict]:
    """Worst chain-vs-direct log-pmf gap per ``(dim, total)`` over all groupings."""
    rng = rng if rng is not None else np.random.default_rng(0)
    for dim in range(1, max_dims + 1):
        groupings = ordered_groupings(dim)
        thetas = [random_theta(dim, rng) for _ in range(trials)]
        for total in range(max_total + 1):
            support = enumerate_multinomial_support(dim, total)
            worst = worst_stick = 0.0
            for th in thetas:
                params = MultinomialParams(total, tuple(th))
                for w in support:
                    direct = multinomial_logpmf(w, params)
                    worst_stick = max(worst_stick, _diff(stick_break_logpmf(w, params), direct))
                    for grouping in groupings:
                        worst = max(worst, _diff(grouped_chain_logpmf(w, params, grouping), direct))
            yield {"check": "exactness", "dim": dim, "total": total, "groupings": len(groupings),
                   "vectors": len(support), "trials": trials, "max_abs_err": worst,
                   "stick_break_max_abs_err": worst_stick}


def conditional_rows(max_dims: int = 4, max_total: int = 5, trials: int = 20,
                     rng: np.random.Generator | None = None) -> Iterator[dict]:
    """Given group sums, the enumerated conditional law against per-group multinomials."""
    rng = rng if rng is not None else np.random.default_rng(1)
    for dim in range(1, max_dims + 1):
        groupings = ordered_groupings(dim)
        for total in range(max_total + 1):
            support = enumerate_multinomial_support(dim, total)
            worst = 0.0
            for _ in range(trials):
                th = rng.dirichlet(np.ones(dim))
                params = MultinomialParams(total, tuple(th))
                logp = {w: multinomial_logpmf(w, params) for w in support}
                for grouping in groupings:
                    key = lambda w: tuple(sum(w[i] for i in g) for g in grouping)  # noqa: E731
                    marginal = defaultdict(float)
                    for w, lp in logp.items():
                        marginal[key(w)] += math.exp(lp)
                    for w, lp in logp.items():
                        s = key(w)
                        cond = math.exp(lp) / marginal[s]
                        fac = 0.0
                        for g, sg in zip(grouping, s):
                            mass = sum(th[i] for i in g)
                            lam = tuple(th[i] / mass for i in g)
                            fac += multinomial_logpmf([w[i] for i in g], MultinomialParams(sg, lam))
                        worst = max(worst, abs(cond - math.exp(fac)))
            yield {"check": "conditional", "dim": dim, "total": total, "groupings": len(groupings),
                   "trials": trials, "max_abs_err": worst}


def sampler_tv(params: MultinomialParams, grouping, draws: int, rng: np.random.Generator) -> float:
    """Total-variation distance between grouped-chain draws and the exact pmf."""
    samples = sample_grouped_chain(params, grouping, rng, size=draws)
    support = enumerate_multinomial_support(params.dim, params.total)
    index = {w: i for i, w in enumerate(support)}
    counts = np.zeros(len(support))
    for row, c in zip(*np.unique(samples, axis=0, return_counts=True)):
        counts[index[tuple(int(x) for x in row)]] = c
    exact = np.array([math.exp(multinomial_logpmf(w, params)) for w in support])
    return 0.5 * float(np.abs(counts / draws - exact).sum())
