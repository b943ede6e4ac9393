"""Slow, independent reference computations used by the acceptance suite.

Nothing here shares code with the solvers it checks: closed forms are
written out again, searches are exhaustive over explicit lattices and
quadrature is plain adaptive Simpson.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence, Tuple

import numpy as np

__all__ = [
    "poisson_h",
    "adaptive_simpson",
    "grid_search_conjugate",
    "bisection_level_roots",
    "poisson_upper_tail_log",
    "lattice_distance_unit_poisson",
]


def poisson_h(x: float) -> float:
    if x < 0:
        return math.inf
    if x == 0:
        return 1.0
    return x * math.log(x) - x + 1.0


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
                     max_depth: int = 50) -> float:
    def simpson(fa, fm, fb, lo, hi):
        return (hi - lo) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(lo, hi, fa, fm, fb, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, lo, mid)
        right = simpson(fm, frm, fb, mid, hi)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return (recurse(lo, mid, fa, flm, fm, left, eps / 2, depth - 1)
                + recurse(mid, hi, fm, frm, fb, right, eps / 2, depth - 1))

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def grid_search_conjugate(log_laplace_minus_one: Callable[[np.ndarray], np.ndarray], x: float,
                          lo: float = -10.0, hi: float = 10.0, step: float = 1e-4) -> float:
    """``max_t t x - (L(t) - 1)`` over ``t`` on the lattice ``lo, lo + step, ..., hi``."""
    t = lo + step * np.arange(int(round((hi - lo) / step)) + 1)
    return float(np.max(t * x - log_laplace_minus_one(t)))


def bisection_level_roots(h: Callable[[float], float], mean: float, level: float,
                          span: float = 50.0, iters: int = 200) -> Tuple[float, float]:
    """Roots of ``h = level`` on each side of ``mean`` for convex ``h`` vanishing at ``mean``."""
    def solve(inside, outside):
        for _ in range(iters):
            mid = 0.5 * (inside + outside)
            if h(mid) < level:
                inside = mid
            else:
                outside = mid
        return 0.5 * (inside + outside)

    return solve(mean, mean - span), solve(mean, mean + span)


def poisson_upper_tail_log(m: int, mu: float, terms: int = 20000) -> float:
    """``log P(N >= m)``, ``N ~ Poisson(mu)``, by log-sum-exp of the pmf over ``m .. m + terms``."""
    j = np.arange(m, m + terms, dtype=float)
    logs = j * math.log(mu) - mu - np.array([math.lgamma(v + 1.0) for v in j])
    top = logs.max()
    return float(top + math.log(np.sum(np.exp(logs - top))))


def lattice_distance_unit_poisson(node_values: Sequence[float], level: float, step: float = 1e-2,
                                  r_tol: float = 1e-4) -> float:
    """Exhaustive lattice search for ``Y = 1`` at ``d = 1``.

    Minimises ``max_j |C_j - G_j|`` over nondecreasing cumulative paths ``C``
    with increments on the lattice ``step * N`` and
    ``sum_j lam h1(u_j / lam) <= level``.  For each trial radius the least
    rate reachable inside the tube is found by an exact min-plus recursion
    over every lattice path (no path is skipped), then the radius is
    bisected.
    """
    G = np.asarray(node_values, dtype=float)
    cells = len(G)
    lam = 1.0 / cells
    top = max(float(G.max()), 0.0) + 6.0
    states = np.arange(0.0, top + step / 2, step)
    diff = states[None, :] - states[:, None]
    step_cost = np.where(diff >= -step / 4, 0.0, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.clip(diff, 0.0, None) / lam
        h = np.where(u > 0, u * np.log(np.where(u > 0, u, 1.0)) - u + 1.0, 1.0)
    step_cost = step_cost + lam * h

    def least_rate(r):
        cost = np.where(np.abs(states - 0.0) < step / 4, 0.0, np.inf)
        for j in range(cells):
            nxt = np.min(cost[:, None] + step_cost, axis=0)
            cost = np.where(np.abs(states - G[j]) <= r + 1e-12, nxt, np.inf)
        return float(cost.min())

    lo, hi = 0.0, float(np.max(np.abs(G - lam * np.arange(1, cells + 1)))) + step
    if least_rate(0.0) <= level:
        return 0.0
    while hi - lo > r_tol:
        mid = 0.5 * (lo + hi)
        if least_rate(mid) <= level:
            hi = mid
        else:
            lo = mid
    return hi
