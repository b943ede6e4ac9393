"""Discretised rate functional, its refinement limit, level sets and the
sup-norm distance to a level set."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy import integrate, optimize

from .conjugate import ChernoffFunction
from .exceptions import DomainError
from .grid import GridFunction, _cumsum_axes, cumulative_adjoint

__all__ = [
    "discretize",
    "rate_p",
    "rate_limit",
    "RefinementReport",
    "RateLevelSet",
    "level_set_contains",
    "distance_to_level_set",
    "DistanceResult",
    "tv_bound_check",
    "TVReport",
    "growth_radius",
    "scaling_deviation",
]


def discretize(g: GridFunction, q: int) -> GridFunction:
    """Depth-``q`` version of ``g``: child increments summed into parent cells."""
    return g.discretize(q)


def rate_p(g: GridFunction, chern: ChernoffFunction) -> float:
    """``sum_j lam(C_j) h(g(C_j) / lam(C_j))`` over the cells of ``g``'s grid."""
    if g.k != chern.dim:
        raise DomainError(f"grid function has k={g.k}, conjugate has k={chern.dim}")
    lam = g.grid.cell_volume
    total = 0.0
    flat = g.increments.reshape(-1, g.k) / lam
    uniq, counts = np.unique(flat, axis=0, return_counts=True)
    for u, m in zip(uniq, counts):
        v = chern(u)
        if math.isinf(v):
            return math.inf
        total += m * v
    return lam * total


@dataclass
class RefinementReport:
    depths: np.ndarray
    values: np.ndarray
    quadrature: float
    monotone: bool
    final_gap: float


def rate_limit(slope: Callable, chern: ChernoffFunction, p_max: int, d: int = 1,
               monotone_tol: float = 1e-12) -> RefinementReport:
    """Ladder ``J^(p)`` for ``p = 1..p_max`` next to a quadrature of ``int h(g'(s)) ds``.

    ``slope`` maps an ``(m, d)`` array of points to the derivative of ``g``
    there (``(m,)`` or ``(m, k)``).
    """
    if p_max < 2:
        raise DomainError("p_max must be at least 2")
    finest = GridFunction.from_slope(slope, p_max, d)
    depths = np.arange(1, p_max + 1)
    values = np.array([rate_p(finest.discretize(int(q)), chern) for q in depths])

    def integrand(*s):
        v = np.atleast_1d(np.asarray(slope(np.array([s])), dtype=float)).reshape(-1)
        return chern(v)

    if d == 1:
        quad, _ = integrate.quad(lambda s: integrand(s), 0.0, 1.0, epsabs=1e-11, epsrel=1e-11, limit=400)
    else:
        nodes, weights = np.polynomial.legendre.leggauss(24)
        x = (nodes + 1) / 2
        w = weights / 2
        mesh = np.stack(np.meshgrid(*[x] * d, indexing="ij"), axis=-1).reshape(-1, d)
        wm = np.prod(np.stack(np.meshgrid(*[w] * d, indexing="ij"), axis=-1).reshape(-1, d), axis=1)
        quad = float(sum(wi * integrand(*pt) for pt, wi in zip(mesh, wm)))
    monotone = bool(np.all(np.diff(values) >= -monotone_tol))
    return RefinementReport(depths, values, float(quad), monotone, float(abs(values[-1] - quad)))


@dataclass(frozen=True)
class RateLevelSet:
    """``{g : J(g) <= a}`` for the conjugate ``chern``."""

    chern: ChernoffFunction
    a: float

    def __post_init__(self):
        if self.a < 0:
            raise DomainError("level must be nonnegative")

    def zero_rate(self, p: int, d: int = 1) -> GridFunction:
        """The mean-slope function, the unique zero of the rate functional."""
        return GridFunction.constant_slope(self.chern.mean, p, d)


def level_set_contains(g: GridFunction, level_set: RateLevelSet) -> bool:
    """``J^(p)(g) <= a`` at the resolution of ``g``.

    Since ``J^(p) <= J`` this is necessary for ``J(g) <= a`` and exact for
    functions whose slope is constant on every depth-``p`` cell.
    """
    return rate_p(g, level_set.chern) <= level_set.a


# ---------------------------------------------------------------------------
# Distance to a level set
# ---------------------------------------------------------------------------

@dataclass
class DistanceResult:
    distance: float
    witness: GridFunction
    trace: List[tuple] = field(default_factory=list)  # (lo, hi, r, feasible)
    witness_rate: float = 0.0


class _Certified(Exception):
    def __init__(self, feasible, increments=None):
        self.feasible = feasible
        self.increments = increments


class _BoxProblem:
    """``min J^(p)(u)`` subject to ``|cumulative(u) - G| <= r`` at every node,
    solved through its Lagrangian dual

        max_{mu+, mu- >= 0}  -sum_j lam (L(theta_j) - 1) - <mu+, G + r> + <mu-, G - r>,
        theta = -A^T (mu+ - mu-),

    whose primal recovery is ``u_j = lam * grad L(theta_j)``.
    """

    def __init__(self, G, d, lam, chern, a):
        self.G = G
        self.d = d
        self.lam = lam
        self.lt = chern.source
        self.a = a
        self.n = G.size

    def _primal(self, x):
        mp, mm = x[: self.n], x[self.n:]
        w = (mp - mm).reshape(self.G.shape)
        theta = -cumulative_adjoint(w, self.d)
        with np.errstate(over="ignore", invalid="ignore"):
            L, dL = self.lt.value_and_grad(theta)
        return mp, mm, theta, L, dL

    def solve(self, r, x0):
        hi = (self.G + r).ravel()
        lo = (self.G - r).ravel()
        lam, a, d = self.lam, self.a, self.d

        def fun(x):
            mp, mm, theta, L, dL = self._primal(x)
            if not (np.all(np.isfinite(L)) and np.all(np.isfinite(dL))):
                return 1e300, np.zeros_like(x)
            u = lam * dL
            Au = _cumsum_axes(u, d).ravel()
            F = lam * float(np.sum(L - 1.0)) + float(mp @ hi) - float(mm @ lo)
            if -F > a + 1e-12 * max(1.0, a):
                raise _Certified(False)
            if np.all(Au <= hi + 1e-13) and np.all(Au >= lo - 1e-13):
                J = lam * float(np.sum(np.sum(theta * dL, axis=-1) - L + 1.0))
                if J <= a:
                    raise _Certified(True, u)
            grad = np.concatenate([hi - Au, Au - lo])
            return min(F, 1e300), grad

        bounds = [(0.0, None)] * (2 * self.n)
        try:
            res = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                                    options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-12})
        except _Certified as cert:
            return cert.feasible, cert.increments, x0
        mp, mm, theta, L, dL = self._primal(res.x)
        dual = -float(res.fun)
        feasible = dual <= a + 1e-9 * max(1.0, a)
        return feasible, (lam * dL if feasible else None), res.x


def distance_to_level_set(g: GridFunction, level_set: RateLevelSet, tol: float = 1e-4,
                          max_bisect: int = 80) -> DistanceResult:
    """Sup-over-nodes distance from ``g`` to the depth-``p`` part of the level set.

    Bisection on the radius ``r``; at each radius a convex feasibility problem
    (is there ``g'`` within ``r`` of ``g`` with ``J^(p)(g') <= a``?) is
    settled by its dual, with early exits on a primal or dual certificate.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    chern = level_set.chern
    if g.k != chern.dim:
        raise DomainError("dimension mismatch between function and level set")
    if level_set_contains(g, level_set):
        return DistanceResult(0.0, g, [], rate_p(g, chern))
    zero = level_set.zero_rate(g.p, g.d)
    hi = g.sup_distance(zero)
    if level_set.a == 0:
        return DistanceResult(hi, zero, [], 0.0)
    lo = 0.0
    lam = g.grid.cell_volume
    problem = _BoxProblem(g.cumulative(), g.d, lam, chern, level_set.a)
    x0 = np.zeros(2 * problem.n)
    witness_inc = zero.increments
    trace = []
    for _ in range(max_bisect):
        if hi - lo <= tol:
            break
        r = 0.5 * (lo + hi)
        feasible, inc, x_next = problem.solve(r, x0)
        trace.append((lo, hi, r, feasible))
        if feasible:
            hi = r
            witness_inc = inc.reshape(g.increments.shape)
        else:
            lo = r
            x0 = x_next
    witness = GridFunction(witness_inc, g.d)
    return DistanceResult(hi, witness, trace, rate_p(witness, chern))


# ---------------------------------------------------------------------------
# Total variation bound and scaling law
# ---------------------------------------------------------------------------

def _directions(k):
    eye = np.eye(k)
    dirs = [eye, -eye]
    if k > 1:
        signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * k, indexing="ij")).reshape(k, -1).T
        dirs.append(signs)
    return np.concatenate(dirs)


def growth_radius(chern: ChernoffFunction, directions=None, level: float = 1.0,
                  r_max: float = 2.0 ** 30) -> float:
    """Radius ``M`` past which ``h(R e) >= level * R`` along each probed ray.

    Scans a dyadic ladder for the last radius with ratio below ``level`` and
    refines the crossing by bisection.  Rays on which ``h`` is infinite are
    skipped.  For k > 1 only the supplied directions are probed.
    """
    if directions is None:
        directions = _directions(chern.dim)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    directions = directions / np.max(np.abs(directions), axis=1, keepdims=True)
    radii = 2.0 ** np.arange(-6, int(np.log2(r_max)) + 1)
    M = 0.0
    for e in directions:
        ratio = lambda R: chern(R * e) / R
        below = [j for j, R in enumerate(radii) if ratio(R) < level]
        if not below:
            continue
        j = below[-1]
        if j == len(radii) - 1:
            return math.inf
        lo_r, hi_r = radii[j], radii[j + 1]
        while hi_r - lo_r > 1e-10 * hi_r:
            mid = 0.5 * (lo_r + hi_r)
            if ratio(mid) < level:
                lo_r = mid
            else:
                hi_r = mid
        M = max(M, hi_r)
    return M


@dataclass
class TVReport:
    total_variation: float
    M: float
    a: float
    contained: bool
    passed: bool

    @property
    def bound(self):
        return self.M + self.a


def tv_bound_check(g: GridFunction, level_set: RateLevelSet, M: Optional[float] = None) -> TVReport:
    """Check ``sum_j |g(C_j)| <= M + a`` for ``g`` in the level set."""
    contained = level_set_contains(g, level_set)
    if M is None:
        M = growth_radius(level_set.chern)
    tv = g.total_variation()
    contained = bool(contained)
    return TVReport(tv, float(M), level_set.a, contained, contained and tv <= M + level_set.a + 1e-12)


def scaling_deviation(g: GridFunction, T: float, rho: float) -> float:
    """``max`` over grid nodes of ``|T g(rho s) - g(s)|``."""
    nodes = g.grid.nodes().reshape(-1, g.d)
    scaled = T * g.evaluate(rho * nodes)
    return float(np.max(np.abs(scaled - g.cumulative().reshape(-1, g.k))))
