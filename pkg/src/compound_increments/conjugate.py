"""Laplace transforms of the shipped conditional laws and their Chernoff
functions, i.e. Legendre-Fenchel conjugates of ``L - 1``.

Every transform works on arrays of shape ``(..., k)`` and exposes the value,
gradient and Hessian.  :class:`ChernoffFunction` maximises the concave
objective ``<t, u> - (L(t) - 1)`` with a damped Newton ascent.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .exceptions import DomainError, ModelError

__all__ = [
    "LaplaceTransform",
    "ExponentialLinearLaplace",
    "GaussianLaplace",
    "FoldedGaussianLaplace",
    "QuadratureLaplace",
    "MaxAbsLaplace",
    "ProductLaplace",
    "ChernoffFunction",
    "ConjugatePoint",
    "SuperlinearityReport",
    "chernoff_eval",
    "chernoff_level_roots",
    "superlinearity_certificate",
    "poisson_chernoff",
]


def _exp(x):
    return math.exp(x) if x < 709.0 else math.inf


def _as_points(t, dim):
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        t = t.reshape(1)
    if t.shape[-1] != dim:
        raise DomainError(f"expected trailing dimension {dim}, got shape {t.shape}")
    return t


class LaplaceTransform:
    """Base class: ``L(t) = E exp<t, Y>`` for a law on R^k."""

    dim: int = 1

    def derivatives(self, t):
        """Return ``(L, grad L, hess L)`` at a single point ``t`` of shape (k,)."""
        raise NotImplementedError

    def __call__(self, t):
        t = _as_points(t, self.dim)
        flat = t.reshape(-1, self.dim)
        out = np.array([self.derivatives(row)[0] for row in flat])
        return out.reshape(t.shape[:-1])

    def grad(self, t):
        t = _as_points(t, self.dim)
        flat = t.reshape(-1, self.dim)
        out = np.array([self.derivatives(row)[1] for row in flat])
        return out.reshape(t.shape)

    def hess(self, t):
        t = _as_points(t, self.dim)
        flat = t.reshape(-1, self.dim)
        out = np.array([self.derivatives(row)[2] for row in flat])
        return out.reshape(t.shape + (self.dim,))

    def mean(self):
        return self.derivatives(np.zeros(self.dim))[1]

    def value_and_grad(self, t):
        """Vectorised ``(L, grad L)`` over leading axes."""
        return self(t), self.grad(t)


class ExponentialLinearLaplace(LaplaceTransform):
    """Degenerate law ``Y = y0``: ``L(t) = exp<t, y0>``."""

    def __init__(self, y0):
        self.y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        self.dim = self.y0.size

    def derivatives(self, t):
        with np.errstate(over="ignore"):
            L = _exp(float(np.dot(t, self.y0)))
        return L, L * self.y0, L * np.outer(self.y0, self.y0)

    def __call__(self, t):
        t = _as_points(t, self.dim)
        with np.errstate(over="ignore"):
            return np.exp(t @ self.y0)

    def grad(self, t):
        L = self(t)
        return L[..., None] * self.y0

    def value_and_grad(self, t):
        L = self(t)
        return L, L[..., None] * self.y0


class GaussianLaplace(LaplaceTransform):
    """Independent Gaussian coordinates: ``exp(<m, t> + sum(var * t^2) / 2)``."""

    def __init__(self, mean, var):
        self.m = np.atleast_1d(np.asarray(mean, dtype=float))
        self.var = np.broadcast_to(np.asarray(var, dtype=float), self.m.shape).copy()
        self.dim = self.m.size

    def __call__(self, t):
        t = _as_points(t, self.dim)
        with np.errstate(over="ignore"):
            return np.exp(t @ self.m + 0.5 * (t * t) @ self.var)

    def grad(self, t):
        t = _as_points(t, self.dim)
        return self(t)[..., None] * (self.m + self.var * t)

    def value_and_grad(self, t):
        t = _as_points(t, self.dim)
        L = self(t)
        return L, L[..., None] * (self.m + self.var * t)

    def derivatives(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            L = _exp(float(t @ self.m + 0.5 * (t * t) @ self.var))
        v = self.m + self.var * t
        return L, L * v, L * (np.outer(v, v) + np.diag(self.var))


class FoldedGaussianLaplace(LaplaceTransform):
    """Transform of ``|Y|`` for scalar ``Y ~ N(mu, sigma^2)``, closed form."""

    dim = 1

    def __init__(self, mu, sigma):
        self.mu = float(mu)
        self.sigma = float(sigma)

    def derivatives(self, t):
        t = float(np.asarray(t).reshape(-1)[0])
        mu, s = self.mu, self.sigma
        a = mu / s
        with np.errstate(over="ignore"):
            A = _exp(mu * t + 0.5 * s * s * t * t) * special.ndtr(a + s * t)
            B = _exp(-mu * t + 0.5 * s * s * t * t) * special.ndtr(-a + s * t)
        phi_a = math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi)
        dA = (mu + s * s * t) * A + s * phi_a
        dB = (-mu + s * s * t) * B + s * phi_a
        L = A + B
        g = dA + dB
        H = s * s * (A + B) + (mu + s * s * t) * dA + (-mu + s * s * t) * dB
        return L, np.array([g]), np.array([[H]])


class QuadratureLaplace(LaplaceTransform):
    """Scalar law with a density on a finite interval; moments by adaptive quadrature."""

    dim = 1

    def __init__(self, pdf, lo, hi, epsrel=1e-12):
        if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
            raise DomainError("quadrature transform needs a finite support interval")
        self.pdf = pdf
        self.lo = float(lo)
        self.hi = float(hi)
        self.epsrel = epsrel
        self._moments = functools.lru_cache(maxsize=4096)(self._moments_uncached)

    @classmethod
    def from_distribution(cls, dist, **kw):
        lo, hi = dist.support()
        return cls(dist.pdf, lo, hi, **kw)

    def _moments_uncached(self, t):
        c = self.hi if t > 0 else self.lo
        out = []
        for m in range(3):
            val, _ = integrate.quad(
                lambda x: x**m * math.exp(t * (x - c)) * self.pdf(x),
                self.lo, self.hi, epsabs=0.0, epsrel=self.epsrel, limit=200,
            )
            out.append(val)
        scale = _exp(t * c)
        return tuple(scale * v for v in out)

    def derivatives(self, t):
        m0, m1, m2 = self._moments(float(np.asarray(t).reshape(-1)[0]))
        return m0, np.array([m1]), np.array([[m2]])


class MaxAbsLaplace(LaplaceTransform):
    """Transform of ``max_l |Y_l|`` for independent scalar coordinates.

    ``dists`` are frozen scipy distributions.  The density of the maximum is
    assembled from the folded marginals and integrated with a composite
    Gauss-Legendre rule (``panels`` x 16 nodes), vectorised over the nodes.
    """

    dim = 1
    _NODES, _WEIGHTS = np.polynomial.legendre.leggauss(16)

    def __init__(self, dists, panels=96):
        self.dists = list(dists)
        self.panels = int(panels)
        bounds = []
        for dist in self.dists:
            lo, hi = dist.support()
            bounds.append(max(abs(lo), abs(hi)))
        self._finite_top = max(bounds)
        # kinks of the folded densities sit at |support edges|
        self._breaks = sorted({abs(float(v)) for dist in self.dists for v in dist.support()
                               if np.isfinite(v)})
        self._rules = {}
        self._moments = functools.lru_cache(maxsize=4096)(self._moments_uncached)

    def pdf(self, m):
        m = np.asarray(m, dtype=float)
        pdfs = [d.pdf(m) + d.pdf(-m) for d in self.dists]
        cdfs = [np.clip(d.cdf(m) - d.cdf(-m), 0.0, 1.0) for d in self.dists]
        total = np.zeros_like(m)
        for idx, p in enumerate(pdfs):
            prod = p
            for j, c in enumerate(cdfs):
                if j != idx:
                    prod = prod * c
            total = total + prod
        return np.where(m < 0, 0.0, total)

    def _top(self, t):
        if np.isfinite(self._finite_top):
            return self._finite_top
        top = 0.0
        for d in self.dists:
            mu, sd = abs(float(d.mean())), float(d.std())
            top = max(top, mu + sd * (12.0 + sd * max(t, 0.0)))
        return top

    def _rule(self, top):
        rule = self._rules.get(top)
        if rule is None:
            edges = np.unique(np.concatenate([np.linspace(0.0, top, self.panels + 1),
                                              [b for b in self._breaks if 0.0 < b < top]]))
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[1:] + edges[:-1])
            x = (mid[:, None] + half[:, None] * self._NODES[None, :]).ravel()
            w = (half[:, None] * self._WEIGHTS[None, :]).ravel() * self.pdf(x)
            rule = (x, w)
            if len(self._rules) < 64:
                self._rules[top] = rule
        return rule

    def _moments_uncached(self, t):
        top = self._top(t)
        x, w = self._rule(top)
        c = top if t > 0 else 0.0
        e = np.exp(t * (x - c)) * w
        scale = _exp(t * c)
        return scale * float(e.sum()), scale * float((x * e).sum()), scale * float((x * x * e).sum())

    def derivatives(self, t):
        m0, m1, m2 = self._moments(float(np.asarray(t).reshape(-1)[0]))
        return m0, np.array([m1]), np.array([[m2]])


class ProductLaplace(LaplaceTransform):
    """Independent coordinates, each with its own scalar transform."""

    def __init__(self, factors: Sequence[LaplaceTransform]):
        self.factors = list(factors)
        self.dim = len(self.factors)

    def derivatives(self, t):
        t = np.asarray(t, dtype=float)
        vals, d1, d2 = [], [], []
        for ti, f in zip(t, self.factors):
            L, g, H = f.derivatives(np.array([ti]))
            vals.append(L)
            d1.append(g[0])
            d2.append(H[0, 0])
        vals = np.array(vals)
        total = float(np.prod(vals))
        k = self.dim
        grad = np.empty(k)
        hess = np.empty((k, k))
        for i in range(k):
            others = np.prod(np.delete(vals, i))
            grad[i] = d1[i] * others
            hess[i, i] = d2[i] * others
            for j in range(i + 1, k):
                rest = np.prod(np.delete(vals, [i, j]))
                hess[i, j] = hess[j, i] = d1[i] * d1[j] * rest
        return total, grad, hess


# ---------------------------------------------------------------------------
# Chernoff function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConjugatePoint:
    value: float
    argmax: Optional[np.ndarray]
    iterations: int
    attained: bool


def poisson_chernoff(x):
    """Closed form ``x log x - x + 1`` (value 1 at 0, +inf for x < 0)."""
    x = float(x)
    if x < 0:
        return math.inf
    if x == 0:
        return 1.0
    return x * math.log(x) - x + 1.0


class ChernoffFunction:
    """Conjugate ``h(u) = sup_t <t, u> - (L(t) - 1)`` of a Laplace transform."""

    def __init__(self, source: LaplaceTransform, tol: Optional[float] = None,
                 ceiling: float = 1e12, max_iter: int = 400):
        self.source = source
        self.dim = source.dim
        self.tol = tol if tol is not None else (1e-8 if source.dim == 1 else 1e-6)
        self.ceiling = ceiling
        self.max_iter = max_iter
        self._cache = {}

    @property
    def mean(self):
        return self.source.mean()

    def evaluate(self, u) -> ConjugatePoint:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.dim,):
            raise DomainError(f"point of shape {u.shape} for a {self.dim}-dim conjugate")
        key = tuple(u.tolist())
        hit = self._cache.get(key)
        if hit is None:
            hit = self._maximize(u)
            if len(self._cache) < 200_000:
                self._cache[key] = hit
        return hit

    def __call__(self, u) -> float:
        return self.evaluate(u).value

    def values(self, us):
        """Evaluate at every row of an ``(m, k)`` (or ``(m,)`` when k = 1) array."""
        us = np.asarray(us, dtype=float)
        flat = us.reshape(-1, self.dim)
        return np.array([self.evaluate(row).value for row in flat]).reshape(
            us.shape[:-1] if (us.ndim > 1 or self.dim > 1) else us.shape
        )

    def _derivs(self, t):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.source.derivatives(t)

    def _maximize(self, u) -> ConjugatePoint:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return self._ascend(u)

    def _ascend(self, u) -> ConjugatePoint:
        k = self.dim
        t = np.zeros(k)
        L, dL, d2L = self._derivs(t)
        if not np.isfinite(L):
            raise ModelError("Laplace transform is not finite at the origin")
        phi = float(u @ t) - (L - 1.0)
        it = 0
        for it in range(1, self.max_iter + 1):
            g = u - dL
            if k == 1:
                H = float(d2L[0, 0])
                s = np.array([g[0] / H]) if H > 0 else np.array([math.copysign(1e12, g[0])])
            else:
                w, V = np.linalg.eigh(d2L)
                floor = max(float(w.max()), 1e-300) * 1e-14
                s = V @ ((V.T @ g) / np.maximum(w, floor))
            with np.errstate(over="ignore", invalid="ignore"):
                dec = float(g @ s)
            if not (np.all(np.isfinite(s)) and np.isfinite(dec)) or dec > 2.0 * self.ceiling:
                # flat curvature: aim one step straight past the ceiling
                gg = float(g @ g)
                if gg == 0.0:
                    break
                s = g * (2.0 * self.ceiling / gg)
                dec = 2.0 * self.ceiling
            if dec <= 1e-18 * max(1.0, abs(phi)):
                break
            alpha = 1.0
            accepted = False
            while alpha > 1e-14:
                tn = t + alpha * s
                Ln, dLn, d2Ln = self._derivs(tn)
                if np.isfinite(Ln) and np.all(np.isfinite(dLn)):
                    phin = float(u @ tn) - (Ln - 1.0)
                    if phin >= phi + 1e-4 * alpha * min(dec, 1e300):
                        accepted = True
                        break
                alpha *= 0.5
            if not accepted:
                break
            t, L, dL, d2L, phi = tn, Ln, dLn, d2Ln, phin
            if phi > self.ceiling:
                return ConjugatePoint(math.inf, None, it, False)
        if not np.isfinite(L):
            raise ModelError("Laplace transform left the finite region during ascent")
        curv = float(np.linalg.eigvalsh(d2L).min()) if k > 1 else float(d2L[0, 0])
        attained = curv > 1e-10 and bool(np.all(np.isfinite(t)))
        return ConjugatePoint(max(phi, 0.0), t.copy() if attained else None, it, attained)


def chernoff_eval(chern: ChernoffFunction, u, tol: Optional[float] = None) -> float:
    """Value of the conjugate at ``u`` (``math.inf`` when the supremum is infinite)."""
    if tol is not None and tol <= 0:
        raise DomainError("tol must be positive")
    return chern.evaluate(u).value


def chernoff_level_roots(chern: ChernoffFunction, level: float, xtol: float = 1e-12):
    """Solutions ``(x_lo, x_hi)`` of ``h(x) = level`` on either side of the mean.

    A side on which ``h`` never reaches ``level`` (it jumps to +inf at the
    edge of its domain instead) is reported as ``None``.
    """
    if chern.dim != 1:
        raise DomainError("level roots are defined for one-dimensional conjugates")
    if not level > 0:
        raise DomainError("level must be positive")
    mean = float(chern.mean[0])
    h = lambda x: chern(np.array([x]))

    def side(direction):
        step = max(1.0, abs(mean))
        far = mean + direction * step
        while h(far) < level:
            step *= 2.0
            far = mean + direction * step
            if step > 1e15:
                return None
        near = mean
        while abs(far - near) > xtol * max(1.0, abs(near)):
            mid = 0.5 * (near + far)
            if h(mid) < level:
                near = mid
            else:
                far = mid
        # near is the last point below level; a jump to inf means a domain edge
        return near if abs(h(near) - level) < 1e-6 * max(1.0, level) else None

    return side(-1.0), side(1.0)


@dataclass
class SuperlinearityReport:
    radii: np.ndarray
    directions: np.ndarray
    ratios: np.ndarray  # (n_directions, n_radii), h(R e) / R
    threshold: float
    passed: bool
    unbounded: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))

    def radius_beyond(self, level: float = 1.0) -> float:
        """Smallest ladder radius from which ``h(R e) >= level * R`` on every ray."""
        ok = self.ratios >= level
        for j in range(len(self.radii)):
            if ok[:, j:].all():
                return float(self.radii[j])
        return math.inf


def superlinearity_certificate(chern: ChernoffFunction, radii, directions=None,
                               threshold: float = 1.0) -> SuperlinearityReport:
    """Tabulate ``h(R e) / R`` along rays to certify superlinear growth.

    A direction whose ratio is already infinite at the first radius is
    reported as immediately unbounded.  The certificate passes when every
    finite sequence is increasing and tops out above ``threshold``.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size < 2 or np.any(np.diff(radii) <= 0):
        raise DomainError("radii must be an increasing ladder with at least two entries")
    if directions is None:
        eye = np.eye(chern.dim)
        directions = np.concatenate([eye, -eye])
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    directions = directions / np.max(np.abs(directions), axis=1, keepdims=True)
    ratios = np.empty((len(directions), len(radii)))
    for i, e in enumerate(directions):
        for j, R in enumerate(radii):
            ratios[i, j] = chern(R * e) / R
    unbounded = np.isinf(ratios[:, 0])
    passed = True
    for i in range(len(directions)):
        if unbounded[i]:
            continue
        row = ratios[i]
        if np.any(np.diff(row) <= 0) or not row[-1] > threshold:
            passed = False
    return SuperlinearityReport(radii, directions, ratios, threshold, passed, unbounded)


def biconjugate(chern: ChernoffFunction, t: float, bracket=None) -> float:
    """``sup_u t u - h(u)`` for a scalar conjugate (recovers ``L(t) - 1``)."""
    if chern.dim != 1:
        raise DomainError("biconjugate check is scalar only")
    centre = float(chern.source.grad(np.array([t]))[0])
    lo, hi = bracket if bracket is not None else (centre - 1.0 - abs(centre), centre + 1.0 + abs(centre))
    res = optimize.minimize_scalar(lambda u: -(t * u - chern(np.array([u]))),
                                   bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10})
    return float(-res.fun)
