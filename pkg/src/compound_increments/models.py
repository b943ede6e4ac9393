"""Joint laws of ``(Y, Z)``, bandwidth schedules and the raw increment process.

Three families are shipped:

* ``constant``: ``Y = y0`` regardless of ``Z``;
* ``bounded``: ``Y = m(Z) + w * (2 B - 1)`` with ``B ~ Beta(a, b)`` per coordinate;
* ``semiparametric``: ``Y | Z = z' ~ N(m(z'), diag(sigma^2))``;

with ``m(z') = intercept + slope @ z'``.  ``Z`` has independent coordinates,
either uniform on a box or Beta on ``[0, 1)``.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .conjugate import (
    ChernoffFunction,
    ExponentialLinearLaplace,
    FoldedGaussianLaplace,
    GaussianLaplace,
    LaplaceTransform,
    MaxAbsLaplace,
    ProductLaplace,
    QuadratureLaplace,
)
from .exceptions import ConfigError, DomainError
from .grid import DyadicGrid, GridFunction
from .seeding import TAG_BATCH, TAG_LOCAL, rng_for

__all__ = [
    "ModelSpec",
    "BandwidthSchedule",
    "SampleBatch",
    "sample_batch",
    "increment_process",
    "bandwidth",
    "verify_local_conditions",
    "LocalConditionsReport",
    "model_from_config",
    "schedule_from_config",
]

FAMILIES = ("constant", "bounded", "semiparametric")
Z_LAWS = ("uniform", "beta")


def _tuple(x, n=None, name="value"):
    arr = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if n is not None and arr.size == 1 and n > 1:
        arr = np.repeat(arr, n)
    if n is not None and arr.size != n:
        raise ConfigError(f"{name} needs {n} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be finite")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class ModelSpec:
    family: str
    k: int
    d: int
    z: Tuple[float, ...]
    y0: Optional[Tuple[float, ...]] = None
    intercept: Optional[Tuple[float, ...]] = None
    slope: Optional[Tuple[float, ...]] = None  # row-major k x d
    scale: Optional[Tuple[float, ...]] = None
    beta_shape: Tuple[float, float] = (2.0, 2.0)
    z_law: str = "uniform"
    z_low: Optional[Tuple[float, ...]] = None
    z_high: Optional[Tuple[float, ...]] = None
    z_beta: Tuple[float, float] = (2.0, 2.0)
    declared_density: Optional[float] = None

    def __post_init__(self):
        put = lambda name, val: object.__setattr__(self, name, val)
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if int(self.k) < 1 or int(self.d) < 1:
            raise ConfigError("k and d must be positive integers")
        put("k", int(self.k))
        put("d", int(self.d))
        k, d = self.k, self.d
        put("z", _tuple(self.z, d, "z"))
        if self.family == "constant":
            if self.y0 is None:
                raise ConfigError("constant family needs y0", missing=["y0"])
            put("y0", _tuple(self.y0, k, "y0"))
        else:
            missing = [n for n in ("intercept", "scale") if getattr(self, n) is None]
            if missing:
                raise ConfigError(f"{self.family} family needs {missing}", missing=missing)
            put("intercept", _tuple(self.intercept, k, "intercept"))
            put("slope", _tuple(self.slope if self.slope is not None else 0.0, k * d, "slope"))
            put("scale", _tuple(self.scale, k, "scale"))
            if min(self.scale) <= 0:
                raise ConfigError("scale entries must be positive")
            put("beta_shape", _tuple(self.beta_shape, 2, "beta_shape"))
            if min(self.beta_shape) <= 0:
                raise ConfigError("beta shape parameters must be positive")
        if self.z_law not in Z_LAWS:
            raise ConfigError(f"unknown z_law {self.z_law!r}; expected one of {Z_LAWS}")
        if self.z_law == "uniform":
            put("z_low", _tuple(self.z_low if self.z_low is not None else 0.0, d, "z_low"))
            put("z_high", _tuple(self.z_high if self.z_high is not None else 1.0, d, "z_high"))
            if any(hi <= lo for lo, hi in zip(self.z_low, self.z_high)):
                raise ConfigError("uniform box needs z_high > z_low")
        else:
            put("z_beta", _tuple(self.z_beta, 2, "z_beta"))
            if min(self.z_beta) <= 0:
                raise ConfigError("beta shape parameters must be positive")
        f = self.density_at_z
        if not f > 0:
            raise ConfigError(f"density of Z vanishes at z={self.z}")
        if self.declared_density is not None:
            declared = float(self.declared_density)
            if abs(declared - f) > 1e-9 * max(1.0, f):
                raise ConfigError(f"declared density_at_z={declared} but the Z law gives {f}")
            put("declared_density", declared)

    # -- constructors ------------------------------------------------------
    @classmethod
    def constant(cls, y0=1.0, d=1, z=0.3, **kw):
        y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        return cls("constant", y0.size, d, z, y0=tuple(y0), **kw)

    @classmethod
    def gaussian(cls, intercept=0.0, slope=1.0, sigma=1.0, k=1, d=1, z=0.5, **kw):
        return cls("semiparametric", k, d, z, intercept=intercept, slope=slope, scale=sigma, **kw)

    @classmethod
    def bounded(cls, intercept=0.0, slope=0.0, half_width=1.0, shape=(2.0, 2.0), k=1, d=1, z=0.5, **kw):
        return cls("bounded", k, d, z, intercept=intercept, slope=slope, scale=half_width,
                   beta_shape=shape, **kw)

    # -- Z law ---------------------------------------------------------------
    @cached_property
    def z_marginals(self):
        if self.z_law == "uniform":
            return [stats.uniform(loc=lo, scale=hi - lo) for lo, hi in zip(self.z_low, self.z_high)]
        a, b = self.z_beta
        return [stats.beta(a, b) for _ in range(self.d)]

    @property
    def density_at_z(self) -> float:
        return float(np.prod([m.pdf(zl) for m, zl in zip(self.z_marginals, self.z)]))

    def box_prob(self, lower, upper) -> float:
        """``P(lower <= Z < upper)`` coordinatewise, exact."""
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (self.d,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (self.d,))
        out = 1.0
        for m, lo, hi in zip(self.z_marginals, lower, upper):
            if hi <= lo:
                return 0.0
            out *= float(m.cdf(hi) - m.cdf(lo))
        return out

    def window(self, h: float):
        """Lower and upper corners of ``z + h^{1/d} [0,1)^d``."""
        if not 0 < h < 1:
            raise DomainError(f"bandwidth must lie in (0, 1), got {h}")
        lo = np.asarray(self.z)
        return lo, lo + h ** (1.0 / self.d)

    def window_prob(self, h: float) -> float:
        return self.box_prob(*self.window(h))

    # vectorised over many boxes, one per row
    def windows(self, hs):
        hs = np.asarray(hs, dtype=float).reshape(-1)
        if np.any((hs <= 0) | (hs >= 1)):
            raise DomainError("bandwidths must lie in (0, 1)")
        lo = np.tile(np.asarray(self.z), (len(hs), 1))
        return lo, lo + (hs ** (1.0 / self.d))[:, None]

    def box_probs(self, lowers, uppers) -> np.ndarray:
        lowers = np.asarray(lowers, dtype=float).reshape(-1, self.d)
        uppers = np.asarray(uppers, dtype=float).reshape(-1, self.d)
        out = np.ones(len(lowers))
        for ax, mg in enumerate(self.z_marginals):
            out *= np.clip(mg.cdf(uppers[:, ax]) - mg.cdf(lowers[:, ax]), 0.0, 1.0)
        return out

    def sample_in_boxes(self, lowers, uppers, rng: np.random.Generator):
        """One pair per row, conditioned on its own box ``lowers[i] <= Z < uppers[i]``."""
        lowers = np.asarray(lowers, dtype=float).reshape(-1, self.d)
        uppers = np.asarray(uppers, dtype=float).reshape(-1, self.d)
        m = len(lowers)
        cols = []
        for ax, mg in enumerate(self.z_marginals):
            flo, fhi = mg.cdf(lowers[:, ax]), mg.cdf(uppers[:, ax])
            if np.any(fhi <= flo):
                raise DomainError("conditioning box has zero probability")
            pts = mg.ppf(flo + (fhi - flo) * rng.random(m))
            cols.append(np.minimum(np.maximum(pts, lowers[:, ax]), np.nextafter(uppers[:, ax], -np.inf)))
        zs = np.column_stack(cols) if m else np.empty((0, self.d))
        return self._draw_y(zs, rng), zs

    def sample_outside_boxes(self, lowers, uppers, rng: np.random.Generator, max_rounds=10_000):
        """One pair per row, conditioned on ``Z`` outside its own box (rejection)."""
        lowers = np.asarray(lowers, dtype=float).reshape(-1, self.d)
        uppers = np.asarray(uppers, dtype=float).reshape(-1, self.d)
        m = len(lowers)
        if m and np.any(self.box_probs(lowers, uppers) >= 1.0):
            raise DomainError("box carries all the mass of Z")
        ys, zs = np.empty((m, self.k)), np.empty((m, self.d))
        todo = np.arange(m)
        for _ in range(max_rounds):
            if todo.size == 0:
                return ys, zs
            y, z = self.sample(todo.size, rng)
            ok = ~np.all((z >= lowers[todo]) & (z < uppers[todo]), axis=1)
            ys[todo[ok]], zs[todo[ok]] = y[ok], z[ok]
            todo = todo[~ok]
        raise DomainError("rejection sampler did not finish")

    # -- Y given Z -----------------------------------------------------------
    @property
    def _slope_matrix(self):
        return np.asarray(self.slope).reshape(self.k, self.d)

    def conditional_mean(self, zp) -> np.ndarray:
        """``E[Y | Z = zp]`` for points of shape ``(d,)`` or ``(m, d)``."""
        zp = np.asarray(zp, dtype=float)
        if self.family == "constant":
            return np.broadcast_to(np.asarray(self.y0), zp.shape[:-1] + (self.k,)).copy()
        return np.asarray(self.intercept) + zp @ self._slope_matrix.T

    def _draw_y(self, zs, rng):
        m = len(zs)
        if self.family == "constant":
            return np.tile(np.asarray(self.y0), (m, 1))
        mean = self.conditional_mean(zs)
        if self.family == "semiparametric":
            return mean + np.asarray(self.scale) * rng.standard_normal((m, self.k))
        a, b = self.beta_shape
        return mean + np.asarray(self.scale) * (2.0 * rng.beta(a, b, size=(m, self.k)) - 1.0)

    def sample_y_given(self, zs, rng: np.random.Generator):
        """Draw ``Y`` given each row of ``zs``."""
        return self._draw_y(np.asarray(zs, dtype=float).reshape(-1, self.d), rng)

    def sample(self, m: int, rng: np.random.Generator):
        """``m`` i.i.d. pairs as arrays ``(y, z)`` of shapes ``(m, k)`` and ``(m, d)``."""
        zs = np.column_stack([mg.ppf(rng.random(m)) for mg in self.z_marginals]) if m else np.empty((0, self.d))
        return self._draw_y(zs, rng), zs

    def sample_in_box(self, m: int, lower, upper, rng: np.random.Generator):
        """``m`` pairs from the law conditioned on ``lower <= Z < upper`` (inverse cdf)."""
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (self.d,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (self.d,))
        return self.sample_in_boxes(np.tile(lower, (m, 1)), np.tile(upper, (m, 1)), rng)

    def sample_outside_box(self, m: int, lower, upper, rng: np.random.Generator):
        """``m`` pairs conditioned on ``Z`` outside the box, by rejection."""
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (self.d,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (self.d,))
        return self.sample_outside_boxes(np.tile(lower, (m, 1)), np.tile(upper, (m, 1)), rng)

    # -- Laplace transforms at z ----------------------------------------------
    def _y_dists(self):
        m = self.conditional_mean(np.asarray(self.z))
        if self.family == "semiparametric":
            return [stats.norm(mi, si) for mi, si in zip(m, self.scale)]
        a, b = self.beta_shape
        return [stats.beta(a, b, loc=mi - w, scale=2 * w) for mi, w in zip(m, self.scale)]

    def laplace_y(self) -> LaplaceTransform:
        """Transform of the conditional law of ``Y`` given ``Z = z``."""
        if self.family == "constant":
            return ExponentialLinearLaplace(self.y0)
        m = self.conditional_mean(np.asarray(self.z))
        if self.family == "semiparametric":
            return GaussianLaplace(m, np.asarray(self.scale) ** 2)
        factors = [QuadratureLaplace.from_distribution(dist) for dist in self._y_dists()]
        return factors[0] if self.k == 1 else ProductLaplace(factors)

    def laplace_abs_y(self) -> LaplaceTransform:
        """Transform of ``max_l |Y_l|`` given ``Z = z``."""
        if self.family == "constant":
            return ExponentialLinearLaplace([max(abs(v) for v in self.y0)])
        if self.family == "semiparametric" and self.k == 1:
            return FoldedGaussianLaplace(self.conditional_mean(np.asarray(self.z))[0], self.scale[0])
        return MaxAbsLaplace(self._y_dists())

    def abs_mgf_given(self, zp, t: float) -> np.ndarray:
        """``E[exp(t max_l |Y_l|) | Z = zp]`` for each row of ``zp``."""
        zp = np.asarray(zp, dtype=float).reshape(-1, self.d)
        if self.family == "constant":
            return np.full(len(zp), math.exp(t * max(abs(v) for v in self.y0)))
        means = self.conditional_mean(zp)
        if self.family == "semiparametric" and self.k == 1:
            m, s = means[:, 0], self.scale[0]
            var = 0.5 * s * s * t * t
            return (np.exp(m * t + var) * stats.norm.cdf(m / s + s * t)
                    + np.exp(-m * t + var) * stats.norm.cdf(-m / s + s * t))
        a, b = self.beta_shape
        out = np.empty(len(zp))
        for i, row in enumerate(means):
            if self.family == "semiparametric":
                dists = [stats.norm(mi, si) for mi, si in zip(row, self.scale)]
            else:
                dists = [stats.beta(a, b, loc=mi - w, scale=2 * w) for mi, w in zip(row, self.scale)]
            out[i] = MaxAbsLaplace(dists)(np.array([t]))
        return out

    @cached_property
    def chernoff_y(self) -> ChernoffFunction:
        return ChernoffFunction(self.laplace_y())

    @cached_property
    def chernoff_abs_y(self) -> ChernoffFunction:
        return ChernoffFunction(self.laplace_abs_y())

    def to_dict(self) -> Dict:
        out = {"family": self.family, "k": self.k, "d": self.d, "z": list(self.z)}
        for name in ("y0", "intercept", "slope", "scale"):
            val = getattr(self, name)
            if val is not None:
                out[name] = list(val)
        if self.family == "bounded":
            out["beta_shape"] = list(self.beta_shape)
        out["z_law"] = self.z_law
        if self.z_law == "uniform":
            out["z_low"], out["z_high"] = list(self.z_low), list(self.z_high)
        else:
            out["z_beta"] = list(self.z_beta)
        out["density_at_z"] = self.density_at_z
        return out


# ---------------------------------------------------------------------------
# Bandwidths
# ---------------------------------------------------------------------------

_BELOW_ONE = float(np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class BandwidthSchedule:
    """``nonstandard``: ``c log log(n v 3) / n``; ``consistent``: ``c (log(n v 3))^power / n``;
    ``custom``: an explicit ``{n: h}`` table."""

    mode: str = "nonstandard"
    c: float = 1.0
    power: float = 2.0
    table: Optional[Tuple[Tuple[int, float], ...]] = None

    def __post_init__(self):
        if self.mode not in ("nonstandard", "consistent", "custom"):
            raise ConfigError(f"unknown bandwidth mode {self.mode!r}")
        if self.mode == "custom":
            if not self.table:
                raise ConfigError("custom schedule needs a table", missing=["table"])
            items = self.table.items() if isinstance(self.table, Mapping) else self.table
            tab = tuple(sorted((int(n), float(h)) for n, h in items))
            if any(not 0 < h < 1 for _, h in tab):
                raise ConfigError("custom bandwidths must lie in (0, 1)")
            object.__setattr__(self, "table", tab)
        elif not self.c > 0:
            raise ConfigError("schedule constant c must be positive")
        elif self.mode == "consistent" and not self.power > 1:
            raise ConfigError("consistent mode needs power > 1 so that n h_n / log n diverges")

    def to_dict(self):
        out = {"mode": self.mode, "c": self.c}
        if self.mode == "consistent":
            out["power"] = self.power
        if self.mode == "custom":
            out["table"] = {str(n): h for n, h in self.table}
        return out


def bandwidth(schedule: BandwidthSchedule, n) -> float:
    if int(n) < 1:
        raise DomainError("n must be at least 1")
    n = int(n)
    if schedule.mode == "custom":
        tab = dict(schedule.table)
        if n not in tab:
            raise ConfigError(f"custom schedule has no entry for n={n}")
        return tab[n]
    ln = math.log(max(n, 3))
    if schedule.mode == "nonstandard":
        h = schedule.c * math.log(ln) / n
    else:
        h = schedule.c * ln ** schedule.power / n
    return min(h, _BELOW_ONE)


# ---------------------------------------------------------------------------
# Samples and the increment process
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SampleBatch:
    y: np.ndarray
    z: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def pairs(self):
        return list(zip(map(tuple, self.y), map(tuple, self.z)))

    def __eq__(self, other):
        return (isinstance(other, SampleBatch) and self.seed == other.seed
                and np.array_equal(self.y, other.y) and np.array_equal(self.z, other.z))

    def to_csv(self, path=None) -> str:
        k, d = self.y.shape[1], self.z.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed", "n", "index"] + [f"y_{i + 1}" for i in range(k)] + [f"z_{i + 1}" for i in range(d)])
        for i, (y, z) in enumerate(zip(self.y, self.z)):
            w.writerow([self.seed, self.n, i] + [repr(float(v)) for v in y] + [repr(float(v)) for v in z])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def sample_batch(model: ModelSpec, n: int, seed: int) -> SampleBatch:
    if int(n) < 1:
        raise DomainError("sample size must be at least 1")
    y, z = model.sample(int(n), rng_for(seed, TAG_BATCH))
    return SampleBatch(y, z, int(seed))


def window_cells(z_points, model: ModelSpec, h: float, p: int):
    """Cell multi-indices at depth ``p`` of the points inside the window, plus the mask."""
    lo, hi = model.window(h)
    side = hi[0] - lo[0]
    z_points = np.asarray(z_points, dtype=float).reshape(-1, model.d)
    inside = np.all((z_points >= lo) & (z_points < hi), axis=1)
    local = (z_points[inside] - lo) / side
    idx = np.clip(np.floor(local * 2 ** p).astype(np.int64), 0, 2 ** p - 1)
    return idx, inside


def accumulate_cells(idx, weights, d, p, k):
    inc = np.zeros((2 ** p,) * d + (k,))
    np.add.at(inc, tuple(idx.T), weights)
    return inc


def increment_process(batch: SampleBatch, model: ModelSpec, h: float, p: int) -> GridFunction:
    """``s -> (n h f(z))^-1 sum_i 1{(Z_i - z)/h^{1/d} < s} Y_i`` on the depth-``p`` grid."""
    if p < 1:
        raise DomainError("grid depth must be at least 1")
    idx, inside = window_cells(batch.z, model, h, p)
    inc = accumulate_cells(idx, batch.y[inside], model.d, p, model.k)
    return GridFunction(inc / (batch.n * h * model.density_at_z), model.d)


# ---------------------------------------------------------------------------
# Local conditions
# ---------------------------------------------------------------------------

def default_probe_sets(d: int) -> Dict[str, List[Tuple[np.ndarray, np.ndarray]]]:
    """Unions of at most ``d`` boxes in ``[0,1]^d``: full cube, disjoint and nested unions."""
    full = [(np.zeros(d), np.ones(d))]
    disjoint = []
    for i in range(d):
        lo = np.zeros(d)
        hi = np.full(d, 0.5)
        lo[0], hi[0] = i / d, i / d + 0.5 / d
        disjoint.append((lo, hi))
    nested = [(np.zeros(d), np.full(d, 0.5)), (np.zeros(d), np.full(d, 0.25))]
    return {"full": full, "disjoint": disjoint, "nested": nested}


def _union_measure(boxes, measure):
    """Inclusion-exclusion over intersections of boxes for a box-additive measure."""
    total = 0.0
    for r in range(1, len(boxes) + 1):
        for combo in itertools.combinations(boxes, r):
            lo = np.max([b[0] for b in combo], axis=0)
            hi = np.min([b[1] for b in combo], axis=0)
            if np.all(hi > lo):
                total += (-1) ** (r + 1) * measure(lo, hi)
    return total


@dataclass
class LocalConditionsReport:
    columns: Tuple[str, ...]
    rows: List[tuple]
    passed: bool
    failures: List[str] = field(default_factory=list)


def verify_local_conditions(model: ModelSpec, h_grid: Sequence[float], t_probes, mc_n: int, seed: int,
                            probe_sets=None) -> LocalConditionsReport:
    """Finite-``h`` drift of the window mass ratio and of the conditional MGF.

    Window probabilities are exact; conditional exponential moments are Monte
    Carlo estimates from ``mc_n`` draws in the window.  The model passes when
    every drift is nonincreasing along ``h_grid`` up to three standard errors.
    """
    h_grid = [float(h) for h in h_grid]
    if any(b >= a for a, b in zip(h_grid, h_grid[1:])):
        raise ConfigError("h_grid must be strictly decreasing")
    if mc_n < 2:
        raise ConfigError("mc_n must be at least 2 for a finite standard error")
    probe_sets = probe_sets or default_probe_sets(model.d)
    t_probes = np.atleast_2d(np.asarray(t_probes, dtype=float).reshape(-1, model.k))
    f = model.density_at_z
    lt = model.laplace_y()
    z0 = np.asarray(model.z)
    rows = []
    series: Dict[str, List[Tuple[float, float]]] = {}
    for hi_idx, h in enumerate(h_grid):
        side = h ** (1.0 / model.d)
        for name, boxes in probe_sets.items():
            lam = _union_measure(boxes, lambda lo, hi: float(np.prod(hi - lo)))
            if lam <= 0:
                raise ConfigError(f"probe set {name!r} has zero Lebesgue measure")
            prob = _union_measure(boxes, lambda lo, hi: model.box_prob(z0 + side * lo, z0 + side * hi))
            ratio = prob / h
            drift = abs(ratio - lam * f)
            rows.append((h, name, "mass", "", ratio, lam * f, drift, 0.0))
            series.setdefault(f"mass:{name}", []).append((drift, 0.0))
        rng = rng_for(seed, TAG_LOCAL, hi_idx)
        ys, _ = model.sample_in_box(mc_n, *model.window(h), rng)
        for ti, t in enumerate(t_probes):
            vals = np.exp(ys @ t)
            est = float(vals.mean())
            se = float(vals.std(ddof=1) / math.sqrt(mc_n))
            target = float(lt(t))
            drift = abs(est - target)
            label = ";".join(f"{v:g}" for v in t)
            rows.append((h, "window", "mgf", label, est, target, drift, se))
            series.setdefault(f"mgf:{label}", []).append((drift, se))
    failures = []
    for key, seq in series.items():
        for (d0, s0), (d1, s1) in zip(seq, seq[1:]):
            if d1 > d0 + 3.0 * math.hypot(s0, s1) + 1e-12:
                failures.append(key)
                break
    cols = ("h", "probe", "quantity", "t", "estimate", "target", "drift", "std_error")
    return LocalConditionsReport(cols, rows, not failures, failures)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_MODEL_KEYS = {"family", "k", "d", "z"}
_OPTIONAL = {"y0", "intercept", "slope", "scale", "beta_shape", "z_law", "z_low", "z_high", "z_beta",
             "density_at_z"}


def model_from_config(cfg: Mapping) -> ModelSpec:
    if not isinstance(cfg, Mapping):
        raise ConfigError("model section must be a mapping", missing=sorted(_MODEL_KEYS))
    missing = sorted(_MODEL_KEYS - set(cfg))
    if missing:
        raise ConfigError(f"model section missing keys {missing}", missing=missing)
    unknown = sorted(set(cfg) - _MODEL_KEYS - _OPTIONAL)
    if unknown:
        raise ConfigError(f"unknown model keys {unknown}")
    kw = {key: cfg[key] for key in _OPTIONAL if key in cfg and key != "density_at_z"}
    for key in ("beta_shape", "z_beta"):
        if key in kw:
            kw[key] = tuple(kw[key])
    return ModelSpec(cfg["family"], cfg["k"], cfg["d"], cfg["z"],
                     declared_density=cfg.get("density_at_z"), **kw)


def schedule_from_config(cfg: Mapping) -> BandwidthSchedule:
    if not isinstance(cfg, Mapping) or "mode" not in cfg:
        raise ConfigError("schedule section missing keys ['mode']", missing=["mode"])
    mode = cfg["mode"]
    if mode != "custom" and "c" not in cfg:
        raise ConfigError("schedule section missing keys ['c']", missing=["c"])
    table = cfg.get("table")
    if table is not None:
        table = tuple((int(n), float(h)) for n, h in dict(table).items())
    return BandwidthSchedule(mode, float(cfg.get("c", 1.0)), float(cfg.get("power", 2.0)), table)
