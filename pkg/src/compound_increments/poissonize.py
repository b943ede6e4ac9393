"""Compound Poisson processes, the Bernoulli/Poisson coupling of the
single-point increments, and the exponential bounds on absolute oscillations."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from .conjugate import ChernoffFunction
from .exceptions import ConfigError, DomainError
from .grid import GridFunction
from .models import BandwidthSchedule, ModelSpec, accumulate_cells, bandwidth, window_cells
from .seeding import TAG_COUPLING, TAG_OSCILLATION, TAG_POISSON, rng_for

__all__ = [
    "CompoundPoissonRealization",
    "sample_compound_poisson",
    "poissonized_increment",
    "sample_window_atoms",
    "CouplingRealization",
    "build_coupling",
    "coupling_mismatch_prob",
    "item_c_pmf",
    "oscillation_bound",
    "oscillation_grid_size",
    "OscillationReport",
    "mc_oscillation_tail",
    "calibrate_hx",
    "MAX_DELTA",
]

MAX_DELTA = math.sqrt(2.0) - 1.0


@dataclass(frozen=True, eq=False)
class CompoundPoissonRealization:
    """``eta`` atoms ``(y_j, loc_j)`` and the window ``z + h^{1/d} [0,1)^d`` they are read through."""

    eta: int
    y: np.ndarray
    loc: np.ndarray
    z: tuple
    h: float

    @property
    def window(self):
        lo = np.asarray(self.z)
        return lo, lo + self.h ** (1.0 / len(self.z))

    def local_positions(self):
        return (self.loc - np.asarray(self.z)) / self.h ** (1.0 / len(self.z))

    def evaluate(self, s, absolute=False):
        """``sum_j 1{(loc_j - z)/h^{1/d} in [0, s)} y_j`` at points ``s`` of shape ``(m, d)``."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        pos = self.local_positions()
        weights = np.max(np.abs(self.y), axis=1, keepdims=True) if absolute else self.y
        inside = np.all((pos[None, :, :] >= 0) & (pos[None, :, :] < s[:, None, :]), axis=2)
        return inside.astype(float) @ weights

    def box_mass(self, lower, upper):
        """``U`` of the local box ``[lower, upper)``."""
        pos = self.local_positions()
        sel = np.all((pos >= lower) & (pos < upper), axis=1)
        return self.y[sel].sum(axis=0)


def sample_compound_poisson(model: ModelSpec, h: float, mean: float, seed, counter: int = 0
                            ) -> CompoundPoissonRealization:
    """``eta ~ Poisson(mean)`` i.i.d. atoms from the full law of ``(Y, Z)``."""
    if not 0 < h < 1:
        raise DomainError("bandwidth must lie in (0, 1)")
    if not mean > 0:
        raise DomainError("mean must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, TAG_POISSON, counter)
    eta = int(rng.poisson(mean))
    y, z = model.sample(eta, rng)
    return CompoundPoissonRealization(eta, y, z, model.z, float(h))


def sample_window_atoms(model: ModelSpec, h: float, total_mean: float, rng):
    """Atoms of a compound Poisson process with mean count ``total_mean``, restricted to the window.

    Thinning: the window keeps a Poisson(``total_mean * P(Z in window)``)
    number of atoms, each drawn from the law conditioned on the window.
    """
    lo, hi = model.window(h)
    count = int(rng.poisson(total_mean * model.box_prob(lo, hi)))
    return model.sample_in_box(count, lo, hi, rng)


def poissonized_increment(realizations: Sequence[CompoundPoissonRealization], model: ModelSpec, h: float,
                          p: int, absolute: bool = False) -> GridFunction:
    """``(n h f(z))^-1 sum_i U_i(h^{1/d} s)`` on the depth-``p`` grid.

    With ``absolute`` each atom carries ``max_l |y_l|`` instead of ``y``.
    """
    if not realizations:
        raise ConfigError("need at least one realization")
    for r in realizations:
        if r.h != h or tuple(r.z) != tuple(model.z):
            raise ConfigError("realizations were read through different windows")
    n = len(realizations)
    k = 1 if absolute else model.k
    y = np.concatenate([r.y for r in realizations]) if n else np.empty((0, model.k))
    z = np.concatenate([r.loc for r in realizations])
    idx, inside = window_cells(z, model, h, p)
    weights = y[inside]
    if absolute:
        weights = np.max(np.abs(weights), axis=1, keepdims=True)
    inc = accumulate_cells(idx, weights, model.d, p, k)
    return GridFunction(inc / (n * h * model.density_at_z), model.d)


# ---------------------------------------------------------------------------
# Coupling
# ---------------------------------------------------------------------------

def coupling_mismatch_prob(p: float) -> float:
    """``P(v b != b) = p (1 - e^{-p})``: exact, and at most ``p^2``."""
    if not 0 < p < 1:
        raise DomainError("p must lie in (0, 1)")
    return -p * math.expm1(-p)


def item_c_pmf(p: float, m_max: int) -> np.ndarray:
    """Law of the auxiliary count ``v`` on ``0..m_max``: ``P(v = 0) = 1 - (1 - e^{-p})/p``,
    ``P(v = m) = p^{m-1} e^{-p} / m!``."""
    if not 0 < p <= 1:
        raise DomainError("p must lie in (0, 1]")
    m = np.arange(1, m_max + 1)
    tail = np.exp((m - 1) * math.log(p) - p - np.array([math.lgamma(v + 1) for v in m]))
    return np.concatenate([[1.0 + math.expm1(-p) / p], tail])


def _draw_v(p, rng):
    # mixture: 0 with prob 1 - (1 - e^-p)/p, else Poisson(p) conditioned on >= 1
    q0 = 1.0 + np.expm1(-p) / p
    zero = rng.random(len(p)) < q0
    w = 1.0 - rng.random(len(p))
    e = np.exp(-p)
    v = stats.poisson.ppf(e + w * (1.0 - e), p)
    v = np.maximum(np.nan_to_num(v, nan=1.0), 1.0).astype(np.int64)
    v[zero] = 0
    return v


@dataclass(frozen=True, eq=False)
class CouplingRealization:
    """Struct-of-arrays record of the coupling for indices ``i`` in ``indices``.

    Inside pairs of index ``i`` are rows ``inside_offsets[i]:inside_offsets[i+1]``
    of ``inside_y``/``inside_z``; background atoms are stored the same way.
    """

    model: ModelSpec
    indices: np.ndarray
    h: np.ndarray
    p: np.ndarray
    b: np.ndarray
    v: np.ndarray
    inside_offsets: np.ndarray
    inside_y: np.ndarray
    inside_z: np.ndarray
    outside_y: np.ndarray
    outside_z: np.ndarray
    background_offsets: np.ndarray
    background_y: np.ndarray
    background_z: np.ndarray

    @property
    def eta_star(self) -> np.ndarray:
        return self.v * self.b

    def __len__(self):
        return len(self.indices)

    def match(self) -> np.ndarray:
        """Indicator of ``eta*_i = b_i``, under which the Poissonized and single-point increments agree."""
        return self.eta_star == self.b

    def derived_pairs(self):
        """``(Y_i1, Z_i1)``: the first inside pair when ``b_i = 1``, else the outside pair."""
        first = np.minimum(self.inside_offsets[:-1], max(len(self.inside_y) - 1, 0))
        take = self.b.astype(bool)
        y = self.outside_y.copy()
        z = self.outside_z.copy()
        if take.any():
            y[take] = self.inside_y[first[take]]
            z[take] = self.inside_z[first[take]]
        return y, z

    def process(self, row: int) -> CompoundPoissonRealization:
        """``U_i`` = background atoms plus the first ``eta*_i`` inside pairs."""
        bo, io_ = self.background_offsets, self.inside_offsets
        es = int(self.eta_star[row])
        y = np.concatenate([self.background_y[bo[row]:bo[row + 1]], self.inside_y[io_[row]:io_[row] + es]])
        z = np.concatenate([self.background_z[bo[row]:bo[row + 1]], self.inside_z[io_[row]:io_[row] + es]])
        return CompoundPoissonRealization(len(y), y, z, self.model.z, float(self.h[row]))

    def match_through(self, row: int, later_h: Sequence[float], p: int = 4) -> bool:
        """Direct check that ``U_i`` read through each of ``later_h`` equals the single-point increment."""
        proc = self.process(row)
        y1, z1 = self.derived_pairs()
        single = CompoundPoissonRealization(1, y1[row:row + 1], z1[row:row + 1], self.model.z, 0.5)
        for h in later_h:
            a = CompoundPoissonRealization(proc.eta, proc.y, proc.loc, self.model.z, float(h))
            b = CompoundPoissonRealization(1, single.y, single.loc, self.model.z, float(h))
            nodes = np.stack(np.meshgrid(*[np.arange(1, 2 ** p + 1) / 2 ** p] * self.model.d,
                                         indexing="ij"), axis=-1).reshape(-1, self.model.d)
            if not np.array_equal(a.evaluate(nodes), b.evaluate(nodes)):
                return False
        return True

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "h", "p", "b", "v", "eta_star", "match"])
        for row in zip(self.indices, self.h, self.p, self.b, self.v, self.eta_star, self.match()):
            w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), int(row[3]), int(row[4]),
                        int(row[5]), int(row[6])])
        return buf.getvalue()


def _offsets(counts):
    return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)


def build_coupling(model: ModelSpec, schedule: Optional[BandwidthSchedule], n_max: int, seed: int,
                   bandwidths: Optional[Sequence[float]] = None) -> CouplingRealization:
    """Coupling for indices ``1..n_max`` with ``h_i`` from ``schedule`` (or explicit ``bandwidths``).

    Families drawn, all independent: ``b_i ~ Bernoulli(p_i)``; ``v_i`` from
    :func:`item_c_pmf`; inside pairs (law given ``Z`` in window ``i``);
    one outside pair (law given ``Z`` outside); background atoms, a
    Poisson(``1 - p_i``) number of outside pairs.
    """
    if bandwidths is None:
        if n_max < 1:
            raise DomainError("n_max must be at least 1")
        hs = np.array([bandwidth(schedule, i) for i in range(1, n_max + 1)])
    else:
        hs = np.asarray(bandwidths, dtype=float).reshape(-1)
    n = len(hs)
    lowers, uppers = model.windows(hs)
    p = model.box_probs(lowers, uppers)
    if np.any(p >= 1.0):
        raise ConfigError("window carries all the mass of Z (p_i >= 1)")
    if np.any(p <= 0.0):
        raise ConfigError("window carries no mass of Z (p_i = 0)")
    rng = rng_for(seed, TAG_COUPLING)
    b = (rng.random(n) < p).astype(np.int64)
    v = _draw_v(p, rng)
    n_in = np.maximum(v * b, b)
    rows_in = np.repeat(np.arange(n), n_in)
    in_y, in_z = model.sample_in_boxes(lowers[rows_in], uppers[rows_in], rng)
    out_y, out_z = model.sample_outside_boxes(lowers, uppers, rng)
    n_bg = rng.poisson(1.0 - p)
    rows_bg = np.repeat(np.arange(n), n_bg)
    bg_y, bg_z = model.sample_outside_boxes(lowers[rows_bg], uppers[rows_bg], rng)
    return CouplingRealization(model, np.arange(1, n + 1), hs, p, b, v, _offsets(n_in), in_y, in_z,
                               out_y, out_z, _offsets(n_bg), bg_y, bg_z)


# ---------------------------------------------------------------------------
# Oscillations
# ---------------------------------------------------------------------------

def _check_delta(delta):
    if not 0 < delta <= MAX_DELTA + 1e-15:
        raise DomainError(f"delta must lie in (0, sqrt(2) - 1], got {delta}")


def oscillation_grid_size(delta: float) -> int:
    _check_delta(delta)
    return 1 + math.ceil(3.0 / (MAX_DELTA * delta))


def oscillation_bound(delta: float, x: float, nhf: float, chern: ChernoffFunction, d: int = 1,
                      mode: str = "local") -> float:
    """``(10/delta)^d exp(-d delta nhf h(x))`` (``local``) or ``exp(-nhf h(x))`` (``global``).

    ``chern`` must be the conjugate for ``max_l |Y_l|``.
    """
    _check_delta(delta)
    if x < 0:
        raise DomainError("x must be nonnegative")
    if nhf <= 0:
        raise DomainError("nhf must be positive")
    hx = chern(x)
    if mode == "local":
        return (10.0 / delta) ** d * math.exp(-d * delta * nhf * hx) if math.isfinite(hx) else 0.0
    if mode == "global":
        return math.exp(-nhf * hx) if math.isfinite(hx) else 0.0
    raise DomainError(f"unknown bound mode {mode!r}")


def _pareto_offsets(delta, M, d):
    """Nonnegative integer offsets ``o`` with ``|o|_2 / M <= delta``, maximal in the product order."""
    w = int(math.floor(delta * M + 1e-12))
    grids = np.stack(np.meshgrid(*[np.arange(w + 1)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    ok = grids[np.sum(grids.astype(float) ** 2, axis=1) <= (delta * M) ** 2 * (1 + 1e-12)]
    keep = []
    for o in ok:
        dominated = np.any(np.all(ok >= o, axis=1) & np.any(ok > o, axis=1))
        if not dominated:
            keep.append(o)
    return np.array(keep, dtype=np.int64)


@dataclass
class OscillationReport:
    delta: float
    x: float
    nhf: float
    empirical_tail: float
    analytic_bound: float
    replications: int
    seed: int
    mode: str = "local"
    status: str = "ok"

    COLUMNS = ("delta", "x", "nhf", "empirical_tail", "analytic_bound", "replications", "seed", "mode", "status")

    @property
    def std_error(self) -> float:
        q = min(max(self.empirical_tail, 0.0), 1.0)
        return math.sqrt(max(q * (1 - q), 0.0) / self.replications)

    def dominated(self, sigmas: float = 3.0) -> bool:
        """Empirical tail at most the bound plus ``sigmas`` binomial standard errors at the bound."""
        b = min(self.analytic_bound, 1.0)
        slack = sigmas * math.sqrt(b * (1 - b) / self.replications)
        return self.empirical_tail <= self.analytic_bound + slack

    def row(self):
        return (self.delta, self.x, self.nhf, self.empirical_tail, self.analytic_bound, self.replications,
                self.seed, self.mode, self.status)


def mc_oscillation_tail(model: ModelSpec, h: float, n: int, delta: float, x: float, replications: int,
                        seed: int, mode: str = "local", chunk_cells: int = 4_000_000) -> OscillationReport:
    """Monte Carlo tail of the absolute oscillation next to its analytic bound.

    ``local``: frequency of ``sup |F(s) - F(s')| >= 2 d delta x`` over pairs of
    points of the grid ``{i/M}^d`` at Euclidean distance ``<= delta``.
    ``global``: frequency of ``F(1) >= x``.  ``F`` is the absolute Poissonized
    increment; ``M = 1 + ceil(3 / ((sqrt 2 - 1) delta))``.
    """
    if replications < 1:
        raise ConfigError("replications must be positive")
    if mode not in ("local", "global"):
        raise DomainError(f"unknown mode {mode!r}")
    M = oscillation_grid_size(delta)
    d = model.d
    f = model.density_at_z
    nhf = n * h * f
    chern = model.chernoff_abs_y
    bound = oscillation_bound(delta, x, nhf, chern, d, mode)
    status = "vacuous" if chern(x) == 0.0 else "ok"
    lo, hi = model.window(h)
    p_window = model.box_prob(lo, hi)
    threshold = 2 * d * delta * x if mode == "local" else x
    offsets = _pareto_offsets(delta, M, d)
    cells = M ** d if mode == "local" else 1
    per_chunk = max(1, chunk_cells // cells)
    hits = 0
    done = 0
    chunk_id = 0
    while done < replications:
        r = min(per_chunk, replications - done)
        rng = rng_for(seed, TAG_OSCILLATION, chunk_id)
        counts = rng.poisson(n * p_window, size=r)
        y, z = model.sample_in_box(int(counts.sum()), lo, hi, rng)
        weights = np.max(np.abs(y), axis=1) / nhf
        owner = np.repeat(np.arange(r), counts)
        if mode == "global":
            totals = np.bincount(owner, weights=weights, minlength=r)
            hits += int(np.sum(totals >= threshold))
        else:
            pos = (z - lo) / (hi[0] - lo[0])
            # an atom in grid cell j first counts at grid point j + 1
            cell = np.clip(np.floor(pos * M).astype(np.int64) + 1, 0, M)
            keep = np.all(cell <= M - 1, axis=1)
            hist = np.zeros((r,) + (M,) * d)
            np.add.at(hist, (owner[keep],) + tuple(cell[keep].T), weights[keep])
            F = hist
            for ax in range(1, d + 1):
                F = np.cumsum(F, axis=ax)
            best = np.zeros(r)
            base = np.arange(M)
            for o in offsets:
                shifted = F
                for ax, step in enumerate(o):
                    idx = np.minimum(base + step, M - 1)
                    shifted = np.take(shifted, idx, axis=ax + 1)
                diff = (shifted - F).reshape(r, -1).max(axis=1)
                best = np.maximum(best, diff)
            hits += int(np.sum(best >= threshold * (1 - 1e-12)))
        done += r
        chunk_id += 1
    return OscillationReport(delta, x, nhf, hits / replications, bound, replications, int(seed), mode, status)


def calibrate_hx(model: ModelSpec, delta: float, x: float, sweep: Optional[Sequence[float]] = None,
                 gl_nodes: int = 6):
    """Largest ``h`` in a dyadic sweep below which the window-moment drift stays under ``sqrt 2 - 1``.

    The drift at ``h`` is the max over grid boxes ``B_i = [0, s_i^+) minus [0, s_i)`` of
    ``| E[1_{B_i} (e^{t|Y|} - 1)] / (f(z) lam(B_i) h (L(t) - 1)) - 1 |`` with
    ``t`` the maximiser at ``x``.  Returns ``(h_x, rows)``; ``h_x`` is 0 when no
    swept value qualifies.
    """
    M = oscillation_grid_size(delta)
    d = model.d
    chern = model.chernoff_abs_y
    point = chern.evaluate(np.array([x]))
    t = float(point.argmax[0]) if point.argmax is not None else 1.0
    L = float(model.laplace_abs_y()(np.array([t])))
    f = model.density_at_z
    if sweep is None:
        sweep = [2.0 ** -j for j in range(1, 31)]
    sweep = sorted((float(h) for h in sweep), reverse=True)
    plus = (math.ceil(M * delta) + 2) / M
    nodes, weights = np.polynomial.legendre.leggauss(gl_nodes)
    ref = (nodes + 1) / 2
    wref = weights / 2
    mesh = np.stack(np.meshgrid(*[ref] * d, indexing="ij"), axis=-1).reshape(-1, d)
    wmesh = np.prod(np.stack(np.meshgrid(*[wref] * d, indexing="ij"), axis=-1).reshape(-1, d), axis=1)
    corners = np.stack(np.meshgrid(*[np.arange(M) / M] * d, indexing="ij"), axis=-1).reshape(-1, d)
    rows = []
    for h in sweep:
        side = h ** (1.0 / d)
        z0 = np.asarray(model.z)

        def box_integral(lo_local, hi_local):
            lo_abs, hi_abs = z0 + side * lo_local, z0 + side * hi_local
            pts = lo_abs + (hi_abs - lo_abs) * mesh
            dens = np.prod([mg.pdf(pts[:, ax]) for ax, mg in enumerate(model.z_marginals)], axis=0)
            vol = float(np.prod(hi_abs - lo_abs))
            mgf = model.abs_mgf_given(pts, t)
            return vol * float(np.sum(wmesh * dens * (mgf - 1.0)))

        worst = 0.0
        for s in corners:
            sp = s + plus
            lam_b = float(np.prod(sp) - np.prod(s))
            num = box_integral(np.zeros(d), sp) - (box_integral(np.zeros(d), s) if np.all(s > 0) else 0.0)
            ratio = num / (f * lam_b * h * (L - 1.0))
            worst = max(worst, abs(ratio - 1.0))
        rows.append((h, worst))
    h_x = 0.0
    for h, worst in reversed(rows):
        if worst < MAX_DELTA:
            h_x = h
        else:
            break
    return h_x, rows
