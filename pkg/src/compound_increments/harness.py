"""Desk-scale experiments: single-cell large deviations, block-subsequence
clustering traces, the block discrepancy bound and the Nadaraya-Watson
contrast between nonstandard and consistent bandwidths."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from decimal import Decimal, localcontext
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .exceptions import ConfigError, DomainError
from .grid import GridFunction
from .models import (
    BandwidthSchedule,
    ModelSpec,
    SampleBatch,
    accumulate_cells,
    bandwidth,
    window_cells,
)
from .poissonize import oscillation_bound
from .rate import RateLevelSet, distance_to_level_set, level_set_contains
from .results import ExperimentResult, run_tasks
from .seeding import TAG_CLUSTERING, TAG_DISCREPANCY, TAG_LDP, TAG_NW, rng_for

__all__ = [
    "BlockSchedule",
    "outer_endpoint",
    "outer_endpoints",
    "assert_disjoint",
    "poisson_log_tail",
    "compound_gaussian_log_tail",
    "ldp_cell_check",
    "clustering_run",
    "block_discrepancy_check",
    "nw_estimate",
    "nw_inconsistency_contrast",
    "KERNELS",
]

INT64_MAX = 2 ** 63 - 1


# ---------------------------------------------------------------------------
# Block schedules
# ---------------------------------------------------------------------------

def _outer_exponent(k: int) -> float:
    return k * math.exp(-math.sqrt(math.log(k)))


def _floor_exp(v: float) -> int:
    if v < 700.0:
        return int(math.floor(math.exp(v)))
    with localcontext() as ctx:
        ctx.prec = int(v / 2.3) + 30
        return int(Decimal(v).exp().to_integral_value(rounding="ROUND_FLOOR"))


@lru_cache(maxsize=16)
def _outer_cached(k_stop: int) -> Tuple[int, ...]:
    out = []
    prev = 0
    for k in range(1, k_stop + 1):
        prev = max(prev + 1, _floor_exp(_outer_exponent(k)))
        out.append(prev)
    return tuple(out)


def outer_endpoints(k_stop: int) -> List[int]:
    """``n_1..n_{k_stop}`` with ``n_k = max(n_{k-1} + 1, floor(exp(k exp(-sqrt(log k)))))``."""
    return list(_outer_cached(int(k_stop)))


def outer_endpoint(k: int) -> int:
    return outer_endpoints(k)[-1]


@dataclass(frozen=True)
class BlockSchedule:
    """Block endpoints for ``k = k_start..k_stop``.

    ``outer``: ``n_k`` above, blocks ``(n_{k-1}, n_k]``.
    ``inner``: ``n_k = k^(2^k)`` exactly, blocks ``(n_{k-1}, n_k]``.
    ``fixed``: ``count`` consecutive disjoint blocks of length ``block``, a
    desk-scale stand-in for the inner schedule, whose third value already
    exceeds 4e9.
    """

    kind: str
    k_start: int = 1
    k_stop: int = 10
    block: int = 0
    max_bits: int = 1 << 16

    def __post_init__(self):
        if self.kind not in ("outer", "inner", "fixed"):
            raise ConfigError(f"unknown block kind {self.kind!r}")
        if not 1 <= self.k_start <= self.k_stop:
            raise ConfigError("need 1 <= k_start <= k_stop")
        if self.kind == "fixed" and self.block < 1:
            raise ConfigError("fixed blocks need a positive block length")
        if self.kind == "inner":
            k = self.k_stop
            if (2 ** k) * math.log2(max(k, 2)) > self.max_bits:
                raise OverflowError(f"k^(2^k) at k={k} exceeds {self.max_bits} bits")

    def _endpoint(self, k: int) -> int:
        if self.kind == "inner":
            return k ** (2 ** k)
        if self.kind == "fixed":
            return k * self.block
        return outer_endpoint(k)

    def values(self) -> List[int]:
        if self.kind == "outer":
            return outer_endpoints(self.k_stop)[self.k_start - 1:]
        return [self._endpoint(k) for k in range(self.k_start, self.k_stop + 1)]

    def ranges(self) -> List[Tuple[int, int]]:
        """0-based half-open observation ranges of the blocks."""
        ends = self.values()
        if self.kind == "outer":
            first = outer_endpoints(self.k_start - 1)[-1] if self.k_start > 1 else 0
        elif self.kind == "inner":
            first = (self.k_start - 1) ** (2 ** (self.k_start - 1)) if self.k_start > 1 else 0
        else:
            first = (self.k_start - 1) * self.block
        starts = [first] + ends[:-1]
        return list(zip(starts, ends))

    def ratios(self) -> List[float]:
        """``n_k / n_{k-1}`` for consecutive endpoints, computed on exact integers."""
        vals = self.values()
        if self.k_start > 1:
            vals = [self._endpoint(self.k_start - 1) if self.kind != "outer"
                    else outer_endpoints(self.k_start - 1)[-1]] + vals
        return [_int_ratio(b, a) for a, b in zip(vals, vals[1:])]

    def loglog_ratio(self, k: int) -> float:
        """``log(log n_k) / log k``."""
        if k < 2:
            raise DomainError("need k >= 2")
        return math.log(_int_log(self._endpoint(k))) / math.log(k)

    def values_int64(self) -> np.ndarray:
        vals = self.values()
        if max(vals) > INT64_MAX:
            raise OverflowError("block endpoints exceed the int64 range")
        return np.array(vals, dtype=np.int64)

    def to_dict(self):
        out = {"kind": self.kind, "k_start": self.k_start, "k_stop": self.k_stop}
        if self.kind == "fixed":
            out["block"] = self.block
        return out


def _int_log(n: int) -> float:
    shift = max(n.bit_length() - 64, 0)
    return math.log(n >> shift) + shift * math.log(2.0)


def _int_ratio(b: int, a: int) -> float:
    return math.exp(_int_log(b) - _int_log(a)) if b.bit_length() > 1000 else b / a


def assert_disjoint(ranges: Sequence[Tuple[int, int]]):
    ordered = sorted(ranges)
    for (a0, a1), (b0, b1) in zip(ordered, ordered[1:]):
        if a1 > b0:
            raise AssertionError(f"blocks [{a0},{a1}) and [{b0},{b1}) overlap")
    for a0, a1 in ordered:
        if a1 <= a0:
            raise AssertionError(f"empty block [{a0},{a1})")


# ---------------------------------------------------------------------------
# Single-cell large deviations
# ---------------------------------------------------------------------------

def poisson_log_tail(m: int, mu: float) -> float:
    """``log P(N >= m)`` for ``N ~ Poisson(mu)``, stable far in the upper tail."""
    if m <= 0:
        return 0.0
    if m <= mu:
        return float(stats.poisson.logsf(m - 1, mu))
    log_pmf = m * math.log(mu) - mu - math.lgamma(m + 1)
    term, total, j = 1.0, 1.0, 1
    while True:
        term *= mu / (m + j)
        total += term
        if term < 1e-17 * total:
            break
        j += 1
    return log_pmf + math.log(total)


def compound_gaussian_log_tail(mu: float, level: float, mean: float, sd: float) -> float:
    """``log P(sum_{j <= N} Y_j >= level)`` with ``N ~ Poisson(mu)``, ``Y_j ~ N(mean, sd^2)``."""
    n_max = int(mu + 40 * math.sqrt(mu) + 50)
    logs = []
    if level <= 0:
        logs.append(-mu)
    for n in range(1, n_max + 1):
        lp = n * math.log(mu) - mu - math.lgamma(n + 1)
        logs.append(lp + float(stats.norm.logsf((level - n * mean) / (sd * math.sqrt(n)))))
    logs = np.array(logs)
    top = logs.max()
    return float(top + math.log(np.sum(np.exp(logs - top))))


def _cell_volume(cell, d):
    p, _ = cell
    return 2.0 ** (-p * d)


LDP_COLUMNS = ("nhf", "mu", "cell_volume", "x", "log_prob", "value", "target", "gap", "rel_gap",
               "std_error", "status")


def ldp_cell_check(model: ModelSpec, cell, x: float, nhf_ladder: Sequence[float], mode: str = "exact_poisson",
                   seed: int = 0, replications: int = 100_000, chunk: int = 50_000) -> ExperimentResult:
    """``-(1/nhf) log P(DeltaPi(cell) >= x)`` along ``nhf_ladder`` next to ``lam h(x/lam)``.

    ``cell = (p, j)`` is a depth-``p`` cell (its volume is all that matters).
    The cell sum is a compound Poisson variable with ``Poisson(nhf * lam)``
    atoms drawn from the law of ``Y`` given ``Z = z``.
    """
    if model.k != 1:
        raise ConfigError("single-cell checks are implemented for k = 1")
    if mode not in ("exact_poisson", "mc"):
        raise ConfigError(f"unknown mode {mode!r}")
    if mode == "exact_poisson" and not (model.family == "constant" and model.y0 == (1.0,)):
        raise ConfigError("exact_poisson mode requires Y = 1")
    lam = _cell_volume(cell, model.d)
    target = lam * model.chernoff_y(np.array([x / lam]))
    rows = []
    for idx, nhf in enumerate(nhf_ladder):
        mu = nhf * lam
        level = x * nhf
        se = 0.0
        status = "ok"
        if mode == "exact_poisson":
            logp = poisson_log_tail(math.ceil(level - 1e-9), mu)
        else:
            rng = rng_for(seed, TAG_LDP, idx)
            hits = 0
            done = 0
            zrow = np.asarray(model.z)[None, :]
            while done < replications:
                r = min(chunk, replications - done)
                counts = rng.poisson(mu, size=r)
                ys = model.sample_y_given(np.repeat(zrow, int(counts.sum()), axis=0), rng)[:, 0]
                sums = np.bincount(np.repeat(np.arange(r), counts), weights=ys, minlength=r)
                hits += int(np.sum(sums >= level))
                done += r
            freq = hits / replications
            if freq < 10.0 / replications:
                status = "unresolvable"
                logp = float("nan")
            else:
                logp = math.log(freq)
                se = math.sqrt(freq * (1 - freq) / replications) / (freq * nhf)
        value = -logp / nhf if status == "ok" else float("nan")
        gap = value - target
        rel = abs(gap) / target if target > 0 else float("nan")
        rows.append((float(nhf), mu, lam, x, logp, value, target, gap, rel, se, status))
    rels = [r[8] for r in rows if r[10] == "ok"]
    summary = {"gaps_decreasing": bool(all(b < a for a, b in zip(rels, rels[1:])))}
    config = {"model": model.to_dict(), "cell": list(cell[:1]) + [list(np.atleast_1d(cell[1]))],
              "x": x, "nhf_ladder": list(map(float, nhf_ladder)), "mode": mode,
              "replications": replications if mode == "mc" else 0}
    return ExperimentResult("ldp-cell", config, LDP_COLUMNS, rows, seed, summary)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

def _window_trajectory(model: ModelSpec, n_max: int, h_max: float, seed: int, tag: int,
                       chunk: int = 1_000_000):
    """Indices, ``Y`` and ``Z`` of the first ``n_max`` draws that land in the window of ``h_max``."""
    lo, hi = model.window(h_max)
    idx, ys, zs = [], [], []
    for c, start in enumerate(range(0, n_max, chunk)):
        m = min(chunk, n_max - start)
        y, z = model.sample(m, rng_for(seed, tag, c))
        keep = np.all((z >= lo) & (z < hi), axis=1)
        idx.append(start + np.nonzero(keep)[0])
        ys.append(y[keep])
        zs.append(z[keep])
    return np.concatenate(idx), np.concatenate(ys), np.concatenate(zs)


def _increment_from(y, z, n, model, h, p):
    idx, inside = window_cells(z, model, h, p)
    inc = accumulate_cells(idx, y[inside], model.d, p, model.k)
    return GridFunction(inc / (n * h * model.density_at_z), model.d)


CLUSTER_COLUMNS = ("trace", "k", "n", "h", "nhf", "target", "statistic", "running_min", "within_eps")


def clustering_run(model: ModelSpec, schedule: BandwidthSchedule, blocks: BlockSchedule, level_set: RateLevelSet,
                   targets: Sequence[GridFunction], seed: int, inner: Optional[BlockSchedule] = None,
                   p: Optional[int] = None, eps: float = 0.1, tol: float = 1e-3,
                   max_n: int = 5_000_000) -> ExperimentResult:
    """Outer and inner clustering proxies along one simulated trajectory.

    Outer rows: the distance from the increment process at each ``n_k`` to
    the level set.  Inner rows: for each target, the sup-node distance from
    the increment process of each inner block, with its running minimum.
    """
    if p is None:
        p = 6 if model.d == 1 else 3
    for g in targets:
        if g.p != p or g.d != model.d or g.k != model.k:
            raise ConfigError("targets must live on the depth-p grid of the model")
        if not level_set_contains(g, level_set):
            raise ConfigError("every target must belong to the level set")
    inner = inner or BlockSchedule("fixed", 1, 8, block=max(blocks.values()[0], 1000))
    outer_ns = blocks.values()
    inner_ranges = inner.ranges()
    assert_disjoint(inner_ranges)
    n_max = max(max(outer_ns), max(r[1] for r in inner_ranges))
    if n_max > max_n:
        raise ConfigError(f"block range needs {n_max} observations, beyond the simulated {max_n}")
    sizes = list(outer_ns) + ([r[1] - r[0] for r in inner_ranges] if inner.kind == "fixed"
                              else [r[1] for r in inner_ranges])
    h_max = max(bandwidth(schedule, n) for n in sizes)
    idx, ys, zs = _window_trajectory(model, n_max, h_max, seed, TAG_CLUSTERING)
    f = model.density_at_z
    rows = []
    for k, n in zip(range(blocks.k_start, blocks.k_stop + 1), outer_ns):
        h = bandwidth(schedule, n)
        sel = idx < n
        g = _increment_from(ys[sel], zs[sel], n, model, h, p)
        res = distance_to_level_set(g, level_set, tol=tol)
        rows.append(("outer", k, n, h, n * h * f, -1, res.distance, float("nan"), res.distance <= eps))
    running = [math.inf] * len(targets)
    for k, (a, b) in zip(range(inner.k_start, inner.k_stop + 1), inner_ranges):
        n = b - a if inner.kind == "fixed" else b
        lo_idx = a if inner.kind == "fixed" else 0
        h = bandwidth(schedule, n)
        sel = (idx >= lo_idx) & (idx < b)
        g = _increment_from(ys[sel], zs[sel], n, model, h, p)
        for t, target in enumerate(targets):
            dist = g.sup_distance(target)
            running[t] = min(running[t], dist)
            rows.append(("inner", k, n, h, n * h * f, t, dist, running[t], running[t] <= eps))
    outer_rows = [r for r in rows if r[0] == "outer"]
    summary = {
        "outer_within_eps_frequency": float(np.mean([r[8] for r in outer_rows])) if outer_rows else float("nan"),
        "inner_final_running_min": [float(v) for v in running],
    }
    config = {"model": model.to_dict(), "schedule": schedule.to_dict(), "blocks": blocks.to_dict(),
              "inner": inner.to_dict(), "level": level_set.a, "p": p, "eps": eps, "tol": tol,
              "targets": [t.increments.ravel().tolist() for t in targets]}
    return ExperimentResult("clustering", config, CLUSTER_COLUMNS, rows, seed, summary)


# ---------------------------------------------------------------------------
# Block discrepancy
# ---------------------------------------------------------------------------

def _sup_partial_sums(pos, y):
    """``sup_s |sum_j 1{pos_j < s} y_j|_inf`` over ``s`` in ``[0,1]^d``, exactly."""
    if len(pos) == 0:
        return 0.0
    d = pos.shape[1]
    if d == 1:
        order = np.argsort(pos[:, 0], kind="stable")
        cums = np.cumsum(y[order], axis=0)
        return float(np.max(np.abs(cums)))
    axes = [np.unique(np.concatenate([np.nextafter(pos[:, ax], np.inf), [1.0]])) for ax in range(d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    inside = np.all(pos[None, :, :] < grid[:, None, :], axis=2).astype(float)
    return float(np.max(np.abs(inside @ y)))


DISCREPANCY_COLUMNS = ("k", "n", "n_k", "h", "mean_atoms", "x", "empirical", "bound", "std_error", "dominated")


def block_discrepancy_check(model: ModelSpec, schedule: BandwidthSchedule, k: int, eps: float,
                            replications: int, seed: int, n_values: Optional[Sequence[int]] = None,
                            sigmas: float = 3.0) -> ExperimentResult:
    """Frequency of ``||H_n - DeltaPi_{n_k}|| > eps`` for ``n`` in the outer block ``N_k``.

    The difference is ``-(n_k h f)^{-1} sum_{n < i <= n_k} U_i(h^{1/d} s)``
    with ``h = h_{n_k}``; it is compared with
    ``exp(-(n_k - n) h f h_{|Y|}(eps n_k / (n_k - n)))``.
    """
    if k < 2:
        raise DomainError("need k >= 2 so that the block has a predecessor")
    ends = outer_endpoints(k)
    n_prev, n_k = ends[-2], ends[-1]
    if n_values is None:
        n_values = sorted(set(np.linspace(n_prev + 1, n_k - 1, 6).astype(int).tolist()))
    h = bandwidth(schedule, n_k)
    f = model.density_at_z
    lo, hi = model.window(h)
    p_window = model.box_prob(lo, hi)
    chern = model.chernoff_abs_y
    rows = []
    for j, n in enumerate(n_values):
        if not n_prev < n < n_k:
            raise ConfigError(f"n={n} is not an interior point of block ({n_prev}, {n_k}]")
        gap = n_k - n
        x = eps * n_k / gap
        hx = chern(x)
        bound = math.exp(-gap * h * f * hx) if math.isfinite(hx) else 0.0
        rng = rng_for(seed, TAG_DISCREPANCY, j)
        counts = rng.poisson(gap * p_window, size=replications)
        hits = 0
        norm = n_k * h * f
        for c in np.nonzero(counts)[0]:
            y, z = model.sample_in_box(int(counts[c]), lo, hi, rng)
            pos = (z - lo) / (hi[0] - lo[0])
            if _sup_partial_sums(pos, y) / norm > eps:
                hits += 1
        freq = hits / replications
        se = math.sqrt(max(bound * (1 - bound), 0.0) / replications)
        rows.append((k, n, n_k, h, gap * p_window, x, freq, bound, se, freq <= bound + sigmas * se))
    config = {"model": model.to_dict(), "schedule": schedule.to_dict(), "k": k, "eps": eps,
              "replications": replications, "n_values": list(map(int, n_values))}
    return ExperimentResult("block-discrepancy", config, DISCREPANCY_COLUMNS, rows, seed,
                            {"all_dominated": bool(all(r[-1] for r in rows))})


# ---------------------------------------------------------------------------
# Nadaraya-Watson
# ---------------------------------------------------------------------------

def _box(u):
    return np.all((u >= 0) & (u < 1), axis=-1).astype(float)


def _triangle(u):
    inside = np.all((u >= 0) & (u < 1), axis=-1)
    return np.where(inside, np.prod(np.clip(1.0 - np.abs(2.0 * u - 1.0), 0.0, None), axis=-1), 0.0)


KERNELS = {"box": _box, "triangle": _triangle}


def _nw(y, z, model, kernel, h):
    w = KERNELS[kernel]((z - np.asarray(model.z)) / h ** (1.0 / model.d))
    den = float(w.sum())
    if den == 0.0:
        return None
    return (w @ y) / den


def nw_estimate(batch: SampleBatch, model: ModelSpec, kernel: str, h: float):
    """Kernel-weighted mean of ``Y`` around ``z``; ``None`` when the window is empty ("undefined")."""
    if kernel not in KERNELS:
        raise ConfigError(f"unknown kernel {kernel!r}; expected one of {sorted(KERNELS)}")
    if not 0 < h < 1:
        raise DomainError("bandwidth must lie in (0, 1)")
    return _nw(batch.y, batch.z, model, kernel, h)


NW_COLUMNS = ("seed", "mode", "osc", "defined", "undefined", "expected_undefined")


def _nw_task(args):
    model, c, ns, kernel, seed, consistent = args
    ns = sorted(int(n) for n in ns)
    n_max = ns[-1]
    modes = {
        "nonstandard": BandwidthSchedule("nonstandard", c),
        "consistent": BandwidthSchedule("consistent", consistent[0], consistent[1]),
    }
    truth = model.conditional_mean(np.asarray(model.z))
    upper = ns[len(ns) // 2:]
    rows = []
    for mode, sched in modes.items():
        hs = [bandwidth(sched, n) for n in ns]
        idx, ys, zs = _window_trajectory(model, n_max, max(hs), seed, TAG_NW)
        errs = {}
        undefined = 0
        expected = 0.0
        for n, h in zip(ns, hs):
            sel = idx < n
            r = _nw(ys[sel], zs[sel], model, kernel, h)
            expected += (1.0 - model.window_prob(h)) ** n
            if r is None:
                undefined += 1
                continue
            errs[n] = float(np.max(np.abs(r - truth)))
        vals = [errs[n] for n in upper if n in errs]
        osc = max(vals) if vals else float("nan")
        rows.append((seed, mode, osc, len(errs), undefined, expected))
    return rows


def nw_inconsistency_contrast(model: ModelSpec, c: float, n_range: Sequence[int], kernel: str,
                              seeds: Sequence[int], consistent: Tuple[float, float] = (2.0, 3.0),
                              jobs: int = 1) -> ExperimentResult:
    """``osc = max |r_n(z) - r(z)|`` over the upper half of ``n_range``, per seed and bandwidth mode.

    Both modes read the same data stream for a given seed.  The consistent
    mode uses ``h_n = c' (log n)^power / n`` with ``(c', power) = consistent``.
    """
    if kernel not in KERNELS:
        raise ConfigError(f"unknown kernel {kernel!r}")
    tasks = [(model, c, list(n_range), kernel, int(s), tuple(consistent)) for s in seeds]
    rows = [row for part in run_tasks(_nw_task, tasks, jobs) for row in part]
    med = {}
    for mode in ("nonstandard", "consistent"):
        vals = [r[2] for r in rows if r[1] == mode and not math.isnan(r[2])]
        med[mode] = float(np.median(vals)) if vals else float("nan")
    ratio = med["nonstandard"] / med["consistent"] if med["consistent"] > 0 else float("inf")
    undefined = sum(r[4] for r in rows if r[1] == "nonstandard")
    expected = sum(r[5] for r in rows if r[1] == "nonstandard")
    summary = {"median_osc_nonstandard": med["nonstandard"], "median_osc_consistent": med["consistent"],
               "ratio": ratio, "undefined_nonstandard": undefined, "expected_undefined_nonstandard": expected}
    config = {"model": model.to_dict(), "c": c, "n_range": list(map(int, n_range)), "kernel": kernel,
              "seeds": list(map(int, seeds)), "consistent": list(consistent)}
    return ExperimentResult("nw-contrast", config, NW_COLUMNS, rows, int(seeds[0]) if seeds else 0, summary)
