"""Acceptance suite: exact oracles, analytic-bound dominance and fixed-seed trend checks.

``run_suite("fast")`` covers the criteria that use only exact oracles
(1, 2, 3, 6, 8, 9 and the determinism check 11); ``"full"`` adds the Monte
Carlo and search-heavy ones (4, 5, 7, 10).  Solver functions are looked up
on their modules at call time so a test can swap in a deliberately broken
implementation and watch the suite fail.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from . import conjugate as conj_mod
from . import harness as harness_mod
from . import oracles
from . import poissonize as pois_mod
from . import rate as rate_mod
from .grid import GridFunction
from .models import ModelSpec
from .results import ExperimentResult
from .seeding import TAG_ACCEPT, rng_for

__all__ = ["CriterionOutcome", "CRITERIA", "FAST", "FULL", "run_suite", "suite_result"]

ACCEPT_SEED = 20240601


@dataclass
class CriterionOutcome:
    number: int
    title: str
    passed: bool
    measured: str
    expected: str
    seed: str = "-"
    budget: float = math.inf
    runtime: float = 0.0
    details: Dict = field(default_factory=dict)

    @property
    def within_budget(self) -> bool:
        return self.runtime < self.budget

    @property
    def ok(self) -> bool:
        return self.passed and self.within_budget

    def line(self) -> str:
        tag = "PASS" if self.ok else "FAIL"
        extra = "" if self.within_budget else f" [over budget {self.budget:g} s]"
        return (f"[{tag}] criterion {self.number:>2} {self.title}: measured {self.measured}; "
                f"expected {self.expected}; seed {self.seed}; {self.runtime:.2f} s{extra}")


def _fmt(v, digits=7):
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x, digits) for x in v) + "]"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.{digits}g}"


def _unit():
    return ModelSpec.constant(1.0, d=1, z=0.3)


def _standard_gauss():
    return ModelSpec.gaussian(0.0, 0.0, 1.0, d=1, z=0.5)


def _regression_gauss():
    # E[Y | Z = z'] = z', unit noise
    return ModelSpec.gaussian(0.0, 1.0, 1.0, d=1, z=0.5)


# ---------------------------------------------------------------------------

def criterion_1() -> CriterionOutcome:
    chern = _unit().chernoff_y
    xs = np.logspace(-2, 1, 100)
    errs = [abs(conj_mod.chernoff_eval(chern, np.array([x])) - oracles.poisson_h(float(x))) for x in xs]
    at_zero = conj_mod.chernoff_eval(chern, np.array([0.0]))
    worst = max(errs)
    return CriterionOutcome(1, "conjugate exactness (Y=1)", worst <= 1e-6 and at_zero == 1.0,
                            f"max err {_fmt(worst, 3)}, h(0)={_fmt(at_zero, 17)}",
                            "max err <= 1e-06, h(0) = 1 exactly", budget=1.0)


def criterion_2() -> CriterionOutcome:
    chern = _standard_gauss().chernoff_y
    xs = [-2.0, -1.0, 0.0, 1.0, 2.0]
    got = [conj_mod.chernoff_eval(chern, np.array([x])) for x in xs]
    ref = [oracles.grid_search_conjugate(lambda t: np.expm1(t * t / 2.0), x) for x in xs]
    worst = max(abs(a - b) for a, b in zip(got, ref))
    return CriterionOutcome(2, "Gaussian conjugate vs grid search", worst <= 1e-6,
                            f"values {_fmt(got)}, max err {_fmt(worst, 3)}",
                            f"grid search {_fmt(ref)} within 1e-06", budget=5.0)


def criterion_3() -> CriterionOutcome:
    res = harness_mod.ldp_cell_check(_unit(), (0, 0), 2.0, [50, 100, 200, 400], mode="exact_poisson")
    values = res.column("value")
    target = oracles.poisson_h(2.0)
    ref = [-oracles.poisson_upper_tail_log(2 * mu, mu) / mu for mu in (50, 100, 200, 400)]
    rel = [abs(v - target) / target for v in values]
    agree = max(abs(a - b) for a, b in zip(values, ref))
    passed = (rel[0] <= 0.15 and rel[2] <= 0.07 and all(b < a for a, b in zip(rel, rel[1:]))
              and agree <= 1e-9)
    return CriterionOutcome(3, "finite-n single-cell LDP (exact)", passed,
                            f"values {_fmt(values)}, rel gaps {_fmt(rel, 4)}, oracle diff {_fmt(agree, 3)}",
                            f"h1(2)={target:.6f}; gap <= 15% at 50, <= 7% at 200, strictly decreasing",
                            budget=1.0, details={"csv": res.to_csv()})


def criterion_4() -> CriterionOutcome:
    model = _unit()
    reps = 100_000
    parts, ok = [], True
    for j, p in enumerate((0.01, 0.1, 0.3)):
        real = pois_mod.build_coupling(model, None, reps, ACCEPT_SEED + j, bandwidths=np.full(reps, p))
        freq = float(np.mean(~real.match()))
        exact = pois_mod.coupling_mismatch_prob(p)
        sigma = math.sqrt(exact * (1 - exact) / reps)
        ok &= abs(freq - exact) <= 3 * sigma and exact <= p * p
        parts.append(f"p={p}: mc {freq:.5f} vs {exact:.5f} ({abs(freq - exact) / sigma:.2f} sigma)")
    return CriterionOutcome(4, "coupling mismatch law", ok, "; ".join(parts),
                            "within 3 binomial sigma, exact <= p^2",
                            seed=f"{ACCEPT_SEED}+j", budget=30.0)


def criterion_5() -> CriterionOutcome:
    model = _unit()
    f = model.density_at_z
    h = 0.01
    worst, count, ok = -math.inf, 0, True
    for mode in ("local", "global"):
        for i, delta in enumerate((0.1, 0.2, 0.4)):
            for j, x in enumerate((2.0, 3.0)):
                for m, nhf in enumerate((20.0, 50.0)):
                    n = int(round(nhf / (h * f)))
                    seed = ACCEPT_SEED + 100 * i + 10 * j + m
                    rep = pois_mod.mc_oscillation_tail(model, h, n, delta, x, 10_000, seed, mode=mode)
                    b = min(rep.analytic_bound, 1.0)
                    slack = 3 * math.sqrt(b * (1 - b) / rep.replications)
                    worst = max(worst, rep.empirical_tail - rep.analytic_bound - slack)
                    ok &= rep.dominated(3.0)
                    count += 1
    return CriterionOutcome(5, "oscillation tails under analytic bounds", ok,
                            f"{count} cells, max(tail - bound - 3 sigma) = {_fmt(worst, 4)}",
                            "<= 0 in every cell", seed=f"{ACCEPT_SEED}+100i+10j+m", budget=300.0)


def _random_grid_functions(count, rng):
    out = []
    for _ in range(count):
        p = int(rng.integers(2, 7))
        inc = rng.gamma(2.0, 0.5, size=2 ** p) / 2 ** p
        out.append(GridFunction(inc[:, None], 1))
    return out


def criterion_6() -> CriterionOutcome:
    chern = _unit().chernoff_y
    example = rate_mod.rate_p(GridFunction(np.array([[0.0], [1.0]]), 1), chern)
    report = rate_mod.rate_limit(lambda s: 2.0 * s[:, 0], chern, 10)
    simpson = oracles.adaptive_simpson(lambda s: oracles.poisson_h(2.0 * s), 0.0, 1.0, 1e-10)
    ladder_gap = abs(report.values[-1] - simpson)
    ladder_mono = bool(np.all(np.diff(report.values) >= -1e-12))
    rng = rng_for(ACCEPT_SEED, TAG_ACCEPT, 6)
    worst_drop = 0.0
    for g in _random_grid_functions(50, rng):
        vals = [rate_mod.rate_p(g.discretize(q), chern) for q in range(0, g.p + 1)]
        worst_drop = min(worst_drop, float(np.min(np.diff(vals))))
    passed = (abs(example - 0.693147) <= 1e-6 and ladder_mono and ladder_gap <= 1e-3 and worst_drop >= -1e-12)
    return CriterionOutcome(6, "rate functional oracles", passed,
                            f"depth-1 example {example:.7f}; J^(10)={report.values[-1]:.7f} vs Simpson "
                            f"{simpson:.7f} (gap {_fmt(ladder_gap, 3)}, monotone {_fmt(ladder_mono)}); "
                            f"worst refinement drop {_fmt(worst_drop, 3)}",
                            "0.693147 +- 1e-06; gap <= 1e-03 and monotone; drop >= -1e-12",
                            seed=str(ACCEPT_SEED), budget=10.0)


def _contained_query(rng, chern, level):
    inc = rng.gamma(4.0, 0.25, size=4) / 4
    mean = np.full(4, 0.25)
    g = GridFunction(inc[:, None], 1)
    while rate_mod.rate_p(g, chern) > level:
        inc = 0.5 * (inc + mean)
        g = GridFunction(inc[:, None], 1)
    return g


def criterion_7() -> CriterionOutcome:
    chern = _unit().chernoff_y
    level = 0.5
    ls = rate_mod.RateLevelSet(chern, level)
    rng = rng_for(ACCEPT_SEED, TAG_ACCEPT, 7)
    worst = 0.0
    queries = [np.array([0.0, 0.0, 3.0, 3.0])]
    while len(queries) < 10:
        inc = rng.uniform(-0.3, 1.2, size=4)
        if rate_mod.rate_p(GridFunction(inc[:, None], 1), chern) > level:
            queries.append(np.cumsum(inc))
    for G in queries:
        got = rate_mod.distance_to_level_set(GridFunction.from_cumulative(G[:, None]), ls).distance
        ref = oracles.lattice_distance_unit_poisson(G, level)
        worst = max(worst, abs(got - ref))
    contained = [rate_mod.distance_to_level_set(_contained_query(rng, chern, level), ls).distance
                 for _ in range(10)]
    passed = worst <= 2e-2 and all(d == 0.0 for d in contained)
    return CriterionOutcome(7, "distance solver vs lattice search", passed,
                            f"max |solver - lattice| = {_fmt(worst, 4)} on {len(queries)} queries; "
                            f"contained distances {_fmt(sorted(set(contained)))}",
                            "<= 2e-02; exactly 0 on 10 contained queries",
                            seed=str(ACCEPT_SEED), budget=120.0)


def criterion_8() -> CriterionOutcome:
    roots = conj_mod.chernoff_level_roots(_unit().chernoff_y, 0.5)
    ref = oracles.bisection_level_roots(oracles.poisson_h, 1.0, 0.5)
    expected = (0.1868, 2.1552)
    passed = all(r is not None and abs(r - e) <= 1e-3 for r, e in zip(roots, expected))
    passed &= all(abs(r - o) <= 1e-9 for r, o in zip(roots, ref))
    return CriterionOutcome(8, "level roots", passed, f"roots {_fmt(roots, 6)}",
                            f"(0.1868, 2.1552) +- 1e-03; bisection {_fmt(ref, 6)}", budget=1.0)


def criterion_9() -> CriterionOutcome:
    inner = harness_mod.BlockSchedule("inner", 2, 4).values()
    outer = harness_mod.BlockSchedule("outer", 1000, 10_000)
    ratios = outer.ratios()
    loglog = outer.loglog_ratio(10_000)
    inner_ok = inner == [16, 6561, 4294967296]
    ratio_ok = all(1.0 < r < 1.05 for r in ratios)
    loglog_ok = 0.9 < loglog < 1.1
    return CriterionOutcome(9, "block schedules", inner_ok and ratio_ok and loglog_ok,
                            f"inner {inner}; outer ratio range [{min(ratios):.5f}, {max(ratios):.5f}] "
                            f"over k in [1000, 10000]; loglog n_k / log k at 1e4 = {loglog:.4f}",
                            "inner [16, 6561, 4294967296]; ratios in (1, 1.05); loglog ratio in (0.9, 1.1)",
                            budget=1.0, details={"inner_ok": inner_ok, "ratio_ok": ratio_ok,
                                                 "loglog_ok": loglog_ok})


def criterion_10(jobs: int = 1) -> CriterionOutcome:
    ns = np.unique(np.geomspace(1000, 1_000_000, 60).astype(int))
    seeds = [ACCEPT_SEED + s for s in range(20)]
    res = harness_mod.nw_inconsistency_contrast(_regression_gauss(), 2.0, ns, "box", seeds, jobs=jobs)
    flat = harness_mod.nw_inconsistency_contrast(ModelSpec.constant(1.0, d=1, z=0.5), 2.0, ns, "box",
                                                 seeds, jobs=jobs)
    ratio = res.summary["ratio"]
    degenerate = max(r[2] for r in flat.rows if not math.isnan(r[2]))
    return CriterionOutcome(10, "Nadaraya-Watson inconsistency contrast", ratio > 3.0 and degenerate < 1e-12,
                            f"median osc {res.summary['median_osc_nonstandard']:.4f} vs "
                            f"{res.summary['median_osc_consistent']:.4f} (ratio {ratio:.2f}); "
                            f"degenerate max osc {_fmt(degenerate, 3)}",
                            "ratio > 3; degenerate < 1e-12",
                            seed=f"{seeds[0]}..{seeds[-1]}", budget=600.0)


CRITERIA: Dict[int, Callable[[], CriterionOutcome]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}
FAST = (1, 2, 3, 6, 8, 9, 11)
FULL = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11)
REPORT_COLUMNS = ("criterion", "title", "passed", "measured", "expected", "seed")


def _timed(fn, *args) -> CriterionOutcome:
    t0 = time.perf_counter()
    out = fn(*args)
    out.runtime = time.perf_counter() - t0
    return out


def _body(outcomes: Sequence[CriterionOutcome]) -> str:
    return suite_result("check", outcomes).to_csv()


def criterion_11() -> CriterionOutcome:
    exact = [n for n in FAST if n != 11]
    first = _body([CRITERIA[n]() for n in exact])
    second = _body([CRITERIA[n]() for n in exact])
    same = first == second
    return CriterionOutcome(11, "determinism of the fast suite", same,
                            f"two runs byte-identical: {_fmt(same)} ({len(first)} bytes)",
                            "byte-identical CSV bodies", budget=60.0)


CRITERIA[11] = criterion_11


def run_suite(suite: str = "fast", only: Sequence[int] = (), jobs: int = 1,
              echo: Callable[[str], None] = print) -> List[CriterionOutcome]:
    if suite not in ("fast", "full"):
        raise ValueError(f"unknown suite {suite!r}")
    numbers = [n for n in (FAST if suite == "fast" else FULL) if not only or n in only]
    outcomes = []
    for n in numbers:
        out = _timed(CRITERIA[n], jobs) if n == 10 else _timed(CRITERIA[n])
        if echo is not None:
            echo(out.line())
        outcomes.append(out)
    return outcomes


def suite_result(suite: str, outcomes: Sequence[CriterionOutcome]) -> ExperimentResult:
    """Report with no timing columns, so identical runs give identical bytes."""
    rows = [(o.number, o.title, o.passed, o.measured, o.expected, o.seed) for o in outcomes]
    config = {"suite": suite, "criteria": [o.number for o in outcomes], "seed": ACCEPT_SEED}
    summary = {"passed": all(o.passed for o in outcomes)}
    return ExperimentResult("acceptance", config, REPORT_COLUMNS, rows, ACCEPT_SEED, summary)
