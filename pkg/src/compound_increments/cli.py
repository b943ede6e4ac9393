"""Command-line entry point: one subcommand per experiment or table.

Exit status: 0 success, 1 acceptance failure (``verify``), 2 invalid
configuration, 3 runtime error.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import yaml

from . import acceptance
from .conjugate import chernoff_level_roots
from .exceptions import ConfigError, DomainError, ModelError
from .grid import GridFunction
from .harness import (
    BlockSchedule,
    block_discrepancy_check,
    clustering_run,
    ldp_cell_check,
    nw_inconsistency_contrast,
)
from .models import model_from_config, schedule_from_config
from .poissonize import OscillationReport, build_coupling, coupling_mismatch_prob, mc_oscillation_tail
from .rate import RateLevelSet, rate_limit, rate_p
from .results import ExperimentResult, merge_results, run_tasks

__all__ = ["RunConfig", "main", "EXPERIMENTS", "parse_config", "emit_config"]

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
U64 = 2 ** 64

PRESET_MODELS = {
    "unit": {"family": "constant", "k": 1, "d": 1, "z": [0.3], "y0": [1.0]},
    "gaussian": {"family": "semiparametric", "k": 1, "d": 1, "z": [0.5], "intercept": [0.0], "slope": [0.0],
                 "scale": [1.0]},
    "gaussian-regression": {"family": "semiparametric", "k": 1, "d": 1, "z": [0.5], "intercept": [0.0],
                            "slope": [1.0], "scale": [1.0]},
    "bounded": {"family": "bounded", "k": 1, "d": 1, "z": [0.5], "intercept": [0.5], "slope": [0.0],
                "scale": [0.5]},
}


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    experiment: str
    model: Dict[str, Any]
    schedule: Dict[str, Any] = field(default_factory=lambda: {"mode": "nonstandard", "c": 2.0})
    params: Dict[str, Any] = field(default_factory=dict)
    out: str = "results"
    seed: int = 0
    replications: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        out = {"experiment": {"name": self.experiment, "params": dict(self.params)},
               "model": dict(self.model), "schedule": dict(self.schedule), "out": self.out, "seed": self.seed}
        if self.replications is not None:
            out["replications"] = self.replications
        return out


def _check_seed(seed) -> int:
    try:
        seed = int(seed)
    except (TypeError, ValueError):
        raise ConfigError(f"seed {seed!r} is not an integer")
    if not 0 <= seed < U64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return seed


def parse_config(data) -> RunConfig:
    """Validate a mapping (or YAML text) into a :class:`RunConfig`; missing keys are collected, not stopped at."""
    if isinstance(data, str):
        data = yaml.safe_load(data)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping", missing=["experiment.name", "model"])
    missing = []
    exp = data.get("experiment")
    if not isinstance(exp, dict) or "name" not in exp:
        missing.append("experiment.name")
    model = data.get("model")
    if not isinstance(model, dict):
        missing.extend(f"model.{k}" for k in ("d", "family", "k", "z"))
    else:
        missing.extend(f"model.{k}" for k in ("d", "family", "k", "z") if k not in model)
    if missing:
        raise ConfigError(f"configuration missing keys {missing}", missing=missing)
    unknown = sorted(set(data) - {"experiment", "model", "schedule", "out", "seed", "replications"})
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    if exp["name"] not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp['name']!r}; expected one of {sorted(EXPERIMENTS)}")
    reps = data.get("replications")
    cfg = RunConfig(
        experiment=exp["name"],
        model=dict(model),
        schedule=dict(data.get("schedule") or {"mode": "nonstandard", "c": 2.0}),
        params=dict(exp.get("params") or {}),
        out=str(data.get("out", "results")),
        seed=_check_seed(data.get("seed", 0)),
        replications=None if reps is None else int(reps),
    )
    model_from_config(cfg.model)
    schedule_from_config(cfg.schedule)
    return cfg


def emit_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=None)


# ---------------------------------------------------------------------------
# Experiments: (model, schedule, params, seed, replications, jobs) -> ExperimentResult
# ---------------------------------------------------------------------------

def _floats(v) -> List[float]:
    if isinstance(v, str):
        return [float(x) for x in v.split(",") if x.strip()]
    return [float(x) for x in np.atleast_1d(v)]


def exp_conjugate_table(model, schedule, params, seed, reps, jobs):
    which = params.get("variable", "y")
    chern = model.chernoff_y if which == "y" else model.chernoff_abs_y
    k = chern.dim
    if "points" in params:
        points = [np.atleast_1d(np.asarray(p, dtype=float)) for p in params["points"]]
    else:
        points = [np.array([x]) for x in _floats(params.get("x", [0.5, 1.0, 2.0]))]
    cols = tuple(f"u_{i + 1}" for i in range(k)) + ("h_value",) + tuple(
        f"argmax_t_{i + 1}" for i in range(k)) + ("iterations",)
    rows = []
    for u in points:
        if u.shape != (k,):
            raise ConfigError(f"point {u.tolist()} does not have {k} components")
        pt = chern.evaluate(u)
        arg = pt.argmax if pt.argmax is not None else np.full(k, math.nan)
        rows.append(tuple(float(v) for v in u) + (pt.value,) + tuple(float(v) for v in arg) + (pt.iterations,))
    config = {"model": model.to_dict(), "variable": which, "points": [u.tolist() for u in points]}
    return ExperimentResult("conjugate-table", config, cols, rows, seed)


def exp_rate_table(model, schedule, params, seed, reps, jobs):
    chern = model.chernoff_y
    if "increments" in params:
        if model.d != 1 or chern.dim != 1:
            raise ConfigError("increment lists are read as a one-dimensional grid function")
        inc = np.asarray(_floats(params["increments"]))
        g = GridFunction(inc[:, None], 1)
        rows = [(q, rate_p(g.discretize(q), chern), math.nan) for q in range(0, g.p + 1)]
        config = {"model": model.to_dict(), "increments": inc.tolist()}
    else:
        power = float(params.get("power", 2.0))
        p_max = int(params.get("p_max", 10))
        if model.d != 1 or chern.dim != 1:
            raise ConfigError("the monomial ladder is one-dimensional")
        rep = rate_limit(lambda s: power * s[:, 0] ** (power - 1.0), chern, p_max)
        rows = [(int(q), float(v), rep.quadrature) for q, v in zip(rep.depths, rep.values)]
        config = {"model": model.to_dict(), "power": power, "p_max": p_max}
    return ExperimentResult("rate-table", config, ("p", "rate", "quadrature"), rows, seed)


def exp_ldp_cell(model, schedule, params, seed, reps, jobs):
    mode = "exact_poisson" if params.get("exact", False) else params.get("mode", "mc")
    ladder = _floats(params.get("nhf", [50, 100, 200, 400]))
    cell = (int(params.get("depth", 0)), int(params.get("index", 0)))
    return ldp_cell_check(model, cell, float(params.get("x", 2.0)), ladder, mode=mode, seed=seed,
                          replications=int(reps or params.get("replications", 100_000)))


def _oscillation_task(args):
    model, h, n, delta, x, reps, seed, mode = args
    rep = mc_oscillation_tail(model, h, n, delta, x, reps, seed, mode=mode)
    return rep.row() + (rep.dominated(),)


def exp_oscillation(model, schedule, params, seed, reps, jobs):
    f = model.density_at_z
    h = float(params.get("h", 0.01))
    reps = int(reps or params.get("replications", 10_000))
    grid = [(mode, dl, x, nhf)
            for mode in params.get("modes", ["local", "global"])
            for dl in _floats(params.get("delta", [0.1, 0.2, 0.4]))
            for x in _floats(params.get("x", [2.0, 3.0]))
            for nhf in _floats(params.get("nhf", [20.0, 50.0]))]
    tasks = [(model, h, int(round(nhf / (h * f))), dl, x, reps, seed + j, mode)
             for j, (mode, dl, x, nhf) in enumerate(grid)]
    rows = run_tasks(_oscillation_task, tasks, jobs)
    config = {"model": model.to_dict(), "h": h, "grid": [list(g) for g in grid], "replications": reps}
    res = merge_results("oscillation", config,
                        [ExperimentResult("oscillation", config, OscillationReport.COLUMNS + ("dominated",), rows)],
                        seed)
    res.summary = {"all_dominated": bool(all(r[-1] for r in rows))}
    return res


def exp_coupling(model, schedule, params, seed, reps, jobs):
    if "p" in params:
        n = int(reps or params.get("n_max", 100_000))
        real = build_coupling(model, None, n, seed, bandwidths=np.full(n, float(params["p"])))
    else:
        n = int(params.get("n_max", 10_000))
        real = build_coupling(model, schedule, n, seed)
    cols = ("index", "h", "p", "b", "v", "eta_star", "match")
    rows = list(zip(real.indices.tolist(), real.h.tolist(), real.p.tolist(), real.b.tolist(), real.v.tolist(),
                    real.eta_star.tolist(), real.match().tolist()))
    expected = float(sum(coupling_mismatch_prob(float(p)) for p in real.p))
    summary = {"mismatches": int(np.sum(~real.match())), "expected_mismatches": expected}
    config = {"model": model.to_dict(), "schedule": schedule.to_dict(), "params": dict(params), "n": n}
    return ExperimentResult("coupling", config, cols, rows, seed, summary)


def exp_clustering(model, schedule, params, seed, reps, jobs):
    f = model.density_at_z
    level = float(params.get("level", 1.0 / (schedule.c * f)))
    ls = RateLevelSet(model.chernoff_y, level)
    p = int(params.get("p", 6 if model.d == 1 else 3))
    if "targets" in params:
        targets = [GridFunction.constant_slope(np.atleast_1d(np.asarray(s, dtype=float)), p, model.d)
                   for s in params["targets"]]
    else:
        if model.k != 1:
            raise ConfigError("default targets need k = 1; pass explicit target slopes")
        lo, hi = chernoff_level_roots(model.chernoff_y, level * (1 - 1e-9))
        slopes = [s for s in (lo, model.chernoff_y.mean[0], hi) if s is not None]
        targets = [GridFunction.constant_slope(np.array([s]), p, model.d) for s in slopes]
    blocks = BlockSchedule("outer", int(params.get("k_start", 5)), int(params.get("k_stop", 60)))
    inner = BlockSchedule("fixed", 1, int(params.get("inner_blocks", 20)), block=int(params.get("block", 20_000)))
    return clustering_run(model, schedule, blocks, ls, targets, seed, inner=inner, p=p,
                          eps=float(params.get("eps", 0.1)))


def exp_nw_contrast(model, schedule, params, seed, reps, jobs):
    n_min = int(params.get("n_min", 1000))
    n_max = int(params.get("n_max", 1_000_000))
    ns = np.unique(np.geomspace(n_min, n_max, int(params.get("points", 60))).astype(int))
    count = int(reps or params.get("seeds", 20))
    seeds = [seed + s for s in range(count)]
    return nw_inconsistency_contrast(model, float(params.get("c", schedule.c)), ns, params.get("kernel", "box"),
                                     seeds, consistent=tuple(_floats(params.get("consistent", [2.0, 3.0]))),
                                     jobs=jobs)


def exp_block_discrepancy(model, schedule, params, seed, reps, jobs):
    return block_discrepancy_check(model, schedule, int(params.get("k", 30)), float(params.get("eps", 0.5)),
                                   int(reps or params.get("replications", 2000)), seed)


EXPERIMENTS: Dict[str, Callable] = {
    "conjugate-table": exp_conjugate_table,
    "rate-table": exp_rate_table,
    "ldp-cell": exp_ldp_cell,
    "oscillation": exp_oscillation,
    "coupling": exp_coupling,
    "clustering": exp_clustering,
    "nw-contrast": exp_nw_contrast,
    "block-discrepancy": exp_block_discrepancy,
}

DEFAULT_MODEL = {"nw-contrast": "gaussian-regression"}


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------

def _parse_value(text: str):
    return yaml.safe_load(text)


def _common(parser):
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--seed", help="root seed (unsigned 64-bit); overrides APP_SEED and the config")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
    parser.add_argument("--out", help="output directory; overrides APP_OUT and the config")
    parser.add_argument("--no-plots", action="store_true", help="skip PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compound-increments",
                                     description="Compound increment process experiments and tables.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the experiment named in --config")
    _common(p)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("suite", nargs="?", default="fast", choices=["fast", "full"])
    p.add_argument("--only", type=int, nargs="*", default=[], help="restrict to these criterion numbers")
    _common(p)

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _common(p)
        p.add_argument("--model", choices=sorted(PRESET_MODELS), help="preset model (ignored with --config)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="experiment parameter; VALUE is read as YAML")
        p.add_argument("--replications", type=int)
        if name == "ldp-cell":
            p.add_argument("--exact", action="store_true", help="exact Poisson tail (requires Y = 1)")
    return parser


def _resolve_config(args) -> RunConfig:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}")
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}")
    else:
        data = None
    if args.command != "run":
        data = dict(data or {})
        exp = dict(data.get("experiment") or {})
        exp["name"] = args.command
        params = dict(exp.get("params") or {})
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, val = item.split("=", 1)
            params[key.strip()] = _parse_value(val)
        if getattr(args, "exact", False):
            params["exact"] = True
        exp["params"] = params
        data["experiment"] = exp
        if "model" not in data or args.model:
            data["model"] = dict(PRESET_MODELS[args.model or DEFAULT_MODEL.get(args.command, "unit")])
        if args.replications is not None:
            data["replications"] = args.replications
    cfg = parse_config(data)
    if os.environ.get("APP_SEED"):
        cfg.seed = _check_seed(os.environ["APP_SEED"])
    if args.seed is not None:
        cfg.seed = _check_seed(args.seed)
    if os.environ.get("APP_OUT"):
        cfg.out = os.environ["APP_OUT"]
    if args.out:
        cfg.out = args.out
    return cfg


def _check_writable(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {path!r} is not writable: {exc}")
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path!r} is not writable")


def _summary_text(summary: Dict[str, Any]) -> str:
    parts = []
    for key, val in summary.items():
        if isinstance(val, float):
            val = f"{val:.6g}"
        parts.append(f"{key}={val}")
    return ", ".join(parts)


def _run_experiment(cfg: RunConfig, jobs: int, plots: bool, out=print) -> int:
    _check_writable(cfg.out)
    model = model_from_config(cfg.model)
    schedule = schedule_from_config(cfg.schedule)
    t0 = time.perf_counter()
    res = EXPERIMENTS[cfg.experiment](model, schedule, cfg.params, cfg.seed, cfg.replications, jobs)
    runtime = time.perf_counter() - t0
    paths = res.write(cfg.out, runtime=runtime)
    if plots:
        from .plotting import plot_result
        plot_result(res, cfg.out)
    tail = f"; {_summary_text(res.summary)}" if res.summary else ""
    out(f"{res.name}: {len(res.rows)} rows in {runtime:.2f} s -> {paths['csv']}{tail}")
    return EXIT_OK


def _run_verify(args) -> int:
    out_dir = args.out or os.environ.get("APP_OUT")
    t0 = time.perf_counter()
    outcomes = acceptance.run_suite(args.suite, only=args.only, jobs=args.jobs)
    total = time.perf_counter() - t0
    failed = [o.number for o in outcomes if not o.ok]
    print(f"verify {args.suite}: {len(outcomes) - len(failed)}/{len(outcomes)} criteria passed "
          f"in {total:.1f} s" + (f"; failed: {failed}" if failed else ""))
    if out_dir:
        _check_writable(out_dir)
        res = acceptance.suite_result(args.suite, outcomes)
        meta = {"total_runtime_seconds": total,
                "criteria": {str(o.number): {"runtime_seconds": o.runtime, "budget_seconds": o.budget,
                                             "seed": o.seed} for o in outcomes}}
        paths = res.write(out_dir, meta=meta)
        print(f"report -> {paths['csv']}")
    return EXIT_FAILED if failed else EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return _run_verify(args)
        cfg = _resolve_config(args)
        return _run_experiment(cfg, args.jobs, not args.no_plots)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.missing:
            print("missing keys: " + ", ".join(exc.missing), file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ModelError, OverflowError, RuntimeError, ValueError, ArithmeticError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
