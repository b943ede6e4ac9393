"""Experiment records, canonical config hashing and flat-file output."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

__all__ = ["ExperimentResult", "config_hash", "canonical_json", "format_value", "run_tasks", "merge_results"]


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(config) -> str:
    """First 12 hex digits of sha256 over the canonical JSON of ``config``."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:12]


def format_value(v) -> str:
    """Locale-independent text for a CSV cell; floats use the shortest round-trip repr."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


@dataclass
class ExperimentResult:
    name: str
    config: Dict[str, Any]
    columns: Sequence[str]
    rows: List[tuple] = field(default_factory=list)
    seed: int = 0
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_hash({"name": self.name, "config": self.config})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.columns))
        for row in self.rows:
            w.writerow([format_value(v) for v in row])
        return buf.getvalue()

    def column(self, name):
        j = list(self.columns).index(name)
        return [row[j] for row in self.rows]

    def filename(self, ext="csv") -> str:
        return f"{self.name}-{self.config_hash}-{self.seed}.{ext}"

    def write(self, out_dir, runtime: Optional[float] = None, meta: Optional[Dict[str, Any]] = None
              ) -> Dict[str, str]:
        """Write the CSV body, a JSON config echo and a separate metadata file with the timestamp."""
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "csv": os.path.join(out_dir, self.filename("csv")),
            "config": os.path.join(out_dir, self.filename("json")),
            "meta": os.path.join(out_dir, self.filename("meta.json")),
        }
        with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
            fh.write(self.to_csv())
        with open(paths["config"], "w", encoding="utf-8") as fh:
            json.dump(_plain({"name": self.name, "seed": self.seed, "config": self.config,
                              "summary": self.summary}), fh, indent=2, sort_keys=True)
            fh.write("\n")
        extra = dict(meta or {})
        extra.update({"written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "config_hash": self.config_hash})
        if runtime is not None:
            extra["runtime_seconds"] = runtime
        with open(paths["meta"], "w", encoding="utf-8") as fh:
            json.dump(_plain(extra), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return paths


def merge_results(name, config, parts: Iterable[ExperimentResult], seed=0) -> ExperimentResult:
    """Concatenate rows of results sharing columns; rows are sorted so merge order never matters."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to merge")
    cols = tuple(parts[0].columns)
    rows = []
    for part in parts:
        if tuple(part.columns) != cols:
            raise ValueError("cannot merge results with different columns")
        rows.extend(part.rows)
    rows.sort(key=lambda r: tuple(format_value(v) for v in r))
    return ExperimentResult(name, config, cols, rows, seed)


def run_tasks(fn: Callable, tasks: Sequence, jobs: int = 1) -> list:
    """Map ``fn`` over ``tasks`` with at most ``jobs`` worker processes; output in task order."""
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))
