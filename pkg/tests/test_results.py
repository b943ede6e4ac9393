import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compound_increments.results import (
    ExperimentResult,
    canonical_json,
    config_hash,
    format_value,
    merge_results,
    run_tasks,
)


def test_config_hash_ignores_key_order_and_numpy_types():
    a = {"x": 1, "y": [1.5, 2.0], "z": {"b": True, "a": "s"}}
    b = {"z": {"a": "s", "b": np.bool_(True)}, "y": np.array([1.5, 2.0]), "x": np.int64(1)}
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 12
    assert config_hash(a) != config_hash({**a, "x": 2})
    assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'


def test_format_value():
    assert format_value(0.1) == "0.1"
    assert format_value(np.float64(1 / 3)) == repr(1 / 3)
    assert format_value(float("nan")) == "nan"
    assert format_value(-float("inf")) == "-inf"
    assert format_value(True) == "true"
    assert format_value(np.int64(7)) == "7"
    assert format_value(None) == ""


@settings(max_examples=100, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_value_round_trips(x):
    assert float(format_value(x)) == x


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.floats(0, 1)), min_size=1, max_size=12), st.randoms())
def test_merge_order_does_not_matter(rows, rnd):
    parts = [ExperimentResult("p", {}, ("a", "b"), [r]) for r in rows]
    shuffled = list(parts)
    rnd.shuffle(shuffled)
    assert merge_results("m", {}, parts).to_csv() == merge_results("m", {}, shuffled).to_csv()


def test_merge_rejects_mismatch():
    with pytest.raises(ValueError):
        merge_results("m", {}, [])
    with pytest.raises(ValueError):
        merge_results("m", {}, [ExperimentResult("a", {}, ("x",)), ExperimentResult("b", {}, ("y",))])


def test_write_keeps_timing_out_of_the_body(tmp_path):
    res = ExperimentResult("demo", {"k": 1}, ("a", "b"), [(1, 0.5), (2, float("nan"))], seed=4, summary={"s": 1})
    paths = res.write(tmp_path, runtime=1.25, meta={"extra": "yes"})
    assert os.path.basename(paths["csv"]) == f"demo-{res.config_hash}-4.csv"
    with open(paths["csv"], encoding="utf-8") as fh:
        assert fh.read() == "a,b\n1,0.5\n2,nan\n"
    meta = json.loads(open(paths["meta"], encoding="utf-8").read())
    assert meta["runtime_seconds"] == 1.25 and meta["extra"] == "yes" and "written_at" in meta
    echo = json.loads(open(paths["config"], encoding="utf-8").read())
    assert echo["config"] == {"k": 1} and echo["summary"] == {"s": 1}
    assert res.column("b")[0] == 0.5


def _square(x):
    return x * x


def test_run_tasks_order_independent_of_jobs():
    tasks = list(range(6))
    assert run_tasks(_square, tasks, 1) == run_tasks(_square, tasks, 2) == [t * t for t in tasks]
