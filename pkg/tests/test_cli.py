import csv
import io
import math
import os

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from compound_increments import acceptance, rate
from compound_increments.cli import EXPERIMENTS, PRESET_MODELS, RunConfig, emit_config, main, parse_config
from compound_increments.exceptions import ConfigError


def read_csv(out_dir):
    files = sorted(f for f in os.listdir(out_dir) if f.endswith(".csv"))
    assert len(files) == 1
    with open(os.path.join(out_dir, files[0]), encoding="utf-8") as fh:
        return fh.read()


def test_conjugate_table_values(tmp_path):
    code = main(["conjugate-table", "--model", "unit", "--set", "x=[0.5, 1.0, 2.0]", "--out", str(tmp_path),
                 "--no-plots"])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(read_csv(tmp_path))))
    values = [float(r["h_value"]) for r in rows]
    assert values == pytest.approx([0.153426, 0.0, 0.386294], abs=1e-6)
    assert any(f.endswith(".meta.json") for f in os.listdir(tmp_path))


def test_empty_config_lists_missing_keys(tmp_path, capsys):
    cfg = tmp_path / "empty.yaml"
    cfg.write_text("")
    assert main(["run", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "missing keys: experiment.name, model.d, model.family, model.k, model.z" in err


def test_bad_yaml_and_unknown_experiment(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: [unclosed")
    assert main(["run", "--config", str(bad)]) == 2
    unknown = tmp_path / "unknown.yaml"
    unknown.write_text(yaml.safe_dump({"experiment": {"name": "nope"}, "model": PRESET_MODELS["unit"]}))
    assert main(["run", "--config", str(unknown)]) == 2


def test_ldp_exact_reruns_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["ldp-cell", "--exact", "--out", str(d), "--no-plots"]) == 0
    assert read_csv(a) == read_csv(b)


def test_run_from_config_with_plot(tmp_path):
    cfg = RunConfig("ldp-cell", dict(PRESET_MODELS["unit"]), params={"exact": True, "nhf": [20, 40]},
                    out=str(tmp_path), seed=5)
    path = tmp_path / "run.yaml"
    path.write_text(emit_config(cfg))
    assert main(["run", "--config", str(path)]) == 0
    assert any(f.endswith(".png") for f in os.listdir(tmp_path))


def test_env_overrides(tmp_path, monkeypatch):
    env_out = tmp_path / "env"
    monkeypatch.setenv("APP_OUT", str(env_out))
    monkeypatch.setenv("APP_SEED", "17")
    assert main(["conjugate-table", "--no-plots"]) == 0
    assert any(f.endswith("-17.csv") for f in os.listdir(env_out))
    flag_out = tmp_path / "flag"
    assert main(["conjugate-table", "--no-plots", "--seed", "3", "--out", str(flag_out)]) == 0
    assert any(f.endswith("-3.csv") for f in os.listdir(flag_out))


@pytest.mark.parametrize("seed", ["-1", "abc", str(2 ** 64)])
def test_bad_seed(tmp_path, seed):
    assert main(["conjugate-table", "--seed", seed, "--out", str(tmp_path)]) == 2


def test_runtime_error_exit(tmp_path):
    # Y = 1 is required by the exact mode
    assert main(["ldp-cell", "--exact", "--model", "gaussian", "--out", str(tmp_path), "--no-plots"]) == 2
    assert main(["block-discrepancy", "--set", "k=1", "--out", str(tmp_path), "--no-plots"]) == 3


def test_verify_fast_subset(tmp_path):
    assert main(["verify", "fast", "--only", "1", "8", "--out", str(tmp_path)]) == 0
    body = read_csv(tmp_path)
    assert body.splitlines()[0] == "criterion,title,passed,measured,expected,seed"
    assert "runtime" not in body


def test_verify_detects_broken_rate(monkeypatch):
    def unnormalised(g, chern):
        # drops the division of each increment by the cell volume
        lam = g.grid.cell_volume
        total = 0.0
        for u in g.increments.reshape(-1, g.k):
            v = chern(u)
            if math.isinf(v):
                return math.inf
            total += v
        return lam * total

    assert acceptance.criterion_6().passed
    monkeypatch.setattr(rate, "rate_p", unnormalised)
    assert not acceptance.criterion_6().passed
    assert main(["verify", "fast", "--only", "6"]) != 0


def test_parse_config_validation():
    with pytest.raises(ConfigError) as err:
        parse_config({"experiment": {"name": "ldp-cell"}, "model": {"family": "constant"}})
    assert err.value.missing == ["model.d", "model.k", "model.z"]
    base = {"experiment": {"name": "ldp-cell"}, "model": PRESET_MODELS["unit"]}
    with pytest.raises(ConfigError):
        parse_config({**base, "extra": 1})
    with pytest.raises(ConfigError):
        parse_config({**base, "seed": -4})
    assert parse_config(yaml.safe_dump(base)).experiment == "ldp-cell"


scalars = st.one_of(st.integers(-1000, 1000), st.floats(-1e3, 1e3, allow_nan=False), st.booleans(),
                    st.text("abcxyz", min_size=1, max_size=5))


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(sorted(EXPERIMENTS)), st.sampled_from(sorted(PRESET_MODELS)),
       st.dictionaries(st.text("abcdefgh_", min_size=1, max_size=8), scalars, max_size=4),
       st.integers(0, 2 ** 64 - 1), st.one_of(st.none(), st.integers(1, 10 ** 6)))
def test_config_round_trip(name, model, params, seed, reps):
    cfg = RunConfig(name, dict(PRESET_MODELS[model]), params=params, out="somewhere", seed=seed,
                    replications=reps)
    again = parse_config(emit_config(cfg))
    assert again == cfg
