import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compound_increments.exceptions import ConfigError, DomainError
from compound_increments.models import (
    BandwidthSchedule,
    ModelSpec,
    SampleBatch,
    bandwidth,
    increment_process,
    model_from_config,
    sample_batch,
    schedule_from_config,
    verify_local_conditions,
)


def test_constant_batch_has_unit_responses(unit_model):
    batch = sample_batch(ModelSpec.constant(1.0, d=1, z=0.3), 4, seed=7)
    assert batch.n == 4
    assert np.all(batch.y == 1.0)
    assert np.all((batch.z >= 0) & (batch.z < 1))


def test_batch_rejects_empty(unit_model):
    with pytest.raises(DomainError):
        sample_batch(unit_model, 0, seed=1)


def test_batch_is_reproducible(regression_gaussian):
    a = sample_batch(regression_gaussian, 50, seed=11)
    b = sample_batch(regression_gaussian, 50, seed=11)
    c = sample_batch(regression_gaussian, 50, seed=12)
    assert a == b
    assert not np.array_equal(a.y, c.y)


def test_gaussian_sample_mean(regression_gaussian):
    n = 100_000
    batch = sample_batch(regression_gaussian, n, seed=1)
    # Var(Y) = 1 + Var(Z) = 1 + 1/12
    sigma = math.sqrt(1 + 1 / 12)
    assert abs(batch.y.mean() - 0.5) < 3 * sigma / math.sqrt(n)


def test_batch_csv_columns(regression_gaussian):
    text = sample_batch(regression_gaussian, 3, seed=2).to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "seed,n,index,y_1,z_1"
    assert len(lines) == 4


def test_model_validation():
    with pytest.raises(ConfigError):
        ModelSpec("weird", 1, 1, (0.5,))
    with pytest.raises(ConfigError):
        ModelSpec.gaussian(0.0, 1.0, -1.0)
    with pytest.raises(ConfigError):
        ModelSpec.constant(1.0, z=0.3, declared_density=2.0)
    with pytest.raises(ConfigError):
        ModelSpec.constant(1.0, z=1.5)


def test_model_from_config_lists_missing_keys():
    with pytest.raises(ConfigError) as err:
        model_from_config({"family": "constant"})
    assert err.value.missing == ["d", "k", "z"]
    m = model_from_config({"family": "constant", "k": 1, "d": 1, "z": [0.3], "y0": [1.0], "density_at_z": 1.0})
    assert m.density_at_z == 1.0


def test_bandwidth_values():
    sched = BandwidthSchedule("nonstandard", 2.0)
    assert bandwidth(sched, 3) == pytest.approx(2 * math.log(math.log(3)) / 3, rel=1e-15)
    assert bandwidth(sched, 3) == pytest.approx(0.0627, abs=1e-4)
    assert bandwidth(sched, 10 ** 6) == pytest.approx(5.25e-6, rel=1e-3)
    with pytest.raises(DomainError):
        bandwidth(sched, 0)


def test_bandwidth_custom_table():
    sched = schedule_from_config({"mode": "custom", "table": {1: 0.5, 2: 0.25}})
    assert bandwidth(sched, 2) == 0.25
    with pytest.raises(ConfigError):
        bandwidth(sched, 3)


def test_nonstandard_bandwidth_rises_before_n6():
    # log(log n)/n increases until log n * log log n exceeds 1, between n = 5 and n = 6
    sched = BandwidthSchedule("nonstandard", 1.0)
    hs = [bandwidth(sched, n) for n in range(3, 8)]
    assert hs[0] < hs[1] < hs[2] < hs[3]
    assert hs[3] > hs[4]


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=6, max_value=10 ** 9), st.floats(min_value=0.1, max_value=5.0))
def test_nonstandard_schedule_invariants(n, c):
    sched = BandwidthSchedule("nonstandard", c)
    h0, h1 = bandwidth(sched, n), bandwidth(sched, n + 1)
    assert 0 < h1 <= h0 < 1
    assert (n + 1) * h1 >= n * h0 * (1 - 1e-12)
    assert n * h0 / math.log(math.log(n)) == pytest.approx(c, rel=1e-12)


def test_increment_process_counts_window(unit_model):
    batch = sample_batch(unit_model, 1000, seed=5)
    g = increment_process(batch, unit_model, 0.05, 4)
    count = np.sum((batch.z[:, 0] >= 0.3) & (batch.z[:, 0] < 0.35))
    assert g.evaluate(np.array([[1.0]]))[0, 0] == pytest.approx(count / (1000 * 0.05))


def test_increment_process_empty_window(unit_model):
    batch = SampleBatch(np.ones((3, 1)), np.array([[0.1], [0.2], [0.9]]), 0)
    g = increment_process(batch, unit_model, 0.05, 3)
    assert np.all(g.increments == 0)


def test_increment_process_single_cell(unit_model):
    # three points in the first depth-3 cell of the window [0.3, 0.35)
    z = np.array([[0.3001], [0.3002], [0.3003], [0.8]])
    batch = SampleBatch(np.ones((4, 1)), z, 0)
    g = increment_process(batch, unit_model, 0.05, 3)
    cum = g.cumulative()[:, 0]
    assert np.allclose(cum, 3 / (4 * 0.05))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=400), st.integers(min_value=1, max_value=400),
       st.integers(min_value=0, max_value=2 ** 31))
def test_increment_process_additive(n_a, n_b, seed):
    model = ModelSpec.gaussian(0.0, 1.0, 1.0, z=0.4)
    a = sample_batch(model, n_a, seed)
    b = sample_batch(model, n_b, seed + 1)
    both = SampleBatch(np.concatenate([a.y, b.y]), np.concatenate([a.z, b.z]), 0)
    h = 0.2
    ga, gb = increment_process(a, model, h, 4), increment_process(b, model, h, 4)
    gab = increment_process(both, model, h, 4)
    combined = (ga * n_a + gb * n_b) * (1.0 / (n_a + n_b))
    assert np.allclose(gab.increments, combined.increments, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31))
def test_increment_process_monotone_for_positive_y(seed):
    model = ModelSpec.bounded(2.0, 0.0, 1.0, d=2, z=(0.2, 0.3))
    batch = sample_batch(model, 300, seed)
    cum = increment_process(batch, model, 0.3, 3).cumulative()[..., 0]
    assert np.all(np.diff(cum, axis=0) >= -1e-12)
    assert np.all(np.diff(cum, axis=1) >= -1e-12)


def test_local_conditions_constant(unit_model):
    rep = verify_local_conditions(unit_model, [0.1, 0.05, 0.01], [1.0], 200, seed=3)
    assert rep.passed
    mass = [r for r in rep.rows if r[2] == "mass" and r[1] == "full"]
    assert all(r[4] == pytest.approx(1.0, abs=1e-12) for r in mass)
    mgf = [r for r in rep.rows if r[2] == "mgf"]
    assert all(r[4] == pytest.approx(math.e, rel=1e-14) for r in mgf)


def test_local_conditions_gaussian(regression_gaussian):
    rep = verify_local_conditions(regression_gaussian, [0.2, 0.1, 0.05, 0.01], [1.0], 20_000, seed=4)
    assert rep.passed, rep.failures
    target = [r[5] for r in rep.rows if r[2] == "mgf"][0]
    assert target == pytest.approx(math.exp(0.5 + 0.5), rel=1e-12)


def test_local_conditions_rejects_bad_grid(unit_model):
    with pytest.raises(ConfigError):
        verify_local_conditions(unit_model, [0.01, 0.1], [1.0], 10, seed=0)
    with pytest.raises(ConfigError):
        verify_local_conditions(unit_model, [0.1, 0.01], [1.0], 10, seed=0,
                                probe_sets={"flat": [(np.zeros(1), np.zeros(1))]})
