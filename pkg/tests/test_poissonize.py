import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from compound_increments.exceptions import ConfigError, DomainError
from compound_increments.models import BandwidthSchedule, ModelSpec, sample_batch
from compound_increments.poissonize import (
    MAX_DELTA,
    CompoundPoissonRealization,
    build_coupling,
    calibrate_hx,
    coupling_mismatch_prob,
    item_c_pmf,
    mc_oscillation_tail,
    oscillation_bound,
    oscillation_grid_size,
    poissonized_increment,
    sample_compound_poisson,
)


def chi2_pvalue(counts, probs):
    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(probs) * counts.sum()
    keep = expected >= 5
    obs = np.append(counts[keep], counts[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    if exp[-1] == 0:
        obs, exp = obs[:-1], exp[:-1]
    exp = exp * obs.sum() / exp.sum()
    return stats.chisquare(obs, exp).pvalue


# -- compound Poisson ----------------------------------------------------------

def test_sample_compound_poisson_preconditions(unit_model):
    with pytest.raises(DomainError):
        sample_compound_poisson(unit_model, 1.5, 1.0, seed=0)
    with pytest.raises(DomainError):
        sample_compound_poisson(unit_model, 0.5, 0.0, seed=0)


def test_tiny_mean_gives_empty_process(unit_model):
    real = sample_compound_poisson(unit_model, 0.5, 1e-12, seed=3)
    assert real.eta == 0
    assert np.all(real.evaluate(np.array([[1.0]])) == 0)


def test_cell_count_is_poisson(unit_model):
    # cell [0, 0.3) of the window holds Poisson(mean * 0.3) atoms when the window is all of [0.3, 1)
    model = ModelSpec.constant(1.0, z=0.0)
    h = 1.0 - 1e-12
    counts = np.array([sample_compound_poisson(model, h, 1.0, seed=1, counter=i).box_mass([0.0], [0.3])[0]
                       for i in range(20_000)]).astype(int)
    support = np.arange(counts.max() + 1)
    freq = np.bincount(counts, minlength=len(support))
    assert chi2_pvalue(freq, stats.poisson.pmf(support, 0.3)) > 0.01


def test_compound_mgf_matches_closed_form(regression_gaussian):
    # E exp(t U(window)) = exp(mean * E[1_window (e^{tY} - 1)])
    model = regression_gaussian
    h, t, mean = 0.2, 0.5, 3.0
    vals = []
    for i in range(20_000):
        real = sample_compound_poisson(model, h, mean, seed=2, counter=i)
        vals.append(math.exp(t * real.box_mass([0.0], [1.0])[0]))
    vals = np.array(vals)
    zs = np.linspace(0.5, 0.7, 2001)
    inner = np.trapezoid(np.exp(t * zs + t * t / 2) - 1, zs)
    exact = math.exp(mean * inner)
    assert abs(vals.mean() - exact) <= 3 * vals.std() / math.sqrt(len(vals))


def test_poissonized_increment_examples(unit_model):
    h = 0.1
    empty = [CompoundPoissonRealization(0, np.empty((0, 1)), np.empty((0, 1)), unit_model.z, h)] * 3
    assert np.all(poissonized_increment(empty, unit_model, h, 3).increments == 0)
    one = CompoundPoissonRealization(1, np.ones((1, 1)), np.array([[0.301]]), unit_model.z, h)
    g = poissonized_increment([one], unit_model, h, 3)
    assert np.allclose(g.cumulative()[:, 0], 1 / h)
    other = CompoundPoissonRealization(1, np.ones((1, 1)), np.array([[0.301]]), unit_model.z, 0.2)
    with pytest.raises(ConfigError):
        poissonized_increment([one, other], unit_model, h, 3)


def test_poissonized_increment_mean(unit_model):
    h, n = 0.05, 40
    totals = []
    for rep in range(2000):
        reals = [sample_compound_poisson(unit_model, h, 1.0, seed=rep, counter=i) for i in range(n)]
        totals.append(poissonized_increment(reals, unit_model, h, 2).total()[0])
    totals = np.array(totals)
    expected = unit_model.window_prob(h) / (h * unit_model.density_at_z)
    assert abs(totals.mean() - expected) <= 3 * totals.std() / math.sqrt(len(totals))


def test_absolute_variant(regression_gaussian):
    model = regression_gaussian
    real = CompoundPoissonRealization(2, np.array([[-1.0], [2.0]]), np.array([[0.51], [0.52]]), model.z, 0.1)
    signed = poissonized_increment([real], model, 0.1, 2).total()[0]
    absolute = poissonized_increment([real], model, 0.1, 2, absolute=True).total()[0]
    assert signed == pytest.approx(1.0 / 0.1)
    assert absolute == pytest.approx(3.0 / 0.1)


# -- coupling ------------------------------------------------------------------

def test_mismatch_probability_values():
    assert coupling_mismatch_prob(0.01) == pytest.approx(9.950e-5, rel=1e-3)
    assert coupling_mismatch_prob(0.1) == pytest.approx(9.5163e-3, rel=1e-4)
    with pytest.raises(DomainError):
        coupling_mismatch_prob(1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1.0 - 1e-9))
def test_mismatch_below_square(p):
    assert coupling_mismatch_prob(p) <= p * p


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 1.0))
def test_item_c_law_is_a_pmf(p):
    pmf = item_c_pmf(p, 60)
    assert np.all(pmf >= 0)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)


def test_coupling_mismatch_frequency(unit_model):
    reps = 100_000
    for j, p in enumerate((0.01, 0.1, 0.3)):
        real = build_coupling(unit_model, None, reps, seed=100 + j, bandwidths=np.full(reps, p))
        freq = np.mean(~real.match())
        exact = coupling_mismatch_prob(p)
        assert abs(freq - exact) <= 3 * math.sqrt(exact * (1 - exact) / reps)
        # match frequency at least 1 - p^2 up to binomial slack
        assert 1 - freq >= 1 - p * p - 3 * math.sqrt(p * p / reps)


def test_eta_star_is_poisson(unit_model):
    reps = 100_000
    real = build_coupling(unit_model, None, reps, seed=5, bandwidths=np.full(reps, 0.3))
    eta = real.eta_star
    support = np.arange(eta.max() + 1)
    assert chi2_pvalue(np.bincount(eta), stats.poisson.pmf(support, 0.3)) > 0.01


def test_derived_pairs_follow_model(regression_gaussian):
    model = regression_gaussian
    real = build_coupling(model, BandwidthSchedule("nonstandard", 2.0), 20_000, seed=8)
    y, z = real.derived_pairs()
    batch = sample_batch(model, 20_000, seed=8)
    assert stats.ks_2samp(z[:, 0], batch.z[:, 0]).pvalue > 0.01
    assert stats.ks_2samp(y[:, 0], batch.y[:, 0]).pvalue > 0.01
    assert stats.kstest(z[:, 0], "uniform").pvalue > 0.01


def test_match_reproduces_single_point_increment(unit_model):
    reps = 2000
    real = build_coupling(unit_model, None, reps, seed=9, bandwidths=np.full(reps, 0.2))
    matched = np.nonzero(real.match())[0][:50]
    for row in matched:
        assert real.match_through(int(row), [0.2, 0.1, 0.05, 0.01])


def test_coupling_rejects_degenerate_windows(unit_model):
    with pytest.raises(DomainError):
        build_coupling(ModelSpec.constant(1.0, z=0.0), None, 1, seed=0, bandwidths=[1.0])
    with pytest.raises(DomainError):
        build_coupling(unit_model, BandwidthSchedule("nonstandard", 1.0), 0, seed=0)


def test_coupling_csv(unit_model):
    real = build_coupling(unit_model, None, 5, seed=1, bandwidths=np.full(5, 0.1))
    lines = real.to_csv().strip().splitlines()
    assert lines[0] == "index,h,p,b,v,eta_star,match"
    assert len(lines) == 6


# -- oscillations --------------------------------------------------------------

def test_bound_example(unit_model):
    chern = unit_model.chernoff_abs_y
    bound = oscillation_bound(0.1, 3.0, 100.0, chern)
    assert bound == pytest.approx(100 * math.exp(-10 * (3 * math.log(3) - 2)), rel=1e-9)
    assert bound == pytest.approx(2.36e-4, rel=1e-2)
    assert oscillation_bound(0.1, 1.0, 100.0, chern, mode="global") == 1.0
    xs = np.linspace(1.0, 5.0, 20)
    vals = [oscillation_bound(0.2, x, 30.0, chern) for x in xs]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    with pytest.raises(DomainError):
        oscillation_bound(0.5, 1.0, 1.0, chern)
    with pytest.raises(DomainError):
        oscillation_bound(0.0, 1.0, 1.0, chern)


def test_grid_size():
    assert oscillation_grid_size(0.1) == 1 + math.ceil(3 / (MAX_DELTA * 0.1))


@pytest.mark.parametrize("mode", ["local", "global"])
@pytest.mark.parametrize("delta,x,nhf", [(0.1, 2.0, 20.0), (0.2, 3.0, 50.0), (0.4, 2.0, 50.0)])
def test_tails_dominated(unit_model, mode, delta, x, nhf):
    h = 0.01
    rep = mc_oscillation_tail(unit_model, h, int(nhf / h), delta, x, 5000, seed=21, mode=mode)
    assert 0 <= rep.empirical_tail <= 1
    assert rep.dominated()


def test_large_threshold_never_hit(unit_model):
    rep = mc_oscillation_tail(unit_model, 0.01, 5000, 0.4, 6.0, 10_000, seed=2)
    assert rep.analytic_bound < 1e-6
    assert rep.empirical_tail == 0.0


def test_tiny_threshold_matches_void_probability(unit_model):
    h, n, delta = 0.01, 300, 0.2
    rep = mc_oscillation_tail(unit_model, h, n, delta, 1e-9, 20_000, seed=4)
    M = oscillation_grid_size(delta)
    # the event fails only when no atom lands in the first M - 1 grid cells
    exact = 1 - math.exp(-n * h * (M - 1) / M)
    assert abs(rep.empirical_tail - exact) <= 3 * math.sqrt(exact * (1 - exact) / 20_000) + 1e-12


def test_vacuous_status(unit_model):
    rep = mc_oscillation_tail(unit_model, 0.01, 100, 0.2, 1.0, 100, seed=0)
    assert rep.status == "vacuous"


def test_oscillation_two_dims():
    model = ModelSpec.constant(1.0, d=2, z=(0.2, 0.2))
    rep = mc_oscillation_tail(model, 0.01, 3000, 0.4, 3.0, 2000, seed=1)
    assert rep.dominated()
    with pytest.raises(ConfigError):
        mc_oscillation_tail(model, 0.01, 3000, 0.4, 3.0, 0, seed=1)


def test_calibrate_hx(unit_model, regression_gaussian):
    h_const, rows = calibrate_hx(unit_model, 0.2, 2.0)
    assert h_const == 0.5
    # only rounding noise, which grows as the window shrinks
    assert all(r[1] < 1e-6 for r in rows)
    h_gauss, rows = calibrate_hx(regression_gaussian, 0.2, 2.0)
    assert 0 < h_gauss < 0.5
    small = [w for h, w in rows if h <= h_gauss]
    assert max(small) < MAX_DELTA
