import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from compound_increments.exceptions import DomainError
from compound_increments.grid import DyadicGrid, GridFunction
from compound_increments.oracles import adaptive_simpson, lattice_distance_unit_poisson, poisson_h
from compound_increments.rate import (
    RateLevelSet,
    discretize,
    distance_to_level_set,
    growth_radius,
    level_set_contains,
    rate_limit,
    rate_p,
    scaling_deviation,
    tv_bound_check,
)

# adaptive Simpson value of int_0^1 h1(2s) ds, tolerance 1e-10
SQUARE_INTEGRAL = 0.19314718056


def g1(values):
    return GridFunction(np.asarray(values, dtype=float)[:, None], 1)


positive_increments = st.integers(1, 5).flatmap(
    lambda p: hnp.arrays(float, 2 ** p, elements=st.floats(0.0, 3.0)))


# -- grid -------------------------------------------------------------------

def test_grid_basics():
    grid = DyadicGrid(2, 3)
    assert grid.n_cells == 64
    assert grid.cell_volume == 1 / 64
    assert np.allclose(DyadicGrid(1, 3).nodes().ravel(), np.arange(1, 9) / 8)


def test_discretize_examples():
    g = g1([1, 2, 3, 4])
    assert discretize(g, 2) == g
    assert np.allclose(discretize(g, 1).increments[:, 0], [3, 7])
    for q in range(3):
        assert discretize(g, q).total() == pytest.approx(g.total())
    with pytest.raises(DomainError):
        discretize(g, 3)


@settings(max_examples=40, deadline=None)
@given(positive_increments)
def test_discretize_composes(inc):
    g = g1(inc)
    for q in range(g.p + 1):
        for r in range(q + 1):
            assert np.allclose(discretize(discretize(g, q), r).increments, discretize(g, r).increments)


def test_cumulative_and_increments_agree():
    rng = np.random.default_rng(1)
    inc = rng.normal(size=(4, 4, 2))
    g = GridFunction(inc, 2)
    cum = g.cumulative()
    assert np.allclose(cum[1, 2], inc[:2, :3].sum(axis=(0, 1)))
    assert np.allclose(GridFunction.from_cumulative(cum, 2).increments, inc, atol=1e-12)


def test_evaluate_between_nodes():
    g = g1([0.25, 0.25])
    assert g.evaluate(np.array([[0.25]]))[0, 0] == pytest.approx(0.125)


# -- rate_p ------------------------------------------------------------------

def test_rate_examples(unit_chern):
    for p in range(1, 6):
        assert rate_p(GridFunction.constant_slope([1.0], p), unit_chern) == 0.0
    assert rate_p(g1([0.0, 1.0]), unit_chern) == pytest.approx(0.693147, abs=1e-6)
    assert rate_p(g1([0.0, 1.0]), unit_chern) == pytest.approx(0.5 * 1 + 0.5 * poisson_h(2.0), abs=1e-12)
    assert math.isinf(rate_p(g1([0.5, -0.1, 0.6, 0.0]), unit_chern))


def test_rate_half_unit_example(unit_chern):
    # increments (0, 1/2) have slopes (0, 1): half of h1(0) + half of h1(1)
    assert rate_p(g1([0.0, 0.5]), unit_chern) == pytest.approx(0.5, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(positive_increments)
def test_rate_monotone_refinement(inc):
    from compound_increments.models import ModelSpec
    chern = ModelSpec.constant(1.0).chernoff_y
    g = g1(inc)
    vals = [rate_p(discretize(g, q), chern) for q in range(g.p + 1)]
    for a, b in zip(vals, vals[1:]):
        assert b - a >= -1e-12 or (math.isinf(a) and math.isinf(b))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.01, 0.99))
def test_rate_convex(seed, lam):
    from compound_increments.models import ModelSpec
    chern = ModelSpec.constant(1.0).chernoff_y
    rng = np.random.default_rng(seed)
    a, b = g1(rng.gamma(2, 0.2, 8)), g1(rng.gamma(2, 0.2, 8))
    mix = a * lam + b * (1 - lam)
    assert rate_p(mix, chern) <= lam * rate_p(a, chern) + (1 - lam) * rate_p(b, chern) + 1e-9


def test_rate_of_piecewise_function_is_stable_under_refinement(unit_chern):
    coarse = g1([0.1, 0.4])
    fine = g1([0.05, 0.05, 0.2, 0.2])
    assert rate_p(fine, unit_chern) == pytest.approx(rate_p(coarse, unit_chern), abs=1e-12)


def test_rate_limit_square(unit_chern):
    simpson = adaptive_simpson(lambda s: poisson_h(2 * s), 0.0, 1.0, 1e-10)
    assert simpson == pytest.approx(SQUARE_INTEGRAL, abs=1e-10)
    rep = rate_limit(lambda s: 2 * s[:, 0], unit_chern, 10)
    assert rep.monotone
    assert abs(rep.values[-1] - simpson) <= 1e-3
    assert rep.quadrature == pytest.approx(simpson, abs=1e-8)


def test_rate_limit_identity(unit_chern):
    rep = rate_limit(lambda s: np.ones(len(s)), unit_chern, 4)
    assert np.all(rep.values == 0)
    with pytest.raises(DomainError):
        rate_limit(lambda s: np.ones(len(s)), unit_chern, 1)


def test_rate_limit_two_dims(unit_chern):
    rep = rate_limit(lambda s: s[:, 0] + s[:, 1], unit_chern, 4, d=2)
    assert rep.monotone
    assert rep.values[-1] <= rep.quadrature + 1e-9


# -- level sets ----------------------------------------------------------------

def test_level_set_examples(unit_chern):
    ls = RateLevelSet(unit_chern, 0.5)
    assert level_set_contains(GridFunction.constant_slope([2.0], 3), ls)
    assert not level_set_contains(GridFunction.constant_slope([2.2], 3), ls)
    for a in (0.0, 0.1, 5.0):
        level = RateLevelSet(unit_chern, a)
        assert level_set_contains(level.zero_rate(3), level)
    assert not level_set_contains(GridFunction.constant_slope([1.01], 3), RateLevelSet(unit_chern, 0.0))
    with pytest.raises(DomainError):
        RateLevelSet(unit_chern, -1.0)


def test_distance_zero_when_contained(unit_chern):
    ls = RateLevelSet(unit_chern, 0.5)
    g = GridFunction.constant_slope([1.5], 3)
    res = distance_to_level_set(g, ls)
    assert res.distance == 0.0
    assert res.witness == g


def test_distance_singleton_level(unit_chern):
    ls = RateLevelSet(unit_chern, 0.0)
    g = g1([0.2, 0.9])
    res = distance_to_level_set(g, ls)
    assert res.distance == pytest.approx(max(abs(0.2 - 0.5), abs(1.1 - 1.0)), abs=1e-12)


@pytest.mark.parametrize("nodes", [[0.0, 0.0, 3.0, 3.0], [0.0, 0.0, 0.9, 1.8], [0.1, 0.2, 1.5, 1.6]])
def test_distance_against_lattice(unit_chern, nodes):
    ls = RateLevelSet(unit_chern, 0.5)
    g = GridFunction.from_cumulative(np.array(nodes)[:, None])
    res = distance_to_level_set(g, ls)
    assert abs(res.distance - lattice_distance_unit_poisson(nodes, 0.5)) <= 2e-2
    assert rate_p(res.witness, unit_chern) <= 0.5 + 1e-6
    assert g.sup_distance(res.witness) <= res.distance + 1e-4
    assert res.trace


def test_distance_zero_iff_contained(unit_chern):
    ls = RateLevelSet(unit_chern, 0.3)
    rng = np.random.default_rng(9)
    for _ in range(8):
        g = g1(rng.gamma(3, 0.1, 4))
        inside = level_set_contains(g, ls)
        assert (distance_to_level_set(g, ls).distance == 0.0) == inside


def test_tv_bound(unit_chern):
    ls = RateLevelSet(unit_chern, 0.5)
    radius = growth_radius(unit_chern)
    assert unit_chern([radius]) >= radius - 1e-6
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 20:
        g = g1(rng.gamma(2, 0.1, 8))
        if not level_set_contains(g, ls):
            continue
        rep = tv_bound_check(g, ls, radius)
        assert rep.passed and rep.total_variation <= rep.bound
        checked += 1
    zero = ls.zero_rate(3)
    assert tv_bound_check(zero, ls, radius).total_variation == pytest.approx(1.0)
    spike = g1([50.0, 0, 0, 0])
    assert not tv_bound_check(spike, ls, radius).contained


def test_scaling_deviation_small(unit_chern):
    ls = RateLevelSet(unit_chern, 0.5)
    rng = np.random.default_rng(2)
    radius = growth_radius(unit_chern)
    worst = 0.0
    for _ in range(10):
        g = g1(rng.gamma(4, 0.25, 16) / 16)
        if not level_set_contains(g, ls):
            continue
        worst = max(worst, scaling_deviation(g, 1 + 1e-3, 1 - 1e-3),
                    scaling_deviation(g, 1 - 1e-3, 1 - 1e-3))
    assert worst <= (radius + 0.5) * (1e-3 + 1e-3) * 2
