import numpy as np
import pytest
from hypothesis import given, strategies as st

from online_em.core import (
    DimensionError,
    StatVector,
    StepSchedule,
    blend_stats,
    block_labels,
    make_layout,
    schedule_gamma,
)


def test_schedule_examples():
    assert schedule_gamma(StepSchedule(1.0, 0.6), 1) == 1.0
    assert schedule_gamma(StepSchedule(0.5, 1.0), 2) == pytest.approx(0.25)
    assert schedule_gamma(StepSchedule(1.0, 1.0), 10) == pytest.approx(0.1)


def test_schedule_vector_matches_scalar():
    sched = StepSchedule(0.7, 0.75)
    g = sched.gammas(50)
    assert np.allclose(g, [sched(n) for n in range(1, 51)], rtol=1e-15)


@pytest.mark.parametrize("gamma0,alpha", [(0.0, 0.6), (1.5, 0.6), (1.0, 0.5), (1.0, 1.2)])
def test_schedule_rejects_bad_parameters(gamma0, alpha):
    with pytest.raises(ValueError):
        StepSchedule(gamma0, alpha)


def test_schedule_rejects_zero_index():
    with pytest.raises(ValueError):
        schedule_gamma(StepSchedule(), 0)


@given(st.floats(0.01, 1.0), st.floats(0.51, 1.0), st.integers(1, 10**6))
def test_schedule_in_unit_interval_and_decreasing(gamma0, alpha, n):
    sched = StepSchedule(gamma0, alpha)
    assert 0 < sched(n + 1) <= sched(n) <= 1


def test_blend_examples():
    layout = make_layout(("a", 2))
    s = StatVector([0.5, 1.0], layout)
    out = blend_stats(s, StatVector([0.7, 2.0], layout), 0.1)
    assert np.allclose(out.values, [0.52, 1.1])
    sbar = np.array([0.3, 7.0])
    assert np.array_equal(blend_stats(s.values, sbar, 1.0), sbar)
    assert np.array_equal(blend_stats(s.values, s.values, 0.37), s.values)


def test_blend_dimension_mismatch():
    with pytest.raises(DimensionError):
        blend_stats(np.zeros(2), np.zeros(3), 0.5)
    with pytest.raises(DimensionError):
        blend_stats(StatVector([1.0, 2.0], make_layout(("a", 2))),
                    StatVector([1.0, 2.0], make_layout(("b", 2))), 0.5)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=8), st.floats(0.0, 1.0))
def test_blend_is_convex_combination(vals, gamma):
    s = np.array(vals)
    sbar = s[::-1] * 2.0
    out = blend_stats(s, sbar, gamma)
    lo, hi = np.minimum(s, sbar), np.maximum(s, sbar)
    assert np.all(out >= lo - 1e-9 * (1 + np.abs(lo))) and np.all(out <= hi + 1e-9 * (1 + np.abs(hi)))


def test_stat_vector_validation():
    layout = make_layout(("a", 1), ("b", 2))
    with pytest.raises(DimensionError):
        StatVector([1.0, 2.0], layout)
    with pytest.raises(ValueError):
        StatVector([1.0, np.nan, 2.0], layout)
    assert np.array_equal(StatVector([1.0, 2.0, 3.0], layout).block("b"), [2.0, 3.0])


def test_block_labels():
    assert block_labels(make_layout(("w", 1), ("beta", 2))) == ("w", "beta_0", "beta_1")
