from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memtrace.complexity import (
    ValueRange,
    cover_window_length,
    entropy_trace_bounds,
    entropy_window,
    grid_size,
    hoeffding_bound,
    lipschitz_for_window,
    tmaze_constants,
    tmaze_min_distance,
    tmaze_relevant_histories,
    value_grid,
    window_for_trace,
)
from memtrace.geometry import SQRT2, minkowski_dimension

UNIT = ValueRange(-1.0, 1.0)


def test_value_range():
    vr = ValueRange.from_rewards(-1, 1, 0.9)
    assert math.isclose(vr.delta, 20.0)
    assert vr.midpoint == 0.0
    with pytest.raises(ValueError):
        ValueRange(1.0, 0.0)


def test_grid_covers_range():
    for eps in (0.05, 0.1, 0.3, 0.5, 1.0, 2.0):
        g = value_grid(UNIT, eps)
        assert len(g) == math.ceil(UNIT.delta / (2 * eps) - 1e-12)
        xs = np.linspace(-1, 1, 1001)
        assert np.max(np.min(np.abs(xs[:, None] - g[None]), axis=1)) <= eps + 1e-12
    assert grid_size(2.0, 1.0) == 1
    with pytest.raises(ValueError):
        grid_size(1.0, 0.0)


def test_window_entropy_closed_form():
    q = entropy_window(3, 2, UNIT, 0.1)
    assert q.value == 8 * math.log(10)
    assert not q.in_log_space


def test_window_entropy_log_space():
    q = entropy_window(40, 11, UNIT, 0.1)
    assert q.value == math.inf
    assert q.in_log_space
    assert math.isclose(q.log_count, 40 * math.log(11))


def test_trace_bounds_match_formulas():
    lam, L, y, eps = 0.25, 5.0, 3, 0.1
    q = entropy_trace_bounds(lam, L, y, UNIT, eps)
    d, _ = minkowski_dimension(lam, y)
    mult = math.log(math.ceil(UNIT.delta / eps))
    a = mult * y * (2 * L / eps) ** d
    b = mult * math.ceil(2 * L * math.sqrt(y - 1) / eps) ** (y - 1)
    assert math.isclose(q.bounds[0], a, rel_tol=1e-12)
    assert math.isclose(q.bounds[1], b, rel_tol=1e-12)
    assert q.value == min(q.bounds)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10), st.integers(2, 5), st.floats(0.01, 0.49), st.sampled_from([0.01, 0.1, 0.3]))
def test_window_to_trace_constant(m, ysize, lam, eps):
    L = lipschitz_for_window(m, lam, UNIT)
    got = entropy_trace_bounds(lam, L, ysize, UNIT, eps).bounds[0]
    d, _ = minkowski_dimension(lam, ysize)
    c = math.log(math.ceil(UNIT.delta / eps)) * (SQRT2 * UNIT.delta / ((1 - 2 * lam) * eps)) ** d
    assert math.isclose(got, c * ysize**m, rel_tol=1e-9)


def test_hoeffding_bound():
    b = hoeffding_bound(10.0, 100, 0.05, UNIT, 0.1, base_error=0.2)
    expect = 0.2 + 4 * math.sqrt((10 + math.log(40)) / 200) + 0.2 + 0.005
    assert math.isclose(b, expect)
    assert hoeffding_bound(10.0, 400, 0.05, UNIT, 0.1) < hoeffding_bound(10.0, 100, 0.05, UNIT, 0.1)
    with pytest.raises(ValueError):
        hoeffding_bound(1.0, 0, 0.05, UNIT, 0.1)
    with pytest.raises(ValueError):
        hoeffding_bound(1.0, 10, 1.5, UNIT, 0.1)


def test_conversion_constants():
    assert math.isclose(lipschitz_for_window(1, 0.25, UNIT), 2 / (SQRT2 * 0.5))
    with pytest.raises(ValueError):
        lipschitz_for_window(2, 0.5, UNIT)
    # lam^m * L <= eps at the returned window length, and not one shorter
    lam, L, eps = 0.6, 10.0, 0.01
    m = window_for_trace(lam, L, eps)
    assert L * lam**m <= eps * (1 + 1e-12)
    assert L * lam ** (m - 1) > eps
    assert window_for_trace(0.0, L, eps) == 1
    with pytest.raises(ValueError):
        window_for_trace(0.5, 1.0, 2.0)
    c = cover_window_length(lam, L, eps)
    assert lam**c <= eps / (2 * L) * (1 + 1e-12)


def test_tmaze_constants_and_distances():
    for k in range(2, 13):
        c = tmaze_constants(k)
        assert math.isclose(c.lam, (k - 1) / k)
        assert math.isclose(c.lipschitz, SQRT2 * math.e * k)
        d = tmaze_min_distance(k)
        assert math.isclose(d, SQRT2 * (1 - c.lam) * c.lam ** (k - 1), rel_tol=1e-12)
        assert d >= SQRT2 / (math.e * k)
        # value gaps of at most 2 stay within L times the smallest distance
        assert 2 <= c.lipschitz * d


def test_tmaze_relevant_histories():
    rel = tmaze_relevant_histories(4)
    assert len(rel) == 2 * 3 + 4
    values = sorted(v for _, v in rel)
    assert values.count(1.0) == 2 and values.count(-1.0) == 2
