from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memtrace.geometry import (
    GOLDEN_LAMBDA,
    SQRT2,
    check_concentration,
    check_separation,
    exact_trace,
    find_collisions,
    first_difference,
    fractal_points,
    injectivity_scan,
    minkowski_dimension,
    projection_basis,
    rational_no_collision,
    self_similar_union,
    write_points_csv,
)
from memtrace.trace_core import History, ObservationSpace, enumerate_traces


def test_concentration_example_is_tight_up_to_tail():
    # share the most recent two symbols, differ everywhere before
    r = check_concentration(History((0, 1, 0, 0, 0)), History((0, 1, 1, 1, 1)), 2, 0.3)
    assert r.satisfied
    assert r.lhs <= SQRT2 * 0.3**2


def test_separation_example():
    r = check_separation(History((0, 1)), History((1, 1)), 1, 0.25)
    assert r.satisfied
    assert math.isclose(r.lhs, SQRT2 * 0.75)


def test_margin_preconditions():
    with pytest.raises(ValueError):
        check_concentration(History((0, 1)), History((1, 1)), 1, 0.3)
    with pytest.raises(ValueError):
        check_separation(History((0,)), History((1,)), 1, 0.6)
    with pytest.raises(ValueError):
        check_separation(History((0,)), History((0,)), 1, 0.3)


same_len_pairs = st.integers(1, 10).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 2), min_size=n, max_size=n), st.lists(st.integers(0, 2), min_size=n, max_size=n))
)


@settings(max_examples=300, deadline=None)
@given(same_len_pairs, st.floats(0.0, 0.5))
def test_margins_hold_at_first_difference(pair, lam):
    a, b = History(pair[0]), History(pair[1])
    k = first_difference(a, b)
    space = ObservationSpace(3)
    if k is None:
        return
    assert check_concentration(a, b, k, lam, space).satisfied
    assert check_separation(a, b, k + 1, lam, space).satisfied


def test_first_difference():
    assert first_difference(History((0, 1)), History((0, 1))) is None
    assert first_difference(History((0, 1)), History((0, 2))) == 1
    assert first_difference(History((0,)), History((0, 0))) == 1


def test_golden_witness():
    w = injectivity_scan(ObservationSpace(2), 3, GOLDEN_LAMBDA)
    assert w is not None
    assert {w.h.obs, w.hbar.obs} == {(0, 1, 1), (1, 0, 0)}
    assert w.distance < 1e-12
    assert w.exact is None


def test_scalar_witness_is_exact():
    space = ObservationSpace.from_vectors([[0.0], [1.0], [2.0]])
    found = find_collisions(space, 2, Fraction(1, 2), exact_length=True)
    assert any({w.h.obs, w.hbar.obs} == {(1, 0), (0, 2)} and w.exact for w in found)


@pytest.mark.parametrize("lam", [Fraction(1, 3), Fraction(1, 2), Fraction(2, 3), Fraction(3, 4)])
def test_rational_lambdas_injective(lam):
    space = ObservationSpace(2)
    assert injectivity_scan(space, 6, lam) is None
    assert rational_no_collision(space, 6, lam)


def test_exact_trace_matches_float():
    vecs = [[Fraction(1), Fraction(0)], [Fraction(0), Fraction(1)]]
    ex = exact_trace((0, 1, 1), Fraction(1, 3), vecs)
    assert np.allclose([float(v) for v in ex], [2 / 3, 2 / 9 + 2 / 27])


def test_minkowski_dimension():
    d, dd = minkowski_dimension(1 / 3, 3)
    assert math.isclose(d, 1.0)
    assert dd == 1.0
    assert minkowski_dimension(0.9, 2)[1] == 1.0
    assert minkowski_dimension(0.0, 4) == (0.0, 0.0)
    with pytest.raises(ValueError):
        minkowski_dimension(0.5, 1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.001, 0.499), st.integers(2, 10))
def test_dimension_below_simplex_for_fast_forgetting(lam, ysize):
    assert minkowski_dimension(lam, ysize)[0] < ysize - 1


def test_projection_basis_orthonormal():
    for n in (3, 4):
        B = projection_basis(n)
        assert np.allclose(B @ B.T, np.eye(n - 1))
        assert np.allclose(B @ np.ones(n), 0.0)


def test_fractal_points_shape_and_keys(tmp_path):
    coords, keys = fractal_points(4, 0.3, 3, key_len=1)
    assert coords.shape == (81, 2)
    assert {k for k in keys} == {(0,), (1,), (2,)}
    path = write_points_csv(tmp_path / "p.csv", coords, keys)
    lines = path.read_text().splitlines()
    assert lines[0] == "proj_1,proj_2,window_key"
    assert len(lines) == 82
    with pytest.raises(ValueError):
        fractal_points(2, 0.3, 5)


def test_self_similarity_of_trace_set():
    # the length-(m+1) set is the union of |Y| shrunk copies of the length-m set
    space = ObservationSpace(3)
    lam = 0.3
    small = enumerate_traces(3, lam, space)
    big = enumerate_traces(4, lam, space)
    union = self_similar_union(small, lam, 3)
    key = lambda a: sorted(map(tuple, np.round(a, 10)))  # noqa: E731
    assert key(union) == key(big)
