from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memtrace.trace_core import (
    PAD,
    CapExceeded,
    History,
    MemoryTrace,
    ObservationSpace,
    check_cap,
    dedup_points,
    enumerate_histories,
    enumerate_traces,
    trace_by_recursion,
    trace_of_history,
    trace_update,
    traces_of_histories,
    window_of_history,
)

histories = st.lists(st.integers(0, 3), min_size=0, max_size=25)
lams = st.floats(0.0, 0.99, allow_nan=False)


def brute_trace(obs, lam, size):
    # direct sum, most recent first
    z = np.zeros(size)
    for k, y in enumerate(obs):
        z[y] += (1 - lam) * lam**k
    return z


def test_parse_and_render_round_trip():
    space = ObservationSpace.one_hot(("a", "b", "o", "x", "y"))
    h = History.parse(space, "aoox")
    assert h.obs[0] == space.index("x")
    assert h.obs[-1] == space.index("a")
    assert h.render(space) == "aoox"
    assert h.oldest_first() == tuple(space.index(c) for c in "aoox")


def test_extend_puts_new_observation_first():
    h = History((1, 0)).extend(2)
    assert h.obs == (2, 1, 0)


def test_space_validation():
    with pytest.raises(ValueError):
        ObservationSpace(0)
    with pytest.raises(ValueError):
        ObservationSpace(2, ("a", "a"))
    with pytest.raises(IndexError):
        ObservationSpace(3).check(3)
    with pytest.raises(IndexError):
        trace_of_history(History((0, 5)), 0.5, ObservationSpace(3))


def test_memory_trace_rejects_bad_lambda():
    with pytest.raises(ValueError):
        MemoryTrace(np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        MemoryTrace(np.zeros(2), -0.1)


def test_trace_is_read_only():
    z = trace_of_history(History((0, 1)), 0.5, ObservationSpace(2))
    with pytest.raises(ValueError):
        z.z[0] = 3.0


def test_lambda_zero_gives_current_observation():
    z = trace_of_history(History((2, 0, 1)), 0.0, ObservationSpace(3))
    assert np.array_equal(z.z, [0.0, 0.0, 1.0])


def test_known_trace_values():
    # (1 - lam) * (e_0 + lam e_1 + lam^2 e_0) at lam = 1/2
    z = trace_of_history(History((0, 1, 0)), 0.5, ObservationSpace(2))
    assert np.allclose(z.z, [0.5 + 0.125, 0.25])


@settings(max_examples=200, deadline=None)
@given(histories, lams)
def test_closed_form_matches_recursion_and_brute_force(obs, lam):
    space = ObservationSpace(4)
    h = History(obs)
    closed = trace_of_history(h, lam, space).z
    assert np.allclose(closed, trace_by_recursion(h, lam, space).z, atol=1e-12)
    assert np.allclose(closed, brute_trace(obs, lam, 4), atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(histories, lams)
def test_one_hot_mass_identity(obs, lam):
    z = trace_of_history(History(obs), lam, ObservationSpace(4)).z
    assert math.isclose(z.sum(), 1 - lam ** len(obs), abs_tol=1e-12)
    assert np.all(z >= 0)


def test_vector_space_traces():
    space = ObservationSpace.from_vectors([[0.0], [1.0], [2.0]])
    z = trace_of_history(History((1, 0)), 0.5, space)
    assert z.dim == 1
    assert math.isclose(z.z[0], 0.5)
    step = trace_update(MemoryTrace.zeros(1, 0.5), 2, space)
    assert math.isclose(step.z[0], 1.0)


def test_trace_update_dimension_mismatch():
    with pytest.raises(ValueError):
        trace_update(MemoryTrace.zeros(3, 0.5), 0, ObservationSpace(2))


def test_window_padding():
    assert window_of_history(History((1, 2)), 4) == (1, 2, PAD, PAD)
    assert window_of_history(History((1, 2, 0)), 2) == (1, 2)
    assert window_of_history(History(()), 0) == ()
    with pytest.raises(ValueError):
        window_of_history(History(()), -1)


def test_enumeration_order_and_count():
    H = enumerate_histories(3, 2)
    assert H.shape == (8, 3)
    assert H[0].tolist() == [0, 0, 0]
    assert H[1].tolist() == [0, 0, 1]
    assert len({tuple(r) for r in H}) == 8
    assert enumerate_histories(0, 5).shape == (1, 0)


def test_cap():
    assert check_cap(3, 4) == 81
    with pytest.raises(CapExceeded):
        check_cap(11, 7, cap=10**6)
    with pytest.raises(CapExceeded):
        enumerate_histories(30, 5)


def test_vectorised_traces_match_scalar():
    space = ObservationSpace(3)
    H = enumerate_histories(4, 3)
    Z = traces_of_histories(H, 0.3, space)
    for row, z in zip(H[::7], Z[::7]):
        assert np.allclose(z, trace_of_history(History(tuple(row)), 0.3, space).z)


def test_dedup_and_distinct_traces():
    pts = np.array([[0.0, 0.0], [0.0, 1e-12], [1.0, 0.0]])
    assert dedup_points(pts).tolist() == [0, 2]
    # lam = 0 collapses every length-m history onto its most recent symbol
    assert len(enumerate_traces(3, 0.0, ObservationSpace(3))) == 3
    # rational lam < 1/2 keeps all 27 points apart
    assert len(enumerate_traces(3, 0.25, ObservationSpace(3))) == 27
