"""Executable checks for the geometry of trace space.

Covers concentration/separation margins between traces, brute-force
injectivity scans (with an exact rational confirmation pass), the Minkowski
dimension formula and point clouds of the Sierpinski-like trace sets.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .trace_core import (
    DEFAULT_CAP,
    PAD,
    CapExceeded,
    History,
    ObservationSpace,
    enumerate_histories,
    trace_of_history,
    traces_of_histories,
    window_of_history,
)

COLLISION_TOL = 1e-9
MARGIN_TOL = 1e-12
SQRT2 = math.sqrt(2.0)
GOLDEN_LAMBDA = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class CollisionWitness:
    h: History
    hbar: History
    lam: float
    distance: float
    # True when confirmed in rational arithmetic, None when lam is not rational
    exact: bool | None = None


@dataclass(frozen=True)
class MarginReport:
    h: History
    hbar: History
    m: int
    lhs: float
    rhs: float
    kind: str
    satisfied: bool


def _as_history(h) -> History:
    return h if isinstance(h, History) else History(tuple(h))


def _one_hot_space(h: History, hbar: History, space: ObservationSpace | None) -> ObservationSpace:
    if space is None:
        size = max((*h.obs, *hbar.obs, 0)) + 1
        return ObservationSpace(max(size, 2))
    if not space.is_one_hot:
        raise ValueError("margin checks assume one-hot observations")
    return space


def check_concentration(h, hbar, m: int, lam: float, space: ObservationSpace | None = None) -> MarginReport:
    """Histories sharing their last ``m`` observations have traces within ``sqrt2 * lam**m``."""
    h, hbar = _as_history(h), _as_history(hbar)
    if window_of_history(h, m) != window_of_history(hbar, m):
        raise ValueError("concentration requires equal length-m windows")
    space = _one_hot_space(h, hbar, space)
    lhs = trace_of_history(h, lam, space).distance(trace_of_history(hbar, lam, space))
    rhs = SQRT2 * lam**m
    return MarginReport(h, hbar, m, lhs, rhs, "concentration", lhs <= rhs + MARGIN_TOL)


def check_separation(h, hbar, m: int, lam: float, space: ObservationSpace | None = None) -> MarginReport:
    """Histories with different length-``m`` windows are at least ``sqrt2 (1-2lam) lam**(m-1)`` apart."""
    h, hbar = _as_history(h), _as_history(hbar)
    if lam > 0.5:
        raise ValueError(f"separation needs lam <= 1/2, got {lam}")
    if m < 1:
        raise ValueError("separation needs m >= 1")
    if window_of_history(h, m) == window_of_history(hbar, m):
        raise ValueError("separation requires different length-m windows")
    space = _one_hot_space(h, hbar, space)
    lhs = trace_of_history(h, lam, space).distance(trace_of_history(hbar, lam, space))
    rhs = SQRT2 * (1.0 - 2.0 * lam) * lam ** (m - 1)
    return MarginReport(h, hbar, m, lhs, rhs, "separation", lhs >= rhs - MARGIN_TOL)


def first_difference(h: History, hbar: History) -> int | None:
    """Smallest ``k`` where the 0-padded histories differ, or None if equal."""
    a = window_of_history(h, max(len(h), len(hbar)))
    b = window_of_history(hbar, max(len(h), len(hbar)))
    for k, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return k
    return None


# ---------------------------------------------------------------------------
# injectivity
# ---------------------------------------------------------------------------


def _histories_up_to(ysize: int, max_len: int, exact_length: bool, cap: int) -> list[tuple[int, ...]]:
    lengths = [max_len] if exact_length else range(max_len + 1)
    total = 0
    for n in lengths:
        total += ysize**n
        if total > cap:
            raise CapExceeded(f"{total} histories exceed cap {cap}")
    out: list[tuple[int, ...]] = []
    for n in lengths:
        out.extend(tuple(int(v) for v in row) for row in enumerate_histories(n, ysize, cap))
    return out


def _float_traces(hists: list[tuple[int, ...]], lam: float, space: ObservationSpace) -> np.ndarray:
    z = np.zeros((len(hists), space.dim))
    by_len: dict[int, list[int]] = {}
    for i, h in enumerate(hists):
        by_len.setdefault(len(h), []).append(i)
    for n, idx in by_len.items():
        if n == 0:
            continue
        z[idx] = traces_of_histories(np.array([hists[i] for i in idx]), lam, space)
    return z


def exact_trace(h: Sequence[int], lam: Fraction, vectors: list[list[Fraction]]) -> tuple[Fraction, ...]:
    """Trace in rational arithmetic; ``vectors`` are the observation vectors."""
    dim = len(vectors[0])
    acc = [Fraction(0)] * dim
    weight = 1 - lam
    for y in h:
        vec = vectors[y]
        acc = [a + weight * v for a, v in zip(acc, vec)]
        weight *= lam
    return tuple(acc)


def _rational_vectors(space: ObservationSpace) -> list[list[Fraction]]:
    mat = space.matrix()
    return [[Fraction(float(v)).limit_denominator(10**6) for v in row] for row in mat]


def _history_sort_key(h: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    return (len(h), h)


def find_collisions(
    space: ObservationSpace,
    max_len: int,
    lam: float | Fraction,
    *,
    exact_length: bool = False,
    cap: int = DEFAULT_CAP,
    tol: float = COLLISION_TOL,
) -> list[CollisionWitness]:
    """All colliding history pairs, sorted by history encoding.

    Floating-point candidates come from a KD-tree with radius ``tol``.  When
    ``lam`` is a :class:`~fractions.Fraction` every candidate is re-checked in
    rational arithmetic, and rational collisions the float pass missed are
    added, so the verdict is exact.
    """
    from scipy.spatial import cKDTree

    lam_f = float(lam)
    if not 0.0 <= lam_f < 1.0:
        raise ValueError(f"forgetting factor must lie in [0, 1), got {lam}")
    hists = _histories_up_to(space.size, max_len, exact_length, cap)
    z = _float_traces(hists, lam_f, space)
    pairs = cKDTree(z).query_pairs(r=tol, output_type="ndarray") if len(z) > 1 else np.zeros((0, 2), int)
    candidates = {tuple(sorted((int(i), int(j)))) for i, j in pairs}

    exact: bool | None = None
    if isinstance(lam, Fraction):
        vecs = _rational_vectors(space)
        seen: dict[tuple[Fraction, ...], int] = {}
        exact_pairs: set[tuple[int, int]] = set()
        for i, h in enumerate(hists):
            key = exact_trace(h, lam, vecs)
            if key in seen:
                exact_pairs.add((seen[key], i))
            else:
                seen[key] = i
        # collisions within an equivalence class beyond the representative
        candidates = {p for p in candidates if exact_trace(hists[p[0]], lam, vecs) == exact_trace(hists[p[1]], lam, vecs)}
        candidates |= exact_pairs
        exact = True

    out = []
    for i, j in candidates:
        a, b = sorted((hists[i], hists[j]), key=_history_sort_key)
        out.append(
            CollisionWitness(History(a), History(b), lam_f, float(np.linalg.norm(z[i] - z[j])), exact)
        )
    out.sort(key=lambda w: (_history_sort_key(w.h.obs), _history_sort_key(w.hbar.obs)))
    return out


def injectivity_scan(
    space: ObservationSpace,
    max_len: int,
    lam: float | Fraction,
    *,
    exact_length: bool = False,
    cap: int = DEFAULT_CAP,
    tol: float = COLLISION_TOL,
) -> CollisionWitness | None:
    """First collision among histories up to ``max_len`` (or exactly that long), if any."""
    found = find_collisions(space, max_len, lam, exact_length=exact_length, cap=cap, tol=tol)
    return found[0] if found else None


def rational_no_collision(space: ObservationSpace, max_len: int, lam: Fraction, cap: int = DEFAULT_CAP) -> bool:
    """Independent rational-arithmetic verdict: are all traces up to ``max_len`` distinct?"""
    vecs = _rational_vectors(space)
    hists = _histories_up_to(space.size, max_len, False, cap)
    keys = {exact_trace(h, lam, vecs) for h in hists}
    return len(keys) == len(hists)


# ---------------------------------------------------------------------------
# dimension and point clouds
# ---------------------------------------------------------------------------


def minkowski_dimension(lam: float, ysize: int) -> tuple[float, float]:
    """``(d_lam, min(|Y| - 1, d_lam))`` with ``d_lam = log|Y| / log(1/lam)``.

    ``lam == 0`` collapses the trace set onto the ``|Y|`` vertices, so its
    dimension is reported as 0.
    """
    if ysize < 2:
        raise ValueError("dimension formula needs |Y| >= 2")
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"forgetting factor must lie in [0, 1), got {lam}")
    if lam == 0.0:
        return 0.0, 0.0
    d = math.log(ysize) / math.log(1.0 / lam)
    return d, min(float(ysize - 1), d)


def projection_basis(n: int) -> np.ndarray:
    """Orthonormal rows spanning the complement of the all-ones direction.

    Gram-Schmidt starting from ``1/sqrt(n)`` followed by the standard basis,
    dropping the first vector, so the result is fully deterministic.
    """
    basis = [np.full(n, 1.0 / math.sqrt(n))]
    for i in range(n):
        v = np.zeros(n)
        v[i] = 1.0
        for b in basis:
            v -= (v @ b) * b
        norm = np.linalg.norm(v)
        if norm > 1e-10:
            basis.append(v / norm)
        if len(basis) == n:
            break
    return np.array(basis[1:])


def fractal_points(
    m: int,
    lam: float,
    ysize: int,
    key_len: int | None = None,
    cap: int = DEFAULT_CAP,
) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """Project every length-``m`` trace onto the ``(|Y|-1)``-dim affine slice.

    Returns the projected coordinates (one row per history, in
    :func:`enumerate_histories` order) and the length-``key_len`` window key of
    each history.
    """
    if ysize not in (3, 4):
        raise ValueError("projection export supports |Y| in {3, 4}")
    space = ObservationSpace(ysize)
    hist = enumerate_histories(m, ysize, cap)
    z = traces_of_histories(hist, lam, space)
    coords = z @ projection_basis(ysize).T
    k = m if key_len is None else key_len
    keys = [tuple(int(v) for v in row[:k]) + (PAD,) * max(0, k - m) for row in hist]
    return coords, keys


def format_key(key: Sequence[int]) -> str:
    return "".join("_" if y == PAD else str(y) for y in key)


def write_points_csv(path: str | Path, coords: np.ndarray, keys: Sequence[Sequence[int]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ncol = coords.shape[1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"proj_{i + 1}" for i in range(ncol)] + ["window_key"])
        for row, key in zip(coords, keys):
            w.writerow([repr(float(v)) for v in row] + [format_key(key)])
    return path


def self_similar_union(points: np.ndarray, lam: float, ysize: int) -> np.ndarray:
    """Apply the map ``Z -> lam Z + (1-lam) Y`` to a point set (one-hot)."""
    eye = np.eye(ysize)
    return np.concatenate([lam * points + (1.0 - lam) * eye[y] for y in range(ysize)])


def all_history_pairs(ysize: int, max_len: int):
    """Every unordered pair of distinct histories up to ``max_len``."""
    hists = [History(h) for h in _histories_up_to(ysize, max_len, False, DEFAULT_CAP)]
    return itertools.combinations(hists, 2)
