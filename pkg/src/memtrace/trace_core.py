"""Observation spaces, histories, windows and memory traces.

Histories are stored as tuples of observation indices with the most recent
observation first, so ``h.obs[0]`` is the current observation ``y_0`` and
``h.obs[k]`` is ``y_{-k}``.  Observation vectors are only materialised inside
the numeric kernels below.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

#: Window position beyond the end of a finite history (a virtual zero vector).
PAD = -1

DEFAULT_CAP = 1 << 22


class CapExceeded(ValueError):
    """Raised when an enumeration would exceed the configured size cap."""


def check_cap(ysize: int, m: int, cap: int = DEFAULT_CAP) -> int:
    """Return ``ysize**m`` or raise :class:`CapExceeded`.

    The comparison is done in log space so huge ``m`` never builds a bignum.
    """
    if m < 0:
        raise ValueError(f"window length must be >= 0, got {m}")
    if ysize > 1 and m * math.log(ysize) > math.log(max(cap, 1)) + 1e-12:
        raise CapExceeded(f"{ysize}^{m} histories exceed cap {cap}")
    count = ysize**m
    if count > cap:
        raise CapExceeded(f"{ysize}^{m} histories exceed cap {cap}")
    return count


@dataclass(frozen=True)
class ObservationSpace:
    """A finite observation alphabet.

    By default observations are one-hot vectors in ``R^size``.  A space built
    with :meth:`from_vectors` carries explicit (possibly linearly dependent)
    observation vectors instead.
    """

    size: int
    labels: tuple[str, ...] = ()
    vectors: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("observation space needs at least one symbol")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(self.size)))
        if len(self.labels) != self.size or len(set(self.labels)) != self.size:
            raise ValueError("labels must be distinct and match the space size")
        if self.vectors is not None:
            vecs = np.array(self.vectors, dtype=float)
            if vecs.ndim == 1:
                vecs = vecs[:, None]
            if vecs.shape[0] != self.size:
                raise ValueError("need one vector per observation")
            vecs.setflags(write=False)
            object.__setattr__(self, "vectors", vecs)

    @classmethod
    def one_hot(cls, labels: int | Sequence[str]) -> ObservationSpace:
        if isinstance(labels, int):
            return cls(labels)
        return cls(len(labels), tuple(labels))

    @classmethod
    def from_vectors(cls, vectors, labels: Sequence[str] = ()) -> ObservationSpace:
        vecs = np.asarray(vectors, dtype=float)
        return cls(len(vecs), tuple(labels), vecs)

    @property
    def is_one_hot(self) -> bool:
        return self.vectors is None

    @property
    def dim(self) -> int:
        return self.size if self.vectors is None else self.vectors.shape[1]

    def matrix(self) -> np.ndarray:
        """Observation vectors as rows, shape ``(size, dim)``."""
        if self.vectors is None:
            return np.eye(self.size)
        return self.vectors

    def vector(self, y: int) -> np.ndarray:
        self.check(y)
        return self.matrix()[y]

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def check(self, y: int) -> None:
        if not 0 <= y < self.size:
            raise IndexError(f"observation index {y} outside alphabet of size {self.size}")


@dataclass(frozen=True)
class History:
    """A finite observation history, most recent observation first."""

    obs: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "obs", tuple(int(y) for y in self.obs))

    @classmethod
    def chronological(cls, seq: Iterable[int]) -> History:
        """Build from an oldest-first sequence (the order it was observed in)."""
        return cls(tuple(reversed(list(seq))))

    @classmethod
    def parse(cls, space: ObservationSpace, text: str) -> History:
        """Parse left-to-right notation such as ``"aoox"`` (oldest symbol first).

        Only single-character labels are supported.
        """
        return cls.chronological(space.index(c) for c in text)

    def __len__(self) -> int:
        return len(self.obs)

    def __iter__(self):
        return iter(self.obs)

    def oldest_first(self) -> tuple[int, ...]:
        return tuple(reversed(self.obs))

    def extend(self, y: int) -> History:
        """The history one step later, after observing ``y``."""
        return History((int(y),) + self.obs)

    def validate(self, space: ObservationSpace) -> None:
        for y in self.obs:
            space.check(y)

    def render(self, space: ObservationSpace) -> str:
        return "".join(space.labels[y] for y in self.oldest_first())


@dataclass(frozen=True)
class MemoryTrace:
    z: np.ndarray
    lam: float

    def __post_init__(self) -> None:
        z = np.array(self.z, dtype=float)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        _check_lambda(self.lam)

    @classmethod
    def zeros(cls, dim: int, lam: float) -> MemoryTrace:
        return cls(np.zeros(dim), lam)

    @property
    def dim(self) -> int:
        return self.z.shape[0]

    def distance(self, other: MemoryTrace) -> float:
        return float(np.linalg.norm(self.z - other.z))


WindowKey = tuple[int, ...]


def _check_lambda(lam: float) -> None:
    if not 0.0 <= float(lam) < 1.0:
        raise ValueError(f"forgetting factor must lie in [0, 1), got {lam}")


def _space_for(dim: int, space: ObservationSpace | None) -> ObservationSpace:
    return ObservationSpace(dim) if space is None else space


def trace_update(trace: MemoryTrace, y: int, space: ObservationSpace | None = None) -> MemoryTrace:
    """One step of the exponential moving average ``lam * z + (1 - lam) * y``."""
    space = _space_for(trace.dim, space)
    if space.dim != trace.dim:
        raise ValueError(f"trace has dim {trace.dim}, space has dim {space.dim}")
    vec = space.vector(y)
    return MemoryTrace(trace.lam * trace.z + (1.0 - trace.lam) * vec, trace.lam)


def trace_weights(length: int, lam: float) -> np.ndarray:
    """Coefficients ``(1 - lam) * lam**k`` for ``k = 0 .. length-1``."""
    if length == 0:
        return np.zeros(0)
    # lam**0 must be 1 even when lam == 0
    return (1.0 - lam) * np.power(float(lam), np.arange(length, dtype=float))


def trace_of_history(h: History | Sequence[int], lam: float, space: ObservationSpace) -> MemoryTrace:
    """Closed-form trace ``(1 - lam) * sum_k lam**k y_{-k}`` of a finite history."""
    _check_lambda(lam)
    obs = h.obs if isinstance(h, History) else tuple(h)
    z = np.zeros(space.dim)
    if obs:
        idx = np.asarray(obs, dtype=int)
        if idx.min() < 0 or idx.max() >= space.size:
            raise IndexError(f"history contains indices outside alphabet of size {space.size}")
        w = trace_weights(len(idx), lam)
        if space.is_one_hot:
            np.add.at(z, idx, w)
        else:
            z = w @ space.matrix()[idx]
    return MemoryTrace(z, lam)


def trace_by_recursion(h: History, lam: float, space: ObservationSpace) -> MemoryTrace:
    """Fold :func:`trace_update` over the history, oldest observation first."""
    trace = MemoryTrace.zeros(space.dim, lam)
    for y in h.oldest_first():
        trace = trace_update(trace, y, space)
    return trace


def window_of_history(h: History | Sequence[int], m: int) -> WindowKey:
    if m < 0:
        raise ValueError(f"window length must be >= 0, got {m}")
    obs = h.obs if isinstance(h, History) else tuple(h)
    head = obs[:m]
    return head + (PAD,) * (m - len(head))


def enumerate_histories(m: int, ysize: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    """All length-``m`` histories as rows of an int array (most recent first).

    Rows follow :func:`itertools.product` order, so row ``i`` is stable.
    """
    n = check_cap(ysize, m, cap)
    if m == 0:
        return np.zeros((1, 0), dtype=int)
    out = np.fromiter(
        itertools.chain.from_iterable(itertools.product(range(ysize), repeat=m)),
        dtype=int,
        count=n * m,
    )
    return out.reshape(n, m)


def traces_of_histories(histories: np.ndarray, lam: float, space: ObservationSpace) -> np.ndarray:
    """Vectorised traces for equal-length histories; returns ``(N, dim)``."""
    _check_lambda(lam)
    histories = np.asarray(histories, dtype=int)
    n, m = histories.shape
    w = trace_weights(m, lam)
    mat = space.matrix()
    z = np.zeros((n, space.dim))
    for k in range(m):
        z += w[k] * mat[histories[:, k]]
    return z


def dedup_points(points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Indices of representative rows after merging points closer than ``tol``."""
    from scipy.spatial import cKDTree

    if len(points) == 0:
        return np.zeros(0, dtype=int)
    pairs = cKDTree(points).query_pairs(r=tol, output_type="ndarray")
    keep = np.ones(len(points), dtype=bool)
    if len(pairs):
        keep[pairs.max(axis=1)] = False
    return np.flatnonzero(keep)


def enumerate_traces(
    m: int,
    lam: float,
    space: ObservationSpace,
    *,
    cap: int = DEFAULT_CAP,
    tol: float = 1e-9,
) -> np.ndarray:
    """The distinct points of the length-``m`` trace set, one per row."""
    hist = enumerate_histories(m, space.size, cap)
    z = traces_of_histories(hist, lam, space)
    return z[dedup_points(z, tol)]
