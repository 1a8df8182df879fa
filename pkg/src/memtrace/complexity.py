"""Closed-form complexity calculators.

Metric entropies of window and Lipschitz-trace function classes, the
Hoeffding generalisation bound, and the constants that convert between the
two classes.  All logarithms are natural, so entropies are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import SQRT2, minkowski_dimension
from .trace_core import History, ObservationSpace, trace_of_history

LOG_OVERFLOW = 63 * math.log(2.0)


@dataclass(frozen=True)
class ValueRange:
    vmin: float
    vmax: float

    def __post_init__(self) -> None:
        if not self.vmax >= self.vmin:
            raise ValueError(f"empty value range [{self.vmin}, {self.vmax}]")

    @property
    def delta(self) -> float:
        return self.vmax - self.vmin

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.vmin + self.vmax)

    @classmethod
    def from_rewards(cls, rmin: float, rmax: float, gamma: float) -> ValueRange:
        return cls(rmin / (1.0 - gamma), rmax / (1.0 - gamma))

    def clamp(self, v):
        return np.clip(v, self.vmin, self.vmax)


@dataclass(frozen=True)
class EntropyQuote:
    """A metric entropy value (window class) or pair of upper bounds (trace class).

    ``log_count`` and ``multiplier`` give the log-space form
    ``exp(log_count) * multiplier`` of the (first) quote; ``value`` is ``inf``
    when ``exp(log_count)`` would not fit in 63 bits.
    """

    epsilon: float
    kind: str
    params: dict = field(default_factory=dict)
    value: float = 0.0
    bounds: tuple[float, float] | None = None
    log_count: float = 0.0
    multiplier: float = 0.0

    @property
    def in_log_space(self) -> bool:
        return self.log_count > LOG_OVERFLOW


def grid_size(delta: float, epsilon: float) -> int:
    """Number of points in the smallest ``epsilon``-cover of an interval of length ``delta``."""
    if epsilon <= 0:
        raise ValueError(f"resolution must be > 0, got {epsilon}")
    return max(1, math.ceil(delta / (2.0 * epsilon) - 1e-12))


def value_grid(vrange: ValueRange, epsilon: float) -> np.ndarray:
    """``ceil(delta / 2 eps)`` points spaced ``2 eps`` apart, centred in the range."""
    n = grid_size(vrange.delta, epsilon)
    span = (n - 1) * 2.0 * epsilon
    start = vrange.vmin + 0.5 * (vrange.delta - span)
    return start + 2.0 * epsilon * np.arange(n)


def entropy_window(m: int, ysize: int, vrange: ValueRange, epsilon: float) -> EntropyQuote:
    """Exact entropy ``|Y|^m ln ceil(delta / 2 eps)`` of the window-``m`` class."""
    if epsilon <= 0:
        raise ValueError(f"resolution must be > 0, got {epsilon}")
    if m < 0:
        raise ValueError("window length must be >= 0")
    mult = math.log(grid_size(vrange.delta, epsilon))
    log_count = m * math.log(ysize)
    if log_count > LOG_OVERFLOW:
        value = math.inf
    else:
        value = float(ysize**m) * mult
    return EntropyQuote(epsilon, "window", {"m": m, "ysize": ysize}, value, None, log_count, mult)


def entropy_trace_bounds(
    lam: float, lipschitz: float, ysize: int, vrange: ValueRange, epsilon: float
) -> EntropyQuote:
    """Both cover-based upper bounds on the entropy of the ``(lam, L)`` trace class.

    The first uses length-m traces as the cover of trace space, the second a
    grid on the ``(|Y|-1)``-dim affine slice.  ``value`` is their minimum.
    """
    if epsilon <= 0:
        raise ValueError(f"resolution must be > 0, got {epsilon}")
    if lipschitz <= 0:
        raise ValueError(f"Lipschitz constant must be > 0, got {lipschitz}")
    d, _ = minkowski_dimension(lam, ysize)
    mult = math.log(max(1, math.ceil(vrange.delta / epsilon - 1e-12)))
    log_a = math.log(ysize) + d * math.log(2.0 * lipschitz / epsilon)
    cells = math.ceil(2.0 * lipschitz * math.sqrt(ysize - 1) / epsilon - 1e-12)
    log_b = (ysize - 1) * math.log(cells)
    bound_a = math.exp(log_a) * mult if log_a <= LOG_OVERFLOW else math.inf
    bound_b = math.exp(log_b) * mult if log_b <= LOG_OVERFLOW else math.inf
    return EntropyQuote(
        epsilon,
        "trace",
        {"lam": lam, "L": lipschitz, "ysize": ysize},
        min(bound_a, bound_b),
        (bound_a, bound_b),
        min(log_a, log_b),
        mult,
    )


def hoeffding_bound(
    entropy: float,
    n: int,
    delta: float,
    vrange: ValueRange,
    epsilon: float,
    base_error: float = 0.0,
) -> float:
    """High-probability bound on the return error of cover-based ERM."""
    if n < 1:
        raise ValueError("need at least one trajectory")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"confidence delta must lie in (0, 1), got {delta}")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    dv = vrange.delta
    return base_error + dv**2 * math.sqrt((entropy + math.log(2.0 / delta)) / (2.0 * n)) + epsilon * dv + epsilon**2 / 2.0


def lipschitz_for_window(m: int, lam: float, vrange: ValueRange) -> float:
    """Lipschitz constant under which every window-``m`` function is a trace function."""
    if not 0.0 <= lam < 0.5:
        raise ValueError(f"window-to-trace conversion needs lam < 1/2, got {lam}")
    if m < 1:
        raise ValueError("window length must be >= 1")
    return vrange.delta / (SQRT2 * (1.0 - 2.0 * lam) * lam ** (m - 1))


def window_for_trace(lam: float, lipschitz: float, epsilon: float) -> int:
    """Window length whose truncation error on an ``L``-Lipschitz trace function is <= ``epsilon``."""
    if not 0.0 < epsilon < lipschitz:
        raise ValueError(f"need 0 < epsilon < L, got epsilon={epsilon}, L={lipschitz}")
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"forgetting factor must lie in [0, 1), got {lam}")
    if lam == 0.0:
        return 1
    return max(1, math.ceil(math.log(lipschitz / epsilon) / math.log(1.0 / lam) - 1e-12))


def cover_window_length(lam: float, lipschitz: float, epsilon: float) -> int:
    """Length of the traces that ``eps/(2L)``-cover trace space, ``ceil(log(2L/eps)/log(1/lam))_+``."""
    if lam == 0.0:
        return 1
    return max(0, math.ceil(math.log(2.0 * lipschitz / epsilon) / math.log(1.0 / lam) - 1e-12))


@dataclass(frozen=True)
class TMazeConstants:
    lam: float
    lipschitz: float
    m_min: int


def tmaze_constants(k: int) -> TMazeConstants:
    """Forgetting factor ``(k-1)/k``, Lipschitz constant ``sqrt2 e k`` and minimum window ``k``."""
    if k < 1:
        raise ValueError("corridor length must be >= 1")
    return TMazeConstants((k - 1) / k, SQRT2 * math.e * k, k)


TMAZE_LABELS = ("a", "b", "o", "x", "y")


def tmaze_relevant_histories(k: int) -> list[tuple[History, float]]:
    """Reachable T-maze histories under the always-up policy with their values."""
    space = ObservationSpace.one_hot(TMAZE_LABELS)
    out = []
    for c in "ab":
        for i in range(k - 1):
            out.append((History.parse(space, c + "o" * i), 0.0))
    for c, s, v in (("a", "x", 1.0), ("b", "x", -1.0), ("a", "y", -1.0), ("b", "y", 1.0)):
        out.append((History.parse(space, c + "o" * (k - 2) + s), v))
    return out


def tmaze_min_distance(k: int, lam: float | None = None) -> float:
    """Smallest trace distance between reachable T-maze histories with different values."""
    space = ObservationSpace.one_hot(TMAZE_LABELS)
    lam = tmaze_constants(k).lam if lam is None else lam
    rel = tmaze_relevant_histories(k)
    traces = [(trace_of_history(h, lam, space), v) for h, v in rel]
    best = math.inf
    for i in range(len(traces)):
        for j in range(i + 1, len(traces)):
            if traces[i][1] != traces[j][1]:
                best = min(best, traces[i][0].distance(traces[j][0]))
    return best
