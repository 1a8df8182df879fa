"""Cross-product sweeps over seeds with normal-approximation confidence intervals."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable

import numpy as np

Z95 = 1.959963984540054


@dataclass(frozen=True)
class Summary:
    mean: float
    half_width: float
    n: int

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width

    def overlaps(self, other: Summary) -> bool:
        return self.low <= other.high and other.low <= self.high


def summarize(values: Iterable[float]) -> Summary:
    """Mean and 95% normal-approximation half-width over seeds (``inf`` kept as diverged)."""
    x = np.asarray(list(values), dtype=float)
    if x.size == 0:
        raise ValueError("nothing to summarise")
    if not np.all(np.isfinite(x)):
        return Summary(math.inf, math.inf, x.size)
    hw = Z95 * x.std(ddof=1) / math.sqrt(x.size) if x.size > 1 else math.inf
    return Summary(float(x.mean()), float(hw), x.size)


def sweep(
    base,
    axes: dict[str, list],
    seeds: int | Iterable[int],
    run: Callable[[object], float],
) -> tuple[list[dict], list[dict]]:
    """Run ``run(config)`` over the cross product of ``axes`` and seeds.

    ``base`` is a frozen dataclass with a ``seed`` field; each cell is
    ``replace(base, **cell, seed=s)``.  Returns per-run rows and one summary
    row per cell, both in a fixed order.
    """
    if not axes or any(len(v) == 0 for v in axes.values()):
        raise ValueError("every sweep axis needs at least one value")
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    names = sorted(axes)
    runs, summary = [], []
    for values in itertools.product(*(axes[n] for n in names)):
        cell = dict(zip(names, values))
        metrics = []
        for s in seed_list:
            cfg = replace(base, **cell, seed=s)
            m = float(run(cfg))
            metrics.append(m)
            runs.append({**cell, "seed": s, "metric": m})
        st = summarize(metrics)
        summary.append({**cell, "mean": st.mean, "ci_low": st.low, "ci_high": st.high, "n": st.n})
    return runs, summary


def best_cell(summary: list[dict], key: str = "mean") -> dict:
    """Lowest-mean summary row; ties go to the first row."""
    return min(summary, key=lambda r: r[key])
