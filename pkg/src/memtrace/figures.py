"""CSV exports behind each figure; plotting is left to external tools.

Schemas (every file also starts with a ``schema_version`` column):

* ``fig2`` / ``fig7``: ``proj_1 .. proj_{|Y|-1}, window_key`` per point cloud
* ``fig4``: ``p, q, lam_star, posterior, map_state``
* ``fig5``: ``kind, param, alpha, mean, ci_low, ci_high, n, oracle``
* ``fig6``: ``memory, k, seed, episode, success_rate``
"""

from __future__ import annotations

from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .geometry import fractal_points, write_points_csv
from .runio import write_csv

FIGURES = ("fig2", "fig4", "fig5", "fig6", "fig7")
PQ_GRID = (np.arange(21) + 0.5) / 42


def _lam_tag(lam) -> str:
    return str(lam).replace("/", "_")


def fig_points(out: Path, lambdas, m: int, ysize: int, key_len: int = 1) -> list[Path]:
    paths = []
    for lam in lambdas:
        coords, keys = fractal_points(m, float(lam), ysize, key_len)
        paths.append(write_points_csv(out / f"points_y{ysize}_m{m}_lam{_lam_tag(lam)}.csv", coords, keys))
    return paths


def fig4(out: Path, grid=PQ_GRID, horizon: int = 4, cond_history=(0, 1, 1, 1)) -> list[Path]:
    from .offline_eval import pq_heatmap

    rows = pq_heatmap(grid, grid, horizon, cond_history)
    return [write_csv(out / "pq_heatmap.csv", rows, ["p", "q", "lam_star", "posterior", "map_state"])]


def fig5(out: Path, seeds: int = 20, steps: int = 100_000, oracle_samples: int = 200_000, seed: int = 0, **kw) -> list[Path]:
    from .environments import random_walk_env
    from .online.td import best_return_error, td_comparison

    env = random_walk_env()
    res = td_comparison(env, seeds, steps=steps, **kw)
    rows = []
    for r in res["summary"]:
        oracle = best_return_error(env, r["kind"], r["param"], oracle_samples, seed + 10_000)
        rows.append({**r, "oracle": oracle})
    cols = ["kind", "param", "alpha", "mean", "ci_low", "ci_high", "n", "oracle"]
    return [write_csv(out / "td_return_errors.csv", rows, cols)]


def fig6(out: Path, ks=(2, 4), seeds: int = 3, steps: int = 1_000_000, seed: int = 0) -> list[Path]:
    from .online.ppo import PpoConfig, ppo_train

    rows = []
    for k in ks:
        lam_k = (k - 1) / k
        memories = {
            "trace_0": PpoConfig(lambdas=(0.0,), total_timesteps=steps),
            "trace_0_lamk": PpoConfig(lambdas=(0.0, lam_k), total_timesteps=steps),
            "stack_k": PpoConfig(memory="stack", stack=k, total_timesteps=steps),
        }
        for name, cfg in memories.items():
            for s in range(seeds):
                res = ppo_train(k, replace(cfg, seed=seed + s))
                for i, v in zip(res.curve.index, res.curve.metric):
                    rows.append({"memory": name, "k": k, "seed": seed + s, "episode": int(i), "success_rate": float(v)})
    return [write_csv(out / "ppo_success.csv", rows, ["memory", "k", "seed", "episode", "success_rate"])]


def figure_data(which: str, out: str | Path, **params) -> list[Path]:
    """Write the CSV files for one figure id into ``out``."""
    out = Path(out)
    if which == "fig2":
        lambdas = params.get("lambdas", (0.2, Fraction(1, 3), 0.4))
        return fig_points(out, lambdas, params.get("m", 7), 3, params.get("key_len", 1))
    if which == "fig7":
        return fig_points(out, params.get("lambdas", (0.3,)), params.get("m", 6), 4, params.get("key_len", 1))
    if which == "fig4":
        return fig4(out, **params)
    if which == "fig5":
        return fig5(out, **params)
    if which == "fig6":
        return fig6(out, **params)
    raise ValueError(f"unknown figure id {which!r}; choose from {FIGURES}")
