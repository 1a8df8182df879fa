from __future__ import annotations

from fractions import Fraction

import pytest

from memtrace.figures import PQ_GRID, figure_data
from memtrace.runio import read_csv


def test_pq_grid_avoids_uninformative_column():
    assert len(PQ_GRID) == 21
    assert PQ_GRID.min() > 0 and PQ_GRID.max() < 0.5


def test_point_cloud_exports(tmp_path):
    paths = figure_data("fig2", tmp_path, lambdas=(0.2, Fraction(1, 3)), m=3)
    assert [p.name for p in paths] == ["points_y3_m3_lam0.2.csv", "points_y3_m3_lam1_3.csv"]
    cols, rows = read_csv(paths[0])
    assert cols == ["proj_1", "proj_2", "window_key"]
    assert len(rows) == 27
    (p7,) = figure_data("fig7", tmp_path, m=2)
    cols, rows = read_csv(p7)
    assert cols == ["proj_1", "proj_2", "proj_3", "window_key"] and len(rows) == 16


def test_heatmap_export(tmp_path):
    (path,) = figure_data("fig4", tmp_path, grid=[0.1, 0.4], horizon=3)
    cols, rows = read_csv(path)
    assert cols == ["schema_version", "p", "q", "lam_star", "posterior", "map_state"]
    assert len(rows) == 4


def test_td_export_small(tmp_path):
    (path,) = figure_data(
        "fig5", tmp_path, seeds=2, steps=300, oracle_samples=400,
        lambdas=(0.0, 0.5), windows=(1,), concat=(1,), alphas=(0.01, 0.1), eval_points=200, return_tol=1e-2,
    )
    cols, rows = read_csv(path)
    assert cols[-1] == "oracle"
    assert {(r["kind"], r["param"]) for r in rows} == {("trace", "0.0"), ("trace", "0.5"), ("window", "1"), ("concat", "1")}


def test_unknown_figure(tmp_path):
    with pytest.raises(ValueError):
        figure_data("fig3", tmp_path)
