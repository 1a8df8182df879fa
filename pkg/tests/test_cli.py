from __future__ import annotations

import json

import pytest

from memtrace.cli import main
from memtrace.runio import (
    SCHEMA_VERSION,
    RunManifest,
    SchemaMismatch,
    concat_csv,
    config_hash,
    read_config,
    read_csv,
    write_csv,
)


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def manifests(root):
    return sorted(root.rglob("manifest.json"))


def test_verify_exit_codes(tmp_path):
    assert run(tmp_path, "verify") == 0
    assert run(tmp_path, "verify", "--lambda", "golden") == 1
    assert run(tmp_path, "verify", "--budget", "100") == 3
    assert run(tmp_path, "verify", "--budget", "0") == 3


def test_verify_accepts_rational_lambda(tmp_path):
    assert run(tmp_path, "verify", "--lambda", "1/3") == 0


def test_usage_errors(tmp_path, capsys):
    assert main(["no-such-command"]) == 2
    assert run(tmp_path, "figure", "fig9") == 2
    assert run(tmp_path, "lambda-star", "--p", "0.1") == 2
    assert run(tmp_path, "entropy", "--epsilon", "0") == 2
    assert main(["--help"]) == 0
    capsys.readouterr()


def test_manifest_is_written_before_results(tmp_path):
    # the trace cover at this precision is too large to enumerate, so the run stops early
    code = run(tmp_path, "eval", "--estimator", "trace", "--k", "3", "--epsilon", "0.2", "--n", "20", "--n-eval", "20")
    assert code == 2
    found = manifests(tmp_path)
    assert len(found) == 1
    assert not (found[0].parent / "eval.json").exists()


def test_eval_writes_results_and_manifest(tmp_path, capsys):
    assert run(tmp_path, "eval", "--estimator", "mcshane", "--k", "4", "--n-eval", "500") == 0
    body = json.loads(capsys.readouterr().out.splitlines()[0])
    assert body["excess_error"] == 0.0
    (m,) = manifests(tmp_path)
    man = json.loads(m.read_text())
    assert man["subcommand"] == "eval" and man["seed"] == 0
    assert man["wall_clock"] is not None
    assert man["outputs"] and all(p.endswith("eval.json") for p in man["outputs"])


def test_entropy_prints_json(tmp_path, capsys):
    assert run(tmp_path, "entropy", "--kind", "trace", "--m", "3", "--lambda", "0.25", "--ysize", "2") == 0
    body = json.loads(capsys.readouterr().out)
    assert body["kind"] == "trace" and len(body["bounds"]) == 2


def test_td_subcommand_with_config_file(tmp_path, capsys):
    cfg = tmp_path / "td.cfg"
    cfg.write_text("# short run\nsteps = 300\neval_points = 100\nreturn_tol = 0.01\n")
    assert main(["td", "--feature", "window", "--m", "2", "--checkpoints", "3", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    capsys.readouterr()
    (m,) = manifests(tmp_path / "o")
    cols, rows = read_csv(m.parent / "curve.csv")
    assert cols == ["schema_version", "config_hash", "seed", "step", "metric"]
    assert [int(r["step"]) for r in rows] == [100, 200, 300]


def test_bad_config_file_is_usage_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("steps 300\n")
    assert main(["td", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_config_hash_stable_under_reordering():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    m1 = RunManifest("td", {"x": 1, "y": 2}, 0)
    m2 = RunManifest("td", {"y": 2, "x": 1}, 0)
    assert m1.config_hash == m2.config_hash
    assert RunManifest("td", {"x": 1}, 1).config_hash != RunManifest("td", {"x": 1}, 0).config_hash


def test_csv_schema_checks(tmp_path):
    a = write_csv(tmp_path / "a.csv", [{"x": 1, "y": 0.5}])
    b = write_csv(tmp_path / "b.csv", [{"x": 2, "y": 1.5}])
    rows = concat_csv([a, b])
    assert [r["x"] for r in rows] == ["1", "2"]
    assert rows[0]["schema_version"] == str(SCHEMA_VERSION)
    c = tmp_path / "c.csv"
    c.write_text(b.read_text().replace(f"\n{SCHEMA_VERSION},", f"\n{SCHEMA_VERSION + 1},"))
    with pytest.raises(SchemaMismatch):
        concat_csv([a, c])
    d = write_csv(tmp_path / "d.csv", [{"x": 1, "z": 0}])
    with pytest.raises(SchemaMismatch):
        concat_csv([a, d])


def test_read_config_table_aliases(tmp_path):
    p = tmp_path / "ppo.cfg"
    p.write_text(
        "Total number of steps = 1,000,000\n"
        "Number of parallel environments = 8\n"
        "Number of steps per update = 128 x 16\n"
        "Learning rate = 0.0003 -> 0\n"
        "Clipping parameter epsilon = 0.2\n"
        "seed = 3\n"
    )
    cfg = read_config(p)
    assert cfg == {
        "total_timesteps": 1_000_000,
        "num_envs": 8,
        "num_steps": 128,
        "learning_rate": 0.0003,
        "anneal_lr": True,
        "clip_coef": 0.2,
        "seed": 3,
    }
