"""Run manifests, versioned CSV files and key-value config files."""

from __future__ import annotations

import ast
import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import __version__

SCHEMA_VERSION = 1


class SchemaMismatch(ValueError):
    pass


def config_hash(config: dict) -> str:
    """Stable under key reordering: the hash of the sorted-key JSON encoding."""
    blob = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int
    outputs: list[str] = field(default_factory=list)
    code_version: str = __version__
    started: float = field(default_factory=time.time)
    wall_clock: float | None = None

    @property
    def config_hash(self) -> str:
        return config_hash({"subcommand": self.subcommand, "seed": self.seed, **self.config})

    def directory(self, root: str | Path) -> Path:
        return Path(root) / self.subcommand / self.config_hash

    def write(self, root: str | Path) -> Path:
        d = self.directory(root)
        d.mkdir(parents=True, exist_ok=True)
        path = d / "manifest.json"
        body = {
            "subcommand": self.subcommand,
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "code_version": self.code_version,
            "outputs": self.outputs,
            "wall_clock": self.wall_clock,
        }
        path.write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")
        return path

    def finish(self, root: str | Path) -> Path:
        self.wall_clock = time.time() - self.started
        return self.write(root)


def write_csv(path: str | Path, rows: Iterable[dict], columns: list[str] | None = None) -> Path:
    """Write dict rows with a leading ``schema_version`` column."""
    rows = list(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = columns or (list(rows[0]) if rows else [])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", *cols])
        for r in rows:
            w.writerow([SCHEMA_VERSION, *(_fmt(r.get(c)) for c in cols)])
    return path


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def read_csv(path: str | Path) -> tuple[list[str], list[dict]]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)


def concat_csv(paths: Iterable[str | Path]) -> list[dict]:
    """Concatenate result files, refusing mixed schema versions or columns."""
    out: list[dict] = []
    version, columns = None, None
    for p in paths:
        cols, rows = read_csv(p)
        versions = {r["schema_version"] for r in rows}
        if len(versions) > 1:
            raise SchemaMismatch(f"{p}: mixed schema versions {sorted(versions)}")
        if columns is not None and cols != columns:
            raise SchemaMismatch(f"{p}: columns {cols} differ from {columns}")
        for v in versions:
            if version is not None and v != version:
                raise SchemaMismatch(f"{p}: schema version {v} differs from {version}")
            version = v
        columns = cols
        out.extend(rows)
    return out


def _value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


# Table-style parameter names accepted in config files
PPO_KEY_ALIASES = {
    "total number of steps": "total_timesteps",
    "number of parallel environments": "num_envs",
    "number of steps per update": "num_steps",
    "learning rate": "learning_rate",
    "generalized advantage estimation lambda": "gae_lambda",
    "gae lambda": "gae_lambda",
    "number of epochs": "update_epochs",
    "number of minibatches": "num_minibatches",
    "clipping parameter epsilon": "clip_coef",
    "clipping parameter": "clip_coef",
    "value loss weight": "vf_coef",
    "entropy coefficient": "ent_coef",
    "maximum gradient norm": "max_grad_norm",
}


def read_config(path: str | Path, aliases: dict[str, str] | None = None) -> dict:
    """Parse ``key = value`` lines (``#`` comments allowed) into a dict.

    Table-style entries are understood: ``"Number of steps per update = 64 x 8"``
    keeps the first factor as the per-environment rollout length, and
    ``"Learning rate = 0.0003 -> 0"`` sets the initial rate with linear decay.
    """
    aliases = PPO_KEY_ALIASES if aliases is None else aliases
    cfg: dict = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line without '=': {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = aliases.get(key.lower(), key.lower().replace(" ", "_").replace("-", "_"))
        if key == "num_steps" and ("x" in val or "×" in val):
            per_env, _ = (int(s) for s in val.replace("×", "x").split("x"))
            cfg[key] = per_env
            continue
        if key == "learning_rate" and ("->" in val or "→" in val):
            start, _ = val.replace("→", "->").split("->")
            cfg[key] = float(start)
            cfg["anneal_lr"] = True
            continue
        cfg[key] = _value(val.replace(",", "")) if key.endswith(("steps", "timesteps")) else _value(val)
    return cfg
