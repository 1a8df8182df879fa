"""Command-line entry point: ``memtrace <subcommand> [options]``.

Every run writes ``out/<subcommand>/<config_hash>/manifest.json`` before any
result file.  Exit codes: 0 success, 1 check failure, 2 usage error,
3 verification cut short by the budget.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields, replace
from fractions import Fraction

import numpy as np

from .verify import EXIT_OK, EXIT_USAGE, parse_lambda


@dataclass(frozen=True)
class KCell:
    """Sweep cell for PPO runs over the corridor length."""

    k: int = 4
    seed: int = 0


def _lambda_list(text: str) -> list:
    return [parse_lambda(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(parse_lambda(t)) for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="single source of randomness for the run")
    common.add_argument("--out", default="out", help="root output directory")
    common.add_argument("--config", help="key = value file; command-line flags override it")

    p = argparse.ArgumentParser(prog="memtrace", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="run the geometry and complexity checks")
    v.add_argument("--budget", type=int, default=1 << 22, help="max histories per enumeration (0 = none)")
    v.add_argument("--lambda", dest="lam", help="forgetting factor to test for injectivity (e.g. 1/3, golden)")

    e = sub.add_parser("entropy", parents=[common], help="metric entropy quotes")
    e.add_argument("--kind", choices=("window", "trace"), default="window")
    e.add_argument("--m", type=int, default=3)
    e.add_argument("--lambda", dest="lam", type=float, default=0.25)
    e.add_argument("--L", dest="lipschitz", type=float, default=None, help="defaults to the window-to-trace constant")
    e.add_argument("--ysize", type=int, default=2)
    e.add_argument("--epsilon", type=float, default=0.1)
    e.add_argument("--vmin", type=float, default=-1.0)
    e.add_argument("--vmax", type=float, default=1.0)

    t = sub.add_parser("trace-gen", parents=[common], help="export projected trace point clouds")
    t.add_argument("--lambda", dest="lam", type=_lambda_list, default=[0.2, Fraction(1, 3), 0.4])
    t.add_argument("--m", type=int, default=7)
    t.add_argument("--ysize", type=int, choices=(3, 4), default=3)
    t.add_argument("--key-len", type=int, default=1)

    ev = sub.add_parser("eval", parents=[common], help="offline return error of an estimator")
    ev.add_argument("--env", choices=("tmaze", "two_state"), default="tmaze")
    ev.add_argument("--estimator", choices=("window", "trace", "mcshane"), default="window")
    ev.add_argument("--k", type=int, default=3)
    ev.add_argument("--m", type=int, default=3)
    ev.add_argument("--lambda", dest="lam", type=float, default=None)
    ev.add_argument("--L", dest="lipschitz", type=float, default=None)
    ev.add_argument("--epsilon", type=float, default=0.1)
    ev.add_argument("--gamma", type=float, default=0.9)
    ev.add_argument("--p", type=float, default=0.1)
    ev.add_argument("--q", type=float, default=0.2)
    ev.add_argument("--n", type=int, default=1000, help="training trajectories")
    ev.add_argument("--n-eval", type=int, default=10_000, help="Monte Carlo evaluation samples")

    ls = sub.add_parser("lambda-star", parents=[common], help="required Lipschitz constant per lambda")
    ls.add_argument("--p", type=float, required=True)
    ls.add_argument("--q", type=float, required=True)
    ls.add_argument("--horizon", type=int, default=4)
    ls.add_argument("--gamma", type=float, default=0.9)

    pq = sub.add_parser("pq-heatmap", parents=[common], help="lambda* and state posterior over a (p, q) grid")
    pq.add_argument("--grid", type=int, default=21, help="points per axis, at cell centres of [0, 1/2]")
    pq.add_argument("--horizon", type=int, default=4)
    pq.add_argument("--history", default="1110", help="conditioning history, oldest observation first")

    td = sub.add_parser("td", parents=[common], help="TD(0) on the noisy random walk")
    td.add_argument("--feature", choices=("trace", "window", "concat"), default="trace")
    td.add_argument("--lambda", dest="lam", type=float, default=0.0)
    td.add_argument("--m", type=int, default=1)
    td.add_argument("--alpha", type=float, default=0.02)
    td.add_argument("--gamma", type=float, default=0.99)
    td.add_argument("--steps", type=int, default=100_000)
    td.add_argument("--eval-points", type=int, default=5_000)
    td.add_argument("--checkpoints", type=int, default=10)

    pp = sub.add_parser("ppo", parents=[common], help="PPO on the T-maze")
    pp.add_argument("--k", type=int, default=4)
    pp.add_argument("--memory", choices=("trace", "stack"), default="trace")
    pp.add_argument("--lambda", dest="lam", type=_float_list, default=None, help="comma-separated trace set")
    pp.add_argument("--m", type=int, default=None, help="frame-stack length (defaults to k)")
    pp.add_argument("--gamma", type=float, default=0.99)
    pp.add_argument("--steps", type=int, default=2_000_000)

    sw = sub.add_parser("sweep", parents=[common], help="grid sweep over seeds with 95%% intervals")
    sw.add_argument("--what", choices=("td", "ppo"), default="td")
    sw.add_argument("--axis", choices=("alpha", "lambda", "m", "k"), required=True)
    sw.add_argument("--values", required=True, help="comma-separated grid")
    sw.add_argument("--seeds", type=int, default=5)
    sw.add_argument("--feature", choices=("trace", "window", "concat"), default="trace")
    sw.add_argument("--lambda", dest="lam", type=float, default=0.0)
    sw.add_argument("--m", type=int, default=1)
    sw.add_argument("--alpha", type=float, default=0.02)
    sw.add_argument("--k", type=int, default=4)
    sw.add_argument("--gamma", type=float, default=None)
    sw.add_argument("--steps", type=int, default=None)

    fg = sub.add_parser("figure", parents=[common], help="export the CSV data behind a figure")
    fg.add_argument("which", help="fig2, fig4, fig5, fig6 or fig7")
    fg.add_argument("--seeds", type=int, default=None)
    fg.add_argument("--steps", type=int, default=None)
    return p


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _start(args, config: dict):
    from .runio import RunManifest

    manifest = RunManifest(args.command, config, args.seed)
    manifest.write(args.out)
    return manifest, manifest.directory(args.out)


def _done(args, manifest, paths) -> None:
    manifest.outputs = [str(p) for p in paths]
    manifest.finish(args.out)
    for p in paths:
        print(p)


def cmd_verify(args) -> int:
    from .verify import verify_all

    inject = parse_lambda(args.lam) if args.lam else None
    manifest, d = _start(args, {"budget": args.budget, "lambda": args.lam})
    report = verify_all(args.budget, inject)
    lines = report.lines()
    print("\n".join(lines))
    (d / "report.txt").write_text("\n".join(lines) + "\n")
    _done(args, manifest, [])
    return report.exit_code


def cmd_entropy(args) -> int:
    from .complexity import ValueRange, entropy_trace_bounds, entropy_window, lipschitz_for_window

    vr = ValueRange(args.vmin, args.vmax)
    if args.kind == "window":
        q = entropy_window(args.m, args.ysize, vr, args.epsilon)
    else:
        L = args.lipschitz if args.lipschitz is not None else lipschitz_for_window(args.m, args.lam, vr)
        q = entropy_trace_bounds(args.lam, L, args.ysize, vr, args.epsilon)
    body = {
        "kind": q.kind,
        "params": q.params,
        "epsilon": q.epsilon,
        "value": q.value,
        "bounds": q.bounds,
        "log_count": q.log_count,
        "multiplier": q.multiplier,
        "log_space": q.in_log_space,
    }
    print(json.dumps(body, default=str))
    return EXIT_OK


def cmd_trace_gen(args) -> int:
    from .figures import fig_points

    manifest, d = _start(args, {"lambda": [str(l) for l in args.lam], "m": args.m, "ysize": args.ysize, "key_len": args.key_len})
    paths = fig_points(d, args.lam, args.m, args.ysize, args.key_len)
    _done(args, manifest, paths)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .complexity import ValueRange, tmaze_constants
    from .environments import TwoStateParams, tmaze_always_up_policy, tmaze_env, two_state_hmm
    from .offline_eval import (
        TraceCoverClass,
        WindowClass,
        cover_erm,
        mc_return_error,
        sample_dataset,
        tmaze_mcshane,
        true_value_tmaze,
    )

    config = {k: v for k, v in vars(args).items() if k not in ("func", "out", "config", "command")}
    manifest, d = _start(args, config)
    if args.env == "tmaze":
        env, policy = tmaze_env(args.k, args.gamma), tmaze_always_up_policy()
    else:
        env, policy = two_state_hmm(TwoStateParams(args.p, args.q), args.gamma), None
    reference = true_value_tmaze(args.k, args.gamma) if args.env == "tmaze" else None
    if args.estimator == "mcshane":
        if args.env != "tmaze":
            raise SystemExit("the McShane construction is defined for the T-maze")
        f = tmaze_mcshane(args.k)
    else:
        vr = env.value_range
        data = sample_dataset(env, args.n, args.seed, policy, horizon=None if env.episodic else 1, burn_in=0 if env.episodic else 100)
        if args.estimator == "window":
            cls = WindowClass(args.m)
        else:
            lam = args.lam if args.lam is not None else (tmaze_constants(args.k).lam if args.env == "tmaze" else 0.5)
            L = args.lipschitz if args.lipschitz is not None else (tmaze_constants(args.k).lipschitz if args.env == "tmaze" else 1.0)
            cls = TraceCoverClass(lam, L, env.space)
        f = cover_erm(data, cls, args.epsilon, ValueRange(vr.vmin, vr.vmax))
    est = mc_return_error(f, env, args.n_eval, args.seed + 1, policy)
    body = {"error": est.mean, "stderr": est.stderr, "n": est.n}
    if reference is not None:
        ex = mc_return_error(f, env, args.n_eval, args.seed + 1, policy, reference=reference)
        body.update({"excess_error": ex.mean, "excess_stderr": ex.stderr})
    print(json.dumps(body))
    path = d / "eval.json"
    path.write_text(json.dumps(body) + "\n")
    _done(args, manifest, [path])
    return EXIT_OK


def cmd_lambda_star(args) -> int:
    from .environments import TwoStateParams
    from .offline_eval import lambda_star
    from .runio import write_csv

    manifest, d = _start(args, {"p": args.p, "q": args.q, "horizon": args.horizon, "gamma": args.gamma})
    res = lambda_star(TwoStateParams(args.p, args.q), args.horizon, gamma=args.gamma)
    rows = [{"lambda": float(l), "required_L": float(r)} for l, r in zip(res.grid, res.required)]
    path = write_csv(d / "lambda_star.csv", rows, ["lambda", "required_L"])
    print(f"lambda_star={res.lam_star}")
    _done(args, manifest, [path])
    return EXIT_OK


def cmd_pq_heatmap(args) -> int:
    from .figures import fig4
    from .trace_core import History

    cond = History.chronological(int(c) for c in args.history)
    grid = (np.arange(args.grid) + 0.5) / (2 * args.grid)
    manifest, d = _start(args, {"grid": args.grid, "horizon": args.horizon, "history": args.history})
    paths = fig4(d, grid, args.horizon, cond)
    _done(args, manifest, paths)
    return EXIT_OK


def _td_config(args, file_cfg: dict):
    from .online.td import TdConfig

    base = dict(
        feature=args.feature, lam=args.lam, m=args.m, alpha=args.alpha, gamma=args.gamma,
        steps=args.steps, eval_points=args.eval_points, checkpoints=args.checkpoints, seed=args.seed,
    )
    names = {f.name for f in fields(TdConfig)}
    base.update({k: v for k, v in file_cfg.items() if k in names})
    return TdConfig(**base)


def cmd_td(args, file_cfg: dict) -> int:
    from .environments import random_walk_env
    from .online.td import td_run
    from .runio import write_csv

    cfg = _td_config(args, file_cfg)
    manifest, d = _start(args, cfg.to_dict())
    curve, w = td_run(random_walk_env(cfg.gamma), cfg)
    path = write_csv(d / "curve.csv", curve.rows(), ["config_hash", "seed", "step", "metric"])
    np.savetxt(d / "weights.txt", w)
    _done(args, manifest, [path, d / "weights.txt"])
    return EXIT_OK


def _ppo_config(args, file_cfg: dict, k: int):
    from .online.ppo import PpoConfig

    lambdas = tuple(args.lam) if args.lam else (0.0, (k - 1) / k)
    base = dict(memory=args.memory, lambdas=lambdas, stack=args.m or k, gamma=args.gamma, total_timesteps=args.steps, seed=args.seed)
    names = {f.name for f in fields(PpoConfig)}
    base.update({kk: v for kk, v in file_cfg.items() if kk in names})
    return PpoConfig(**base)


def cmd_ppo(args, file_cfg: dict) -> int:
    from .online.ppo import ppo_train
    from .runio import write_csv

    cfg = _ppo_config(args, file_cfg, args.k)
    manifest, d = _start(args, {"k": args.k, **cfg.to_dict()})
    res = ppo_train(args.k, cfg)
    curve = write_csv(d / "curve.csv", res.curve.rows(), ["config_hash", "seed", "step", "metric"])
    eps = write_csv(
        d / "episodes.csv",
        [{"episode": i + 1, "env_step": int(s), "success": int(v), "length": int(n)}
         for i, (s, v, n) in enumerate(zip(res.episode_steps, res.episode_success, res.episode_length))],
        ["episode", "env_step", "success", "length"],
    )
    print(f"final_success={res.final_success():.4f}")
    _done(args, manifest, [curve, eps])
    return EXIT_OK


def cmd_sweep(args, file_cfg: dict) -> int:
    from .environments import random_walk_env
    from .online.sweep import sweep
    from .runio import write_csv

    field_of = {"alpha": "alpha", "lambda": "lam", "m": "m", "k": "k"}
    values = _int_list(args.values) if args.axis in ("m", "k") else _float_list(args.values)
    if args.what == "td":
        if args.axis == "k":
            raise SystemExit("the k axis applies to PPO sweeps")
        from .online.td import td_run

        args.gamma = 0.99 if args.gamma is None else args.gamma
        args.steps = 100_000 if args.steps is None else args.steps
        args.eval_points, args.checkpoints = 5_000, 1
        base = _td_config(args, file_cfg)
        env = random_walk_env(base.gamma)
        axis = {field_of[args.axis]: values}
        runner = lambda cfg: td_run(env, cfg)[0].final  # noqa: E731
    else:
        from .online.ppo import ppo_train

        args.gamma = 0.99 if args.gamma is None else args.gamma
        args.steps = 2_000_000 if args.steps is None else args.steps
        args.memory, args.m = "trace", None
        if args.axis != "k":
            raise SystemExit("PPO sweeps run over the k axis")
        base, axis = KCell(), {"k": values}

        def runner(cell):
            cfg = replace(_ppo_config(args, file_cfg, cell.k), seed=cell.seed)
            return ppo_train(cell.k, cfg).final_success()

    config = {"what": args.what, "axis": args.axis, "values": values, "seeds": args.seeds, "base": str(base)}
    manifest, d = _start(args, config)
    runs, summary = sweep(base, axis, range(args.seed, args.seed + args.seeds), runner)
    cols = list(axis) + ["seed", "metric"]
    p1 = write_csv(d / "runs.csv", runs, cols)
    p2 = write_csv(d / "summary.csv", summary, list(axis) + ["mean", "ci_low", "ci_high", "n"])
    _done(args, manifest, [p1, p2])
    return EXIT_OK


def cmd_figure(args) -> int:
    from .figures import FIGURES, figure_data

    if args.which not in FIGURES:
        print(f"unknown figure id {args.which!r}; choose from {', '.join(FIGURES)}", file=sys.stderr)
        return EXIT_USAGE
    params: dict = {}
    if args.which in ("fig5", "fig6"):
        params["seed"] = args.seed
        if args.seeds is not None:
            params["seeds"] = args.seeds
        if args.steps is not None:
            params["steps"] = args.steps
    manifest, d = _start(args, {"which": args.which, **params})
    paths = figure_data(args.which, d, **params)
    _done(args, manifest, paths)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    file_cfg: dict = {}
    if args.config:
        from .runio import read_config

        try:
            file_cfg = read_config(args.config)
        except (OSError, ValueError) as exc:
            print(f"bad config: {exc}", file=sys.stderr)
            return EXIT_USAGE
    handlers = {
        "verify": cmd_verify,
        "entropy": cmd_entropy,
        "trace-gen": cmd_trace_gen,
        "eval": cmd_eval,
        "lambda-star": cmd_lambda_star,
        "pq-heatmap": cmd_pq_heatmap,
        "figure": cmd_figure,
    }
    try:
        if args.command in ("td", "ppo", "sweep"):
            return {"td": cmd_td, "ppo": cmd_ppo, "sweep": cmd_sweep}[args.command](args, file_cfg)
        return handlers[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

