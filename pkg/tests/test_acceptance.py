"""The nine acceptance criteria at their stated scale and tolerances.

Each test prints one ``[PASS]``/``[FAIL]`` line; the lines are collected in
the terminal summary.  Criteria 7 and 8 are the long ones (minutes).
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from memtrace.complexity import entropy_window, hoeffding_bound
from memtrace.environments import make_rng, random_walk_env, tmaze_always_up_policy, tmaze_env
from memtrace.figures import PQ_GRID
from memtrace.offline_eval import (
    WindowClass,
    best_window_error,
    cover_erm,
    exact_return_error,
    mc_return_error,
    pq_heatmap,
    sample_dataset,
    tmaze_mcshane,
    tmaze_outcomes,
    true_value_tmaze,
)
from memtrace.online.mlp import MLP
from memtrace.online.ppo import Batch, PpoConfig, gae, ppo_loss, ppo_train
from memtrace.online.td import td_comparison
from memtrace.verify import (
    INJECTIVE_LAMBDAS,
    check_calculators,
    check_golden_witness,
    check_injectivity,
    check_margins_exhaustive,
    check_margins_random,
    check_scalar_witness,
)


def test_criterion_1_margins(report):
    t0 = time.perf_counter()
    exhaustive = check_margins_exhaustive(8)
    random = check_margins_random(ysizes=(3, 5), n=10_000)
    elapsed = time.perf_counter() - t0
    ok = exhaustive.passed and random.passed and elapsed < 30
    assert report(1, ok, f"{exhaustive.detail}; {random.detail}; {elapsed:.1f}s")


def test_criterion_2_injectivity(report):
    t0 = time.perf_counter()
    checks = [check_injectivity(lam, y, 6) for lam in INJECTIVE_LAMBDAS for y in (2, 3)]
    checks += [check_golden_witness(), check_scalar_witness()]
    elapsed = time.perf_counter() - t0
    failed = [c.name for c in checks if not c.passed]
    ok = not failed and elapsed < 60
    assert report(2, ok, f"{len(checks) - len(failed)}/{len(checks)} checks pass, failed={failed}; {elapsed:.1f}s")


def test_criterion_3_calculators(report):
    res = check_calculators(max_m=10, max_y=5, rel_tol=1e-9)
    assert report(3, res.passed, res.detail)


def test_criterion_4_tmaze_zero_error(report):
    worst = 0.0
    slow = 0.0
    ok = True
    for k in range(2, 13):
        t0 = time.perf_counter()
        f = tmaze_mcshane(k)  # raises if the anchors are incompatible
        env = tmaze_env(k)
        est = mc_return_error(f, env, 10_000, seed=k, policy=tmaze_always_up_policy(), reference=true_value_tmaze(k))
        slow = max(slow, time.perf_counter() - t0)
        ok &= abs(est.mean) <= 3 * est.stderr + 1e-9
        worst = max(worst, abs(est.mean))
    ok &= slow < 60
    assert report(4, ok, f"k=2..12 max |excess error| {worst:.2e}; slowest k {slow:.1f}s")


def test_criterion_5_hoeffding_coverage(report):
    k, m, eps, delta, resamples = 3, 3, 0.1, 0.05, 200
    env = tmaze_env(k)
    vr = env.value_range
    outcomes = tmaze_outcomes(k, env.gamma)
    floor = best_window_error(outcomes, m)
    entropy = entropy_window(m, env.nobs, vr, eps).value
    t0 = time.perf_counter()
    rates = {}
    for n in (10, 100, 1000):
        covered = 0
        for r in range(resamples):
            data = sample_dataset(env, n, seed=1_000_003 * n + r, policy=tmaze_always_up_policy())
            f = cover_erm(data, WindowClass(m), eps, vr)
            excess = exact_return_error(f, outcomes) - floor
            covered += excess <= hoeffding_bound(entropy, n, delta, vr, eps)
        rates[n] = covered / resamples
    elapsed = time.perf_counter() - t0
    ok = all(v >= 0.95 for v in rates.values()) and elapsed < 300
    assert report(5, ok, f"coverage {rates}; {elapsed:.1f}s")


def test_criterion_6_lambda_star_regimes(report):
    t0 = time.perf_counter()
    rows = pq_heatmap(PQ_GRID, PQ_GRID, horizon=4)
    elapsed = time.perf_counter() - t0
    slow_corner = [r["lam_star"] for r in rows if r["p"] <= 0.15 and r["q"] >= 0.35]
    fast_corner = [r["lam_star"] for r in rows if r["p"] >= 0.35 and r["q"] <= 0.15]
    ok = min(slow_corner) >= 0.5 and max(fast_corner) < 0.5 and elapsed < 120
    detail = (
        f"21x21 grid, min lam* at (p<=.15, q>=.35) = {min(slow_corner):.3f}, "
        f"max lam* at (p>=.35, q<=.15) = {max(fast_corner):.3f}; {elapsed:.1f}s"
    )
    assert report(6, ok, detail)


@pytest.mark.slow
def test_criterion_7_td_ordering(report):
    t0 = time.perf_counter()
    res = td_comparison(random_walk_env(), seeds=20, steps=100_000)
    elapsed = time.perf_counter() - t0
    rows = res["summary"]
    traces = [r for r in rows if r["kind"] == "trace"]
    best_trace = min(traces, key=lambda r: r["mean"])
    ok = elapsed < 1800
    parts = [f"trace lam={best_trace['param']} {best_trace['mean']:.4f} [{best_trace['ci_low']:.4f}, {best_trace['ci_high']:.4f}]"]
    for m in (2, 3):
        w = next(r for r in rows if r["kind"] == "window" and r["param"] == m)
        ok &= best_trace["mean"] < w["mean"] and best_trace["ci_high"] < w["ci_low"]
        parts.append(f"window m={m} alpha={w['alpha']:.3g} {w['mean']:.4f} [{w['ci_low']:.4f}, {w['ci_high']:.4f}]")
    assert report(7, ok, "; ".join(parts) + f"; {elapsed:.0f}s")


PPO_STEPS = 2_000_000


@pytest.mark.slow
def test_criterion_8_ppo_memory(report):
    k, seeds = 4, 10
    t0 = time.perf_counter()
    trace, memoryless = [], []
    for s in range(seeds):
        cfg = PpoConfig(memory="trace", lambdas=(0.0, (k - 1) / k), total_timesteps=PPO_STEPS, seed=s)
        trace.append(ppo_train(k, cfg).final_success())
        cfg0 = PpoConfig(memory="trace", lambdas=(0.0,), total_timesteps=PPO_STEPS, seed=s)
        memoryless.append(ppo_train(k, cfg0).final_success())
    elapsed = time.perf_counter() - t0
    ok = np.mean(trace) >= 0.85 and np.mean(memoryless) <= 0.55 and elapsed < 7200
    detail = (
        f"k={k}, {seeds} seeds, {PPO_STEPS:.0e} steps: trace {{0, 3/4}} final success {np.mean(trace):.3f}, "
        f"memoryless {np.mean(memoryless):.3f}; {elapsed:.0f}s"
    )
    assert report(8, ok, detail)


def _rel_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def _central_differences(f, params, eps=1e-6):
    out = []
    for p in params:
        g = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + eps
            hi = f()
            p[i] = old - eps
            lo = f()
            p[i] = old
            g[i] = (hi - lo) / (2 * eps)
        out.append(g)
    return out


def test_criterion_9_numerical_kernels(report):
    rng = make_rng(0)
    net = MLP.build([6, 16, 16, 3], rng)
    x = rng.normal(size=(10, 6))
    dout = rng.normal(size=(10, 3))
    _, cache = net.forward(x)
    grads = net.backward(cache, dout)
    num = _central_differences(lambda: float(np.sum(dout * net.forward(x)[0])), net.params)
    mlp_err = max(_rel_error(g, d) for g, d in zip(grads, num))

    actor = MLP.build([6, 16, 3], rng, out_gain=0.5)
    critic = MLP.build([6, 16, 1], rng)
    n = 32
    b = Batch(rng.normal(size=(n, 6)), rng.integers(0, 3, n), np.log(np.full(n, 1 / 3)) + rng.normal(0, 0.3, n), rng.normal(size=n), rng.normal(size=n))
    cfg = PpoConfig()
    _, lgrads, _ = ppo_loss(actor, critic, b, cfg)
    lnum = _central_differences(lambda: ppo_loss(actor, critic, b, cfg)[0], actor.params + critic.params)
    loss_err = max(_rel_error(g, d) for g, d in zip(lgrads, lnum))

    # episodic rollouts: episodes of random length with a terminal +-1 reward, back to back
    T, N, gamma = 64, 8, 0.99
    rewards = np.zeros((T, N))
    dones = np.zeros((T, N))
    for col in range(N):
        t = 0
        while t < T:
            length = int(rng.integers(2, 9))
            end = min(t + length, T) - 1
            if t + length <= T:
                rewards[end, col] = rng.choice([-1.0, 1.0])
                dones[end, col] = 1.0
            t += length
    values = rng.normal(size=(T, N))
    last = rng.normal(size=N)
    adv, _ = gae(rewards, values, dones, last, gamma, 1.0)
    mc = np.zeros((T, N))
    acc = last.copy()
    for t in reversed(range(T)):
        acc = rewards[t] + gamma * acc * (1 - dones[t])
        mc[t] = acc - values[t]
    gae_err = float(np.max(np.abs(adv - mc)))

    ok = mlp_err < 1e-5 and loss_err < 1e-5 and gae_err < 1e-10
    detail = f"MLP grad rel err {mlp_err:.1e}, PPO loss grad rel err {loss_err:.1e}, GAE(1) vs MC max err {gae_err:.1e}"
    assert report(9, ok, detail)
