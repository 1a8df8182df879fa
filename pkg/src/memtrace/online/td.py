"""TD(0) prediction with trace, full-window and concatenated-window features.

All runs on the random walk share one observation/reward stream per seed:
``train`` drives the updates and a separate held-out ``eval`` stream measures
the return error of the final (or checkpointed) weights against Monte Carlo
returns.  Several step sizes or forgetting factors are learned side by side
as rows of one weight matrix; each row sees exactly the update it would see
in a stand-alone run.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import lfilter

from ..environments import PomdpSpec, RandomWalkSpec, make_rng
from ..offline_eval import discounted_returns, return_horizon
from ..trace_core import DEFAULT_CAP, check_cap

FEATURE_KINDS = ("trace", "window", "concat")
ALPHA_GRID = np.logspace(-4, 0, 13)
TRACE_ALPHA = 0.02
RIDGE = 1e-8


@dataclass(frozen=True)
class TdConfig:
    feature: str = "trace"
    lam: float = 0.0
    m: int = 1
    alpha: float = TRACE_ALPHA
    gamma: float = 0.99
    steps: int = 100_000
    burn_in: int = 100
    eval_points: int = 5_000
    checkpoints: int = 1
    return_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.feature not in FEATURE_KINDS:
            raise ValueError(f"feature must be one of {FEATURE_KINDS}, got {self.feature!r}")
        if not self.alpha > 0:
            raise ValueError("step size must be > 0")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError("forgetting factor must lie in [0, 1)")
        if self.m < 1 or self.steps < 1 or self.checkpoints < 1:
            raise ValueError("m, steps and checkpoints must be >= 1")
        if self.burn_in < self.m - 1:
            raise ValueError("burn-in must cover the first window")

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        return config_hash(self.to_dict())


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass
class LearningCurve:
    index: np.ndarray
    metric: np.ndarray
    seed: int
    config_hash: str
    name: str = "return_error"

    def __post_init__(self) -> None:
        self.index = np.asarray(self.index)
        self.metric = np.asarray(self.metric, dtype=float)
        if len(self.index) != len(self.metric):
            raise ValueError("index and metric must align")
        if np.any(np.diff(self.index) <= 0):
            raise ValueError("curve index must be increasing")

    @property
    def final(self) -> float:
        return float(self.metric[-1])

    def rows(self) -> list[dict]:
        return [
            {"config_hash": self.config_hash, "seed": self.seed, "step": int(i), "metric": float(v)}
            for i, v in zip(self.index, self.metric)
        ]


# ---------------------------------------------------------------------------
# streams and features
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Stream:
    obs: np.ndarray
    rewards: np.ndarray
    start: int  # first usable time (after burn-in)
    stop: int  # one past the last time with a reliable return

    @property
    def returns(self) -> np.ndarray:
        return self._returns

    def with_returns(self, gamma: float) -> Stream:
        object.__setattr__(self, "_returns", discounted_returns(self.rewards, gamma))
        return self


def sample_stream(env: PomdpSpec, length: int, seed: int, burn_in: int, tail: int) -> Stream:
    """Observation/reward stream of ``burn_in + length + tail`` steps."""
    rng = make_rng(seed)
    total = burn_in + length + tail
    if isinstance(env, RandomWalkSpec):
        _, obs, rew = env.simulate(total, rng)
    else:
        from ..offline_eval import sample_continuing_batch

        obs, rew = sample_continuing_batch(env, 1, total, seed)
        obs, rew = obs[0], rew[0]
    return Stream(np.asarray(obs, dtype=np.int64), rew, burn_in, burn_in + length).with_returns(env.gamma)


def streams_for_seed(env: PomdpSpec, seed: int, steps: int, eval_points: int, burn_in: int, tol: float):
    """Independent training and held-out evaluation streams for one seed."""
    tail = return_horizon(env.gamma, env.value_range.delta, tol)
    train = sample_stream(env, steps + 1, 2 * seed, burn_in, 0)
    held = sample_stream(env, eval_points, 2 * seed + 1, burn_in, tail)
    return train, held


def trace_features(obs: np.ndarray, lam: float, ysize: int) -> np.ndarray:
    """Traces at every time of a stream (starting from the zero trace)."""
    onehot = np.zeros((len(obs), ysize))
    onehot[np.arange(len(obs)), obs] = 1.0
    return lfilter([1.0 - lam], [1.0, -lam], onehot, axis=0)


def window_index(obs: np.ndarray, m: int, ysize: int) -> np.ndarray:
    """Tabular index of the length-``m`` window at each time ``t >= m - 1`` (``-1`` before)."""
    idx = np.zeros(len(obs), dtype=np.int64)
    for j in range(m):
        shifted = np.full(len(obs), 0, dtype=np.int64)
        shifted[j:] = obs[: len(obs) - j]
        idx += shifted * ysize**j
    idx[: m - 1] = -1
    return idx


def concat_index(obs: np.ndarray, m: int, ysize: int) -> np.ndarray:
    """Active coordinates of the concatenated one-hot window, shape ``(T, m)``."""
    out = np.full((len(obs), m), -1, dtype=np.int64)
    for j in range(m):
        out[j:, j] = j * ysize + obs[: len(obs) - j]
    return out


def feature_size(kind: str, m: int, ysize: int, cap: int = DEFAULT_CAP) -> int:
    if kind == "trace":
        return ysize
    if kind == "window":
        return check_cap(ysize, m, cap)
    return m * ysize


# ---------------------------------------------------------------------------
# TD(0) kernels
# ---------------------------------------------------------------------------


def _schedule(steps: int, checkpoints: int) -> list[int]:
    return sorted({max(1, round(steps * (i + 1) / checkpoints)) for i in range(checkpoints)})


def td_sparse(idx: np.ndarray, rewards: np.ndarray, start: int, steps: int, alphas: np.ndarray, d: int, gamma: float, checkpoints=()):
    """TD(0) with binary features given by active indices ``idx[t]`` (shape ``(T, s)``).

    Rows of the returned weight matrix correspond to ``alphas``.  Snapshots
    are taken after the listed update counts.
    """
    alphas = np.asarray(alphas, dtype=float)
    W = np.zeros((len(alphas), d))
    snaps = {}
    want = set(checkpoints)
    idx = np.asarray(idx)
    if idx.ndim == 1:
        idx = idx[:, None]
    rows = idx.tolist()
    with np.errstate(all="ignore"):
        for n in range(steps):
            t = start + n
            cur, nxt = rows[t], rows[t + 1]
            v = W[:, cur].sum(axis=1)
            v1 = W[:, nxt].sum(axis=1)
            delta = rewards[t] + gamma * v1 - v
            W[:, cur] += (alphas * delta)[:, None]
            if n + 1 in want:
                snaps[n + 1] = W.copy()
    return W, snaps


def td_dense(phi: np.ndarray, rewards: np.ndarray, start: int, steps: int, alphas: np.ndarray, gamma: float, checkpoints=()):
    """TD(0) with dense features; ``phi`` has shape ``(C, T, d)``, one feature stream per row."""
    alphas = np.asarray(alphas, dtype=float)
    C, _, d = phi.shape
    W = np.zeros((C, d))
    snaps = {}
    want = set(checkpoints)
    with np.errstate(all="ignore"):
        for n in range(steps):
            t = start + n
            x = phi[:, t]
            v = (W * x).sum(axis=1)
            v1 = (W * phi[:, t + 1]).sum(axis=1)
            delta = rewards[t] + gamma * v1 - v
            W += (alphas * delta)[:, None] * x
            if n + 1 in want:
                snaps[n + 1] = W.copy()
    return W, snaps


def _eval_sparse(W: np.ndarray, idx: np.ndarray, held: Stream) -> np.ndarray:
    idx = np.asarray(idx)
    if idx.ndim == 1:
        idx = idx[:, None]
    sl = slice(held.start, held.stop)
    with np.errstate(all="ignore"):
        preds = W[:, idx[sl]].sum(axis=2)
        err = 0.5 * np.mean((preds - held.returns[sl]) ** 2, axis=1)
    return np.where(np.isfinite(err), err, np.inf)


def _eval_dense(W: np.ndarray, phi: np.ndarray, held: Stream) -> np.ndarray:
    sl = slice(held.start, held.stop)
    with np.errstate(all="ignore"):
        preds = np.einsum("cd,ctd->ct", W, phi[:, sl])
        err = 0.5 * np.mean((preds - held.returns[sl]) ** 2, axis=1)
    return np.where(np.isfinite(err), err, np.inf)


def _features(kind: str, obs: np.ndarray, param, ysize: int):
    if kind == "trace":
        return trace_features(obs, float(param), ysize)
    if kind == "window":
        return window_index(obs, int(param), ysize)
    return concat_index(obs, int(param), ysize)


def td_grid(
    env: PomdpSpec,
    kind: str,
    params: list,
    alphas: list[float],
    seed: int,
    *,
    steps: int = 100_000,
    burn_in: int = 100,
    eval_points: int = 5_000,
    checkpoints: int = 1,
    return_tol: float = 1e-4,
    streams=None,
    cap: int = DEFAULT_CAP,
) -> np.ndarray:
    """Return errors for every ``(param, alpha)`` cell at each checkpoint.

    ``params`` are forgetting factors for traces and window lengths
    otherwise.  Result shape: ``(len(params), len(alphas), n_checkpoints)``.
    Diverged runs report ``inf``.
    """
    if kind not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {kind!r}")
    ysize = env.nobs
    train, held = streams or streams_for_seed(env, seed, steps, eval_points, burn_in, return_tol)
    sched = _schedule(steps, checkpoints)
    out = np.zeros((len(params), len(alphas), len(sched)))
    if kind == "trace":
        phi = np.stack([trace_features(train.obs, float(l), ysize) for l in params for _ in alphas])
        phi_h = np.stack([trace_features(held.obs, float(l), ysize) for l in params for _ in alphas])
        al = np.tile(np.asarray(alphas, dtype=float), len(params))
        _, snaps = td_dense(phi, train.rewards, train.start, steps, al, env.gamma, sched)
        for c, s in enumerate(sched):
            out[:, :, c] = _eval_dense(snaps[s], phi_h, held).reshape(len(params), len(alphas))
        return out
    for p, m in enumerate(params):
        d = feature_size(kind, int(m), ysize, cap)
        idx = _features(kind, train.obs, m, ysize)
        idx_h = _features(kind, held.obs, m, ysize)
        _, snaps = td_sparse(idx, train.rewards, train.start, steps, np.asarray(alphas, float), d, env.gamma, sched)
        for c, s in enumerate(sched):
            out[p, :, c] = _eval_sparse(snaps[s], idx_h, held)
    return out


def td_run(env: PomdpSpec, cfg: TdConfig) -> tuple[LearningCurve, np.ndarray]:
    """One TD(0) run; returns the return-error curve at the checkpoints and the final weights."""
    if env.nactions != 1:
        raise ValueError("TD prediction needs a fixed-policy (single-action) environment")
    ysize = env.nobs
    train, held = streams_for_seed(env, cfg.seed, cfg.steps, cfg.eval_points, cfg.burn_in, cfg.return_tol)
    sched = _schedule(cfg.steps, cfg.checkpoints)
    alphas = np.array([cfg.alpha])
    if cfg.feature == "trace":
        phi = trace_features(train.obs, cfg.lam, ysize)[None]
        phi_h = trace_features(held.obs, cfg.lam, ysize)[None]
        W, snaps = td_dense(phi, train.rewards, train.start, cfg.steps, alphas, env.gamma, sched)
        errs = [float(_eval_dense(snaps[s], phi_h, held)[0]) for s in sched]
    else:
        d = feature_size(cfg.feature, cfg.m, ysize)
        idx = _features(cfg.feature, train.obs, cfg.m, ysize)
        idx_h = _features(cfg.feature, held.obs, cfg.m, ysize)
        W, snaps = td_sparse(idx, train.rewards, train.start, cfg.steps, alphas, d, env.gamma, sched)
        errs = [float(_eval_sparse(snaps[s], idx_h, held)[0]) for s in sched]
    return LearningCurve(np.array(sched), np.array(errs), cfg.seed, cfg.config_hash()), W[0]


# ---------------------------------------------------------------------------
# oracle errors
# ---------------------------------------------------------------------------


def least_squares(X: np.ndarray, y: np.ndarray, ridge: float = RIDGE) -> np.ndarray:
    """Ordinary least squares, falling back to ridge when the normal matrix is singular."""
    A = X.T @ X
    b = X.T @ y
    if np.linalg.matrix_rank(A) < A.shape[0]:
        A = A + ridge * np.eye(A.shape[0])
    return np.linalg.solve(A, b)


def best_return_error(
    env: PomdpSpec,
    kind: str,
    param,
    n_samples: int,
    seed: int,
    *,
    burn_in: int = 100,
    return_tol: float = 1e-4,
    cap: int = DEFAULT_CAP,
) -> float:
    """Best achievable return error of a feature class, fitted on one half and scored on the other.

    Windows use the per-key conditional mean of the sampled returns (unseen
    keys fall back to the overall mean); trace and concatenated features use
    least squares.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    ysize = env.nobs
    tail = return_horizon(env.gamma, env.value_range.delta, return_tol)
    s = sample_stream(env, n_samples, seed, burn_in, tail)
    sl = np.arange(s.start, s.stop)
    fit, test = sl[: n_samples // 2], sl[n_samples // 2 :]
    G = s.returns
    if kind == "window":
        check_cap(ysize, int(param), cap)
        key = window_index(s.obs, int(param), ysize)
        sums = np.bincount(key[fit], weights=G[fit], minlength=ysize ** int(param))
        counts = np.bincount(key[fit], minlength=ysize ** int(param))
        table = np.where(counts > 0, sums / np.maximum(counts, 1), G[fit].mean())
        preds = table[key[test]]
    else:
        if kind == "trace":
            X = trace_features(s.obs, float(param), ysize)
        elif kind == "concat":
            X = np.zeros((len(s.obs), int(param) * ysize))
            ci = concat_index(s.obs, int(param), ysize)
            for j in range(int(param)):
                ok = ci[:, j] >= 0
                X[np.flatnonzero(ok), ci[ok, j]] = 1.0
        else:
            raise ValueError(f"unknown feature kind {kind!r}")
        w = least_squares(X[fit], G[fit])
        preds = X[test] @ w
    return float(0.5 * np.mean((preds - G[test]) ** 2))


def return_error_floor(env: PomdpSpec, n: int, seed: int, burn_in: int = 100, return_tol: float = 1e-4) -> float:
    """Half the variance of the return around its overall mean (the constant-predictor error)."""
    tail = return_horizon(env.gamma, env.value_range.delta, return_tol)
    s = sample_stream(env, n, seed, burn_in, tail)
    G = s.returns[s.start : s.stop]
    return float(0.5 * G.var())


TRACE_LAMBDAS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95)
COMPARISON_EVAL_POINTS = 200_000


def td_comparison(
    env: PomdpSpec,
    seeds: int,
    *,
    steps: int = 100_000,
    lambdas=TRACE_LAMBDAS,
    windows=(1, 2, 3),
    concat=(1, 2, 3),
    alphas=ALPHA_GRID,
    trace_alpha: float = TRACE_ALPHA,
    eval_points: int = COMPARISON_EVAL_POINTS,
    burn_in: int = 100,
    return_tol: float = 1e-4,
) -> dict:
    """Final return errors for the trace / window / concatenated-window comparison.

    Traces use the fixed step size; window lengths use the step size with
    the lowest mean error over seeds.  Returns per-seed error arrays keyed by
    ``(kind, param)`` (``"errors"``) and one summary row per cell
    (``"summary"``) carrying the chosen step size.
    """
    from .sweep import summarize

    alphas = [float(a) for a in alphas]
    errs: dict = {}
    for s in range(seeds):
        st = streams_for_seed(env, s, steps, eval_points, burn_in, return_tol)
        kw = dict(steps=steps, burn_in=burn_in, eval_points=eval_points, return_tol=return_tol, streams=st)
        tr = td_grid(env, "trace", list(lambdas), [trace_alpha], s, **kw)
        for i, lam in enumerate(lambdas):
            errs.setdefault(("trace", float(lam)), []).append(tr[i, :, -1])
        for kind, ms in (("window", windows), ("concat", concat)):
            if ms:
                g = td_grid(env, kind, [int(m) for m in ms], alphas, s, **kw)
                for i, m in enumerate(ms):
                    errs.setdefault((kind, int(m)), []).append(g[i, :, -1])
    summary = []
    for (kind, param), rows in errs.items():
        arr = np.array(rows)
        grid = [trace_alpha] if kind == "trace" else alphas
        with np.errstate(invalid="ignore"):
            means = np.where(np.all(np.isfinite(arr), axis=0), arr.mean(axis=0), np.inf)
        best = int(np.argmin(means))
        st = summarize(arr[:, best])
        summary.append(
            {"kind": kind, "param": param, "alpha": grid[best], "mean": st.mean, "ci_low": st.low, "ci_high": st.high, "n": st.n}
        )
        errs[(kind, param)] = arr[:, best]
    return {"errors": errs, "summary": summary}
