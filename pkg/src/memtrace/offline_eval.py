"""Offline on-policy evaluation with window and trace features.

Estimators are plain callables on :class:`~memtrace.trace_core.History`.
The cover-based ERM and Lipschitz-extension constructions follow the
covering arguments for the window class and the Lipschitz trace class; the
two-state HMM helpers compute exact filtering posteriors, values and the
forgetting factor that minimises the Lipschitz constant needed for a
zero-error fit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .complexity import (
    ValueRange,
    cover_window_length,
    value_grid,
)
from .environments import (
    PomdpSpec,
    Policy,
    TwoStateParams,
    make_rng,
    sample_trajectory,
    trajectory_seed,
)
from .trace_core import (
    DEFAULT_CAP,
    History,
    MemoryTrace,
    ObservationSpace,
    check_cap,
    enumerate_histories,
    trace_of_history,
    traces_of_histories,
    window_of_history,
)

# ---------------------------------------------------------------------------
# datasets and returns
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    trajectories: list
    gamma: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.trajectories:
            raise ValueError("a dataset needs at least one trajectory")

    def __len__(self) -> int:
        return len(self.trajectories)

    def split(self, parts: int = 2) -> list[Dataset]:
        size = len(self) // parts
        return [
            Dataset(self.trajectories[i * size : (i + 1) * size], self.gamma, dict(self.provenance))
            for i in range(parts)
        ]

    def save_jsonl(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            fh.write(json.dumps({"gamma": self.gamma, "provenance": self.provenance}) + "\n")
            for traj in self.trajectories:
                fh.write(traj.to_json() + "\n")
        return path

    @classmethod
    def load_jsonl(cls, path: str | Path) -> Dataset:
        from .environments import Trajectory

        lines = Path(path).read_text().splitlines()
        head = json.loads(lines[0])
        return cls([Trajectory.from_json(l) for l in lines[1:] if l.strip()], head["gamma"], head["provenance"])


def sample_dataset(
    env: PomdpSpec,
    n: int,
    seed: int,
    policy: Policy = None,
    *,
    origin: str = "uniform",
    horizon: int | None = None,
    burn_in: int = 0,
) -> Dataset:
    """Draw ``n`` independent trajectories; trajectory ``i`` uses seed ``seed ^ i``.

    For episodic environments ``origin="uniform"`` picks the "current" time
    uniformly within each episode (drawn from the trajectory's own stream), so
    histories at every depth of the episode appear in the data.
    """
    trajs = []
    for i in range(n):
        s = trajectory_seed(seed, i)
        traj = sample_trajectory(env, policy, horizon, s, burn_in)
        if env.episodic and origin == "uniform":
            traj.origin = int(make_rng(s + (1 << 40)).integers(len(traj)))
        trajs.append(traj)
    return Dataset(trajs, env.gamma, {"env": env.name, "params": env.params, "seed": seed, "origin": origin})


def return_horizon(gamma: float, delta: float, tol: float) -> int:
    """Smallest ``T`` with ``gamma**T * delta <= tol``."""
    if gamma == 0.0 or delta <= tol:
        return 1
    return max(1, math.ceil(math.log(tol / delta) / math.log(gamma)))


def discounted_return(traj, gamma: float, tol: float = 1e-9, start: int | None = None, delta: float = 1.0) -> float:
    """``sum_j gamma**j rewards[start + j]``, truncated once ``gamma**T * delta <= tol``.

    Episodic trajectories end before the truncation horizon and are summed
    exactly.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("discount must lie in [0, 1)")
    if tol <= 0:
        raise ValueError("tolerance must be > 0")
    start = traj.origin if start is None else start
    horizon = return_horizon(gamma, delta, tol)
    r = np.asarray(traj.rewards[start : start + horizon], dtype=float)
    return float(np.sum(r * gamma ** np.arange(len(r))))


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Returns at every time of a reward stream (last axis), by backward recursion."""
    out = np.zeros_like(rewards, dtype=float)
    acc = np.zeros(rewards.shape[:-1])
    for t in range(rewards.shape[-1] - 1, -1, -1):
        acc = rewards[..., t] + gamma * acc
        out[..., t] = acc
    return out


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


class ValueEstimator:
    """Base class: a value estimate as a function of the history."""

    kind = "function"
    value_range: ValueRange | None = None

    def __call__(self, h: History) -> float:
        raise NotImplementedError

    def many(self, histories: Iterable[History]) -> np.ndarray:
        return np.array([self(h) for h in histories], dtype=float)


class FunctionEstimator(ValueEstimator):
    def __init__(self, fn: Callable[[History], float], value_range: ValueRange | None = None):
        self.fn = fn
        self.value_range = value_range

    def __call__(self, h):
        return float(self.fn(h))


class ConstantEstimator(ValueEstimator):
    kind = "constant"

    def __init__(self, c: float):
        self.c = float(c)

    def __call__(self, h):
        return self.c


class WindowTable(ValueEstimator):
    """Tabular function of the length-``m`` window; unseen windows get ``default``."""

    kind = "window"

    def __init__(self, m: int, table: dict, default: float, value_range: ValueRange | None = None):
        self.m = m
        self.table = dict(table)
        self.default = default
        self.value_range = value_range

    def __call__(self, h):
        return self.table.get(window_of_history(h, self.m), self.default)


class TraceCellTable(ValueEstimator):
    """Function of the cover point ``z_lam(win_m(h))``, keyed by its rounded coordinates."""

    kind = "trace"

    def __init__(self, lam: float, m: int, space: ObservationSpace, table: dict, default: float, value_range=None):
        self.lam, self.m, self.space = lam, m, space
        self.table = dict(table)
        self.default = default
        self.value_range = value_range

    def cell(self, h: History):
        return trace_cell_key(h, self.lam, self.m, self.space)

    def __call__(self, h):
        return self.table.get(self.cell(h), self.default)


def trace_cell_key(h: History, lam: float, m: int, space: ObservationSpace) -> tuple:
    z = trace_of_history(History(h.obs[:m]), lam, space).z
    return tuple(np.round(z, 9) + 0.0)


class LinearTraceEstimator(ValueEstimator):
    kind = "trace-linear"

    def __init__(self, lam: float, weights: np.ndarray, space: ObservationSpace):
        self.lam = lam
        self.weights = np.asarray(weights, dtype=float)
        self.space = space

    def __call__(self, h):
        return float(self.weights @ trace_of_history(h, self.lam, self.space).z)


class IncompatibleAnchors(ValueError):
    def __init__(self, i: int, j: int, gap: float, allowed: float):
        super().__init__(f"anchors {i} and {j}: value gap {gap:.6g} exceeds L * distance = {allowed:.6g}")
        self.pair = (i, j)


class LipschitzExtension(ValueEstimator):
    """``clamp(min_i v_i + L ||z - z_i||)``: an ``L``-Lipschitz function through the anchors."""

    kind = "trace-lipschitz"

    def __init__(self, points: np.ndarray, values: np.ndarray, lipschitz: float, value_range=None, lam=None, space=None):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.values = np.asarray(values, dtype=float)
        self.lipschitz = float(lipschitz)
        self.value_range = value_range
        self.lam = lam
        self.space = space

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        z = np.atleast_2d(z)
        d = np.linalg.norm(z[:, None, :] - self.points[None, :, :], axis=-1)
        out = np.min(self.values[None, :] + self.lipschitz * d, axis=1)
        if self.value_range is not None:
            out = self.value_range.clamp(out)
        return out[0] if single else out

    def __call__(self, h):
        if self.lam is None or self.space is None:
            raise ValueError("history evaluation needs lam and space")
        return float(self.evaluate(trace_of_history(h, self.lam, self.space).z))


def lipschitz_extend(
    anchors: Sequence[tuple],
    lipschitz: float,
    value_range: ValueRange | None = None,
    *,
    lam: float | None = None,
    space: ObservationSpace | None = None,
    tol: float = 1e-12,
) -> LipschitzExtension:
    """Extend anchor values ``(trace, value)`` to an ``L``-Lipschitz function.

    Raises :class:`IncompatibleAnchors` naming the first pair whose values
    differ by more than ``L`` times their distance.
    """
    if not anchors:
        raise ValueError("need at least one anchor")
    pts = np.array([a.z if isinstance(a, MemoryTrace) else np.asarray(a, dtype=float) for a, _ in anchors])
    vals = np.array([float(v) for _, v in anchors])
    if lam is None and isinstance(anchors[0][0], MemoryTrace):
        lam = anchors[0][0].lam
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    gap = np.abs(vals[:, None] - vals[None, :])
    bad = gap > lipschitz * dist + tol * max(1.0, float(np.abs(vals).max()))
    if bad.any():
        i, j = (int(v) for v in np.argwhere(bad)[0])
        raise IncompatibleAnchors(i, j, float(gap[i, j]), float(lipschitz * dist[i, j]))
    return LipschitzExtension(pts, vals, lipschitz, value_range, lam, space)


def snap_to_grid(f: ValueEstimator, grid: np.ndarray) -> ValueEstimator:
    """Round an estimator's outputs to the nearest grid value."""
    grid = np.asarray(grid, dtype=float)
    return FunctionEstimator(lambda h: grid[np.argmin(np.abs(grid - f(h)))], f.value_range)


# ---------------------------------------------------------------------------
# return errors
# ---------------------------------------------------------------------------


def dataset_pairs(data: Dataset, delta: float = 1.0, tol: float = 1e-9) -> tuple[list[History], np.ndarray]:
    hists = [t.history() for t in data.trajectories]
    rets = np.array([discounted_return(t, data.gamma, tol, delta=delta) for t in data.trajectories])
    return hists, rets


def empirical_return_error(f: ValueEstimator, data: Dataset) -> float:
    """``(1 / 2n) sum_i (f(h_i) - G_i)^2`` over the dataset's trajectories."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    hists, rets = dataset_pairs(data)
    preds = f.many(hists)
    return float(0.5 * np.mean((preds - rets) ** 2))


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n: int


def sample_continuing_batch(env: PomdpSpec, n: int, length: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``n`` parallel copies of a single-action continuing HMM; returns ``(obs, rewards)``."""
    if env.nactions != 1 or env.episodic:
        raise ValueError("batch sampling is for fixed-policy continuing environments")
    rng = make_rng(seed)
    obs = np.zeros((n, length), dtype=int)
    rew = np.zeros((n, length))
    x = env.reset(rng, n)
    y = env.emit(x, rng)
    zeros = np.zeros(n, dtype=int)
    for t in range(length):
        obs[:, t] = y
        nxt, r = env.step(x, zeros, rng)
        y = env.emit(nxt, rng)
        if env.obs_reward is not None:
            r = r + env.obs_reward[y]
        rew[:, t] = r
        x = nxt
    return obs, rew


def mc_return_error(
    f: ValueEstimator,
    env: PomdpSpec,
    n: int,
    seed: int,
    policy: Policy = None,
    *,
    reference: ValueEstimator | None = None,
    burn_in: int = 100,
    tol: float = 1e-6,
) -> MCEstimate:
    """Monte Carlo return error of ``f`` with its standard error.

    Episodic environments use a uniformly drawn time within each episode as
    the current time; continuing ones run ``burn_in`` steps of pre-history.
    With ``reference`` the paired per-sample difference
    ``err(f) - err(reference)`` is averaged instead (the excess error).
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if env.episodic:
        data = sample_dataset(env, n, seed, policy)
        hists, rets = dataset_pairs(data, env.value_range.delta, tol)
    else:
        horizon = return_horizon(env.gamma, env.value_range.delta, tol)
        obs, rew = sample_continuing_batch(env, n, burn_in + horizon, seed)
        disc = env.gamma ** np.arange(horizon)
        rets = rew[:, burn_in:] @ disc
        hists = [History(tuple(int(y) for y in row[burn_in::-1])) for row in obs]
    samples = 0.5 * (f.many(hists) - rets) ** 2
    if reference is not None:
        samples = samples - 0.5 * (reference.many(hists) - rets) ** 2
    stderr = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return MCEstimate(float(samples.mean()), stderr, n)


# ---------------------------------------------------------------------------
# cover-based ERM
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowClass:
    m: int


@dataclass(frozen=True)
class TraceCoverClass:
    lam: float
    lipschitz: float
    space: ObservationSpace


def nearest_grid(grid: np.ndarray, v: float) -> float:
    return float(grid[int(np.argmin(np.abs(grid - v)))])


def cover_erm(
    data: Dataset,
    cls: WindowClass | TraceCoverClass,
    epsilon: float,
    vrange: ValueRange,
    *,
    cap: int = DEFAULT_CAP,
) -> ValueEstimator:
    """Empirical risk minimiser over the finite ``epsilon``-cover of a class.

    The squared loss separates over cells, so each observed cell gets the
    value-grid point nearest to the mean return in that cell.  Unobserved
    cells get the grid point nearest to the middle of the value range.
    """
    hists, rets = dataset_pairs(data, vrange.delta)
    if isinstance(cls, WindowClass):
        ysize = max(max(h.obs) for h in hists if len(h)) + 1
        check_cap(ysize, cls.m, cap)
        grid = value_grid(vrange, epsilon)
        key = lambda h: window_of_history(h, cls.m)  # noqa: E731
    else:
        m = cover_window_length(cls.lam, cls.lipschitz, epsilon)
        check_cap(cls.space.size, m, cap)
        grid = value_grid(vrange, epsilon / 2.0)
        key = lambda h: trace_cell_key(h, cls.lam, m, cls.space)  # noqa: E731
    sums: dict = {}
    counts: dict = {}
    for h, g in zip(hists, rets):
        k = key(h)
        sums[k] = sums.get(k, 0.0) + g
        counts[k] = counts.get(k, 0) + 1
    table = {k: nearest_grid(grid, sums[k] / counts[k]) for k in sorted(sums)}
    default = nearest_grid(grid, vrange.midpoint)
    if isinstance(cls, WindowClass):
        est = WindowTable(cls.m, table, default, vrange)
    else:
        est = TraceCellTable(cls.lam, m, cls.space, table, default, vrange)
    est.grid = grid
    return est


# ---------------------------------------------------------------------------
# exact T-maze quantities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Outcome:
    history: History
    ret: float
    prob: float


def tmaze_outcomes(k: int, gamma: float) -> list[Outcome]:
    """Every (history, return) pair of the always-up T-maze with its probability.

    The current time is uniform over the ``k`` steps of the episode, matching
    ``sample_dataset(..., origin="uniform")``.
    """
    from .environments import tmaze_space

    space = tmaze_space()
    out = []
    for c in "ab":
        for s in "xy":
            final = 1.0 if (c == "a") == (s == "x") else -1.0
            seq = c + "o" * (k - 2) + s
            for t in range(k):
                h = History.parse(space, seq[: t + 1])
                out.append(Outcome(h, gamma ** (k - 1 - t) * final, 0.25 / k))
    return out


def exact_return_error(f: ValueEstimator, outcomes: Sequence[Outcome]) -> float:
    return float(sum(o.prob * 0.5 * (f(o.history) - o.ret) ** 2 for o in outcomes))


def best_window_error(outcomes: Sequence[Outcome], m: int) -> float:
    """Minimum return error over all functions of the length-``m`` window."""
    groups: dict = {}
    for o in outcomes:
        groups.setdefault(window_of_history(o.history, m), []).append(o)
    total = 0.0
    for members in groups.values():
        p = sum(o.prob for o in members)
        mean = sum(o.prob * o.ret for o in members) / p
        total += sum(o.prob * 0.5 * (o.ret - mean) ** 2 for o in members)
    return total


# ---------------------------------------------------------------------------
# two-state HMM
# ---------------------------------------------------------------------------


def belief_forward(params: TwoStateParams, h: History | Sequence[int]) -> float:
    """Filtering posterior ``P(x_0 = 1 | h)`` under a uniform prior at the oldest step.

    Returns ``nan`` for histories of probability zero.
    """
    obs = h.obs if isinstance(h, History) else tuple(h)
    p, q = params.p, params.q
    T = np.array([[1 - p, p], [p, 1 - p]])
    E = np.array([[1 - q, q], [q, 1 - q]])
    b = np.array([0.5, 0.5])
    for i, y in enumerate(reversed(obs)):
        if i:
            b = b @ T
        b = b * E[:, y]
        s = b.sum()
        if s <= 0.0:
            return math.nan
        b = b / s
    return float(b[1])


def two_state_value(params: TwoStateParams, h, gamma: float) -> float:
    """``E[sum_t gamma^t y_{t+1} | h]`` for the reward ``r(y) = y``; affine in the belief."""
    b = belief_forward(params, h)
    p, q = params.p, params.q
    rho = 1.0 - 2.0 * p
    return q / (1 - gamma) + (1 - 2 * q) * (0.5 / (1 - gamma) + (b - 0.5) * rho / (1 - gamma * rho))


DEFAULT_LAMBDA_GRID = np.linspace(0.005, 0.995, 199)


@dataclass(frozen=True)
class LambdaStar:
    lam_star: float
    grid: np.ndarray
    required: np.ndarray  # required Lipschitz constant per grid point (inf = infeasible)


def lambda_star(
    params: TwoStateParams,
    horizon: int = 4,
    lambda_grid: Sequence[float] | None = None,
    gamma: float = 0.9,
    value_tol: float = 1e-12,
    dist_tol: float = 1e-12,
) -> LambdaStar:
    """Forgetting factor minimising the Lipschitz constant a zero-error fit needs.

    Only the ``2**horizon`` histories of length ``horizon`` are considered.
    Pairs with equal values never constrain ``L``; pairs with different values
    and coinciding traces make ``L`` infinite.  Ties go to the smaller ``lam``.
    """
    grid = DEFAULT_LAMBDA_GRID if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if grid.size == 0 or np.any(grid < 0) or np.any(grid >= 1):
        raise ValueError("lambda grid must be a nonempty subset of [0, 1)")
    hist = enumerate_histories(horizon, 2)
    vals = np.array([two_state_value(params, row, gamma) for row in hist])
    ok = ~np.isnan(vals)
    hist, vals = hist[ok], vals[ok]
    i, j = np.triu_indices(len(vals), k=1)
    gap = np.abs(vals[i] - vals[j])
    live = gap > value_tol * max(1.0, float(np.abs(vals).max()))
    i, j, gap = i[live], j[live], gap[live]
    space = ObservationSpace(2)
    required = np.zeros(len(grid))
    for g, lam in enumerate(grid):
        if len(gap) == 0:
            break
        z = traces_of_histories(hist, float(lam), space)
        d = np.linalg.norm(z[i] - z[j], axis=1)
        with np.errstate(divide="ignore"):
            ratio = np.where(d > dist_tol, gap / np.maximum(d, dist_tol), np.inf)
        required[g] = ratio.max()
    best = int(np.argmin(required))
    return LambdaStar(float(grid[best]), grid, required)


def map_state(params: TwoStateParams, h) -> int:
    """Most likely current state (ties go to state 0)."""
    b = belief_forward(params, h)
    return int(b > 0.5)


def pq_heatmap(
    p_grid: Sequence[float],
    q_grid: Sequence[float],
    horizon: int = 4,
    cond_history: History | Sequence[int] = (0, 1, 1, 1),
    lambda_grid: Sequence[float] | None = None,
    gamma: float = 0.9,
) -> list[dict]:
    """Rows ``(p, q, lam_star, posterior, map_state)`` over a ``p x q`` grid."""
    rows = []
    for p in p_grid:
        for q in q_grid:
            params = TwoStateParams(float(p), float(q))
            ls = lambda_star(params, horizon, lambda_grid, gamma)
            rows.append(
                {
                    "p": float(p),
                    "q": float(q),
                    "lam_star": ls.lam_star,
                    "posterior": belief_forward(params, cond_history),
                    "map_state": map_state(params, cond_history),
                }
            )
    return rows


def true_value_tmaze(k: int, gamma: float = 0.9) -> FunctionEstimator:
    """Exact always-up value of a reachable T-maze history, read off the symbols.

    Corridor histories are worth 0 (the sign is not yet visible); at the
    junction the value is +1 when colour and sign agree and -1 otherwise.
    """
    from .environments import tmaze_space

    space = tmaze_space()
    a, x, y = space.index("a"), space.index("x"), space.index("y")

    def value(h: History) -> float:
        if not h.obs or h.obs[0] not in (x, y):
            return 0.0
        colour = h.obs[-1]
        return 1.0 if (colour == a) == (h.obs[0] == x) else -1.0

    return FunctionEstimator(value, ValueRange(-1.0, 1.0))


def tmaze_mcshane(k: int) -> LipschitzExtension:
    """McShane extension of the reachable T-maze values at ``(lam_k, L_k)``."""
    from .complexity import tmaze_constants, tmaze_relevant_histories
    from .environments import tmaze_space

    space = tmaze_space()
    c = tmaze_constants(k)
    anchors = [(trace_of_history(h, c.lam, space), v) for h, v in tmaze_relevant_histories(k)]
    return lipschitz_extend(anchors, c.lipschitz, ValueRange(-1.0, 1.0), lam=c.lam, space=space)
