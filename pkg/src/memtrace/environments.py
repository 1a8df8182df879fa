"""Tabular POMDPs and trajectory sampling.

A :class:`PomdpSpec` stores dense transition, emission, initial and reward
tables.  Rewards are attached to transitions ``(x, u, x')`` and optionally to
the next observation, which covers both the edge rewards of the random walk
and the observation rewards of the two-state HMM.  Sampling is vectorised over
a batch of independent copies so that Monte Carlo estimates stay cheap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .complexity import TMAZE_LABELS, ValueRange
from .trace_core import History, ObservationSpace

ROW_TOL = 1e-12

TMAZE_ACTIONS = ("forward", "up", "down")
FORWARD, UP, DOWN = 0, 1, 2


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; distinct seeds give independent streams."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def trajectory_seed(base_seed: int, index: int) -> int:
    return int(base_seed) ^ int(index)


@dataclass(frozen=True, eq=False)
class PomdpSpec:
    name: str
    transition: np.ndarray  # (X, U, X)
    emission: np.ndarray  # (X, Y)
    initial: np.ndarray  # (X,)
    reward: np.ndarray  # (X, U, X), reward for the transition
    gamma: float
    space: ObservationSpace
    value_range: ValueRange
    obs_reward: np.ndarray | None = None  # (Y,), reward for observing y_{t+1}
    terminal: np.ndarray | None = None  # (X,) bool
    max_steps: int | None = None
    action_labels: tuple[str, ...] = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("transition", "emission", "initial", "reward"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        X, U, X2 = self.transition.shape
        if X != X2 or self.emission.shape[0] != X or self.initial.shape != (X,):
            raise ValueError("inconsistent table shapes")
        if self.reward.shape != self.transition.shape:
            raise ValueError("reward table must match transition table shape")
        if self.emission.shape[1] != self.space.size:
            raise ValueError("emission columns must match the observation space")
        for label, rows in (
            ("transition", self.transition.reshape(-1, X)),
            ("emission", self.emission),
            ("initial", self.initial[None, :]),
        ):
            if (rows < -ROW_TOL).any() or np.abs(rows.sum(axis=1) - 1.0).max() > ROW_TOL:
                raise ValueError(f"{label} rows must be probability distributions")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.gamma}")
        if self.terminal is not None:
            term = np.asarray(self.terminal, dtype=bool)
            term.setflags(write=False)
            object.__setattr__(self, "terminal", term)
        if not self.action_labels:
            object.__setattr__(self, "action_labels", tuple(str(u) for u in range(U)))

    @property
    def nstates(self) -> int:
        return self.transition.shape[0]

    @property
    def nactions(self) -> int:
        return self.transition.shape[1]

    @property
    def nobs(self) -> int:
        return self.space.size

    @property
    def episodic(self) -> bool:
        return self.terminal is not None

    def _cdf(self, name: str) -> np.ndarray:
        cache = self.__dict__.setdefault("_cdf_cache", {})
        if name not in cache:
            cdf = np.cumsum(getattr(self, name), axis=-1)
            cdf[..., -1] = 1.0
            cache[name] = cdf
        return cache[name]

    # vectorised sampling over a batch of copies ---------------------------

    def reset(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        cdf = self._cdf("initial")
        return np.searchsorted(cdf, rng.random(n), side="right").clip(max=self.nstates - 1)

    def emit(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        cdf = self._cdf("emission")[states]
        return (cdf <= rng.random(len(states))[:, None]).sum(axis=1).clip(max=self.nobs - 1)

    def step(self, states: np.ndarray, actions: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Next states and transition rewards (observation rewards excluded)."""
        cdf = self._cdf("transition")[states, actions]
        nxt = (cdf <= rng.random(len(states))[:, None]).sum(axis=1).clip(max=self.nstates - 1)
        return nxt, self.reward[states, actions, nxt]

    def is_terminal(self, states: np.ndarray) -> np.ndarray:
        if self.terminal is None:
            return np.zeros(len(states), dtype=bool)
        return self.terminal[states]

    def step_reward(self, states, actions, nxt_states, nxt_obs) -> np.ndarray:
        r = self.reward[states, actions, nxt_states]
        if self.obs_reward is not None:
            r = r + self.obs_reward[nxt_obs]
        return r


@dataclass(frozen=True, eq=False)
class RandomWalkSpec(PomdpSpec):
    """The 1001-state noisy random walk with an arithmetic fast path for sampling."""

    def _geom(self) -> tuple[int, int, int, float]:
        p = self.params
        return p["nstates"], p["jump"], p["center"], p["signal"]

    def step(self, states, actions, rng):
        n, jump, center, _ = self._geom()
        mag = rng.integers(1, jump + 1, size=len(states))
        sign = np.where(rng.random(len(states)) < 0.5, -1, 1)
        nxt = states + sign * mag
        reward = np.where(nxt < 0, -1.0, np.where(nxt > n - 1, 1.0, 0.0))
        nxt = np.where((nxt < 0) | (nxt > n - 1), center, nxt)
        return nxt, reward

    def emit(self, states, rng):
        n, _, _, signal = self._geom()
        nobs = self.nobs
        bracket = (nobs * states) // n
        noise = rng.integers(0, nobs, size=len(states))
        return np.where(rng.random(len(states)) < signal, bracket, noise)


    def simulate(self, length: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """One long chain from the centre: ``(states, observations, rewards)``.

        ``rewards[t]`` is paid on the transition out of time ``t``.  All random
        draws are made up front, so the scalar loop stays cheap.
        """
        n, jump, center, signal = self._geom()
        mag = rng.integers(1, jump + 1, size=length)
        sign = np.where(rng.random(length) < 0.5, -1, 1)
        steps = (sign * mag).tolist()
        states = np.empty(length, dtype=np.int64)
        rewards = np.zeros(length)
        x = center
        for t in range(length):
            states[t] = x
            x += steps[t]
            if x < 0 or x > n - 1:
                rewards[t] = -1.0 if x < 0 else 1.0
                x = center
        bracket = (self.nobs * states) // n
        noise = rng.integers(0, self.nobs, size=length)
        obs = np.where(rng.random(length) < signal, bracket, noise)
        return states, obs, rewards


def tmaze_space() -> ObservationSpace:
    return ObservationSpace.one_hot(TMAZE_LABELS)


def tmaze_state(colour: int, sign: int, pos: int, k: int) -> int:
    return (colour * 2 + sign) * k + pos


def tmaze_env(k: int, gamma: float = 0.9) -> PomdpSpec:
    """Symbolic T-maze with corridor length ``k``.

    Positions ``0 .. k-1``; position 0 shows the start colour (a/b), interior
    positions show ``o`` and the junction shows the sign (x/y).  Actions are
    forward/up/down.  In the corridor up/down leave the agent in place, at the
    junction forward does.  Up/down at the junction end the episode with reward
    +1 when (colour, sign, action) is (a, x, up), (b, y, up), (a, y, down) or
    (b, x, down), and -1 otherwise.
    """
    if k < 2:
        raise ValueError("the T-maze needs a corridor of length k >= 2")
    space = tmaze_space()
    a, b, o, x, y = (space.index(c) for c in TMAZE_LABELS)
    nx = 4 * k + 1
    term = nx - 1
    T = np.zeros((nx, 3, nx))
    E = np.zeros((nx, 5))
    R = np.zeros((nx, 3, nx))
    init = np.zeros(nx)
    for colour in (0, 1):
        for sign in (0, 1):
            for pos in range(k):
                s = tmaze_state(colour, sign, pos, k)
                if pos == 0:
                    E[s, a if colour == 0 else b] = 1.0
                elif pos < k - 1:
                    E[s, o] = 1.0
                else:
                    E[s, x if sign == 0 else y] = 1.0
                if pos < k - 1:
                    T[s, FORWARD, s + 1] = 1.0
                    T[s, UP, s] = 1.0
                    T[s, DOWN, s] = 1.0
                else:
                    T[s, FORWARD, s] = 1.0
                    T[s, UP, term] = 1.0
                    T[s, DOWN, term] = 1.0
                    up_wins = colour == sign
                    R[s, UP, term] = 1.0 if up_wins else -1.0
                    R[s, DOWN, term] = -1.0 if up_wins else 1.0
            init[tmaze_state(colour, sign, 0, k)] = 0.25
    T[term, :, term] = 1.0
    E[term, o] = 1.0  # never emitted; episodes stop on entering the terminal state
    terminal = np.zeros(nx, dtype=bool)
    terminal[term] = True
    return PomdpSpec(
        name="tmaze",
        transition=T,
        emission=E,
        initial=init,
        reward=R,
        gamma=gamma,
        space=space,
        value_range=ValueRange(-1.0, 1.0),
        terminal=terminal,
        max_steps=5 * (k + 2) ** 2,
        action_labels=TMAZE_ACTIONS,
        params={"k": k},
    )


def tmaze_always_up_policy() -> np.ndarray:
    """Reactive policy table: forward in the corridor, up at the junction."""
    table = np.zeros((5, 3))
    table[:3, FORWARD] = 1.0
    table[3:, UP] = 1.0
    return table


def random_walk_env(
    gamma: float = 0.99,
    nstates: int = 1001,
    jump: int = 100,
    nobs: int = 11,
    signal: float = 0.5,
) -> RandomWalkSpec:
    """Noisy random walk: uniform jumps of 1..``jump`` either way, edge overflow returns to the centre.

    Overflow on the left pays -1, on the right +1.  The current bracket
    ``floor(nobs * x / nstates)`` is observed with probability ``signal``,
    otherwise a uniformly random observation.
    """
    center = nstates // 2
    T = np.zeros((nstates, 1, nstates))
    R = np.zeros((nstates, 1, nstates))
    p = 1.0 / (2 * jump)
    for s in range(nstates):
        for d in range(1, jump + 1):
            for sgn in (-1, 1):
                t = s + sgn * d
                if 0 <= t < nstates:
                    T[s, 0, t] += p
                else:
                    T[s, 0, center] += p
                    R[s, 0, center] = float(sgn)
    E = np.full((nstates, nobs), (1.0 - signal) / nobs)
    E[np.arange(nstates), (nobs * np.arange(nstates)) // nstates] += signal
    init = np.zeros(nstates)
    init[center] = 1.0
    return RandomWalkSpec(
        name="random_walk",
        transition=T,
        emission=E,
        initial=init,
        reward=R,
        gamma=gamma,
        space=ObservationSpace(nobs),
        value_range=ValueRange.from_rewards(-1.0, 1.0, gamma),
        params={"nstates": nstates, "jump": jump, "center": center, "signal": signal},
    )


@dataclass(frozen=True)
class TwoStateParams:
    p: float
    q: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.q <= 1.0):
            raise ValueError(f"p and q must lie in [0, 1], got p={self.p}, q={self.q}")


def two_state_hmm(params: TwoStateParams, gamma: float = 0.9) -> PomdpSpec:
    """Two hidden states that flip with probability ``p``; emissions err with probability ``q``.

    The reward is the observation index, ``r(y) = y``.
    """
    p, q = params.p, params.q
    T = np.array([[1 - p, p], [p, 1 - p]])[:, None, :]
    E = np.array([[1 - q, q], [q, 1 - q]])
    return PomdpSpec(
        name="two_state",
        transition=T,
        emission=E,
        initial=np.array([0.5, 0.5]),
        reward=np.zeros((2, 1, 2)),
        gamma=gamma,
        space=ObservationSpace.one_hot(("0", "1")),
        value_range=ValueRange.from_rewards(0.0, 1.0, gamma),
        obs_reward=np.array([0.0, 1.0]),
        params={"p": p, "q": q},
    )


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

Policy = None | np.ndarray | Callable[[History], int]


@dataclass
class Trajectory:
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray  # rewards[t] is received on the transition out of time t
    seed: int
    origin: int = 0  # index of the "current" time step y_0
    states: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not len(self.observations) == len(self.actions) == len(self.rewards):
            raise ValueError("observations, actions and rewards must be aligned")
        if not 0 <= self.origin < max(len(self.observations), 1):
            raise ValueError("origin outside the trajectory")

    def __len__(self) -> int:
        return len(self.observations)

    def history(self, t: int | None = None) -> History:
        """History at time ``t`` (default: the origin), most recent first."""
        t = self.origin if t is None else t
        return History(tuple(int(y) for y in self.observations[t::-1]))

    def to_json(self) -> str:
        return json.dumps(
            {
                "observations": self.observations.tolist(),
                "actions": self.actions.tolist(),
                "rewards": self.rewards.tolist(),
                "seed": self.seed,
                "origin": self.origin,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> Trajectory:
        d = json.loads(line)
        return cls(
            np.asarray(d["observations"], dtype=int),
            np.asarray(d["actions"], dtype=int),
            np.asarray(d["rewards"], dtype=float),
            int(d["seed"]),
            int(d.get("origin", 0)),
        )


def _resolve_policy(env: PomdpSpec, policy: Policy) -> Callable[[list[int], np.random.Generator], int]:
    if policy is None:
        if env.nactions != 1:
            raise ValueError(f"{env.name} has {env.nactions} actions; a policy is required")
        return lambda obs, rng: 0
    if callable(policy):
        return lambda obs, rng: int(policy(History(tuple(reversed(obs)))))
    table = np.asarray(policy, dtype=float)
    if table.shape != (env.nobs, env.nactions) or np.abs(table.sum(axis=1) - 1).max() > 1e-9:
        raise ValueError(f"policy table must be a ({env.nobs}, {env.nactions}) row-stochastic array")
    cdf = np.cumsum(table, axis=1)

    def act(obs, rng):
        row = cdf[obs[-1]]
        if row[0] >= 1.0:
            return 0
        return min(int(np.searchsorted(row, rng.random(), side="right")), env.nactions - 1)

    return act


def sample_trajectory(
    env: PomdpSpec,
    policy: Policy = None,
    horizon: int | None = None,
    seed: int = 0,
    burn_in: int = 0,
) -> Trajectory:
    """Roll out one trajectory.

    Continuing environments run for ``burn_in + horizon`` steps with
    ``origin = burn_in``; episodic ones stop on entering a terminal state or
    after ``max_steps`` (a timeout adds no reward).
    """
    if horizon is None:
        if not env.episodic:
            raise ValueError("continuing environments need a horizon")
        horizon = env.max_steps
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    act = _resolve_policy(env, policy)
    rng = make_rng(seed)
    total = horizon + burn_in
    if env.episodic and env.max_steps is not None:
        total = min(total, env.max_steps)
    x = env.reset(rng, 1)
    y = env.emit(x, rng)
    states, obs, acts, rews = [], [], [], []
    for _ in range(total):
        states.append(int(x[0]))
        obs.append(int(y[0]))
        u = act(obs, rng)
        nxt, r = env.step(x, np.array([u]), rng)
        done = bool(env.is_terminal(nxt)[0])
        if not done:
            y = env.emit(nxt, rng)
            if env.obs_reward is not None:
                r = r + env.obs_reward[y]
        acts.append(u)
        rews.append(float(r[0]))
        if done:
            break
        x = nxt
    return Trajectory(
        np.asarray(obs, dtype=int),
        np.asarray(acts, dtype=int),
        np.asarray(rews, dtype=float),
        seed,
        origin=min(burn_in, len(obs) - 1),
        states=np.asarray(states, dtype=int),
    )
