"""Clipped-objective actor-critic (PPO) for the T-maze with trace or frame-stack memory."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..environments import PomdpSpec, make_rng, tmaze_env
from .mlp import MLP, Adam, NonFiniteError, clip_by_global_norm
from .td import LearningCurve, config_hash


@dataclass(frozen=True)
class PpoConfig:
    memory: str = "trace"  # "trace" or "stack"
    lambdas: tuple[float, ...] = (0.0,)
    stack: int = 1
    hidden: tuple[int, ...] = (64, 64)
    clip_coef: float = 0.2
    gae_lambda: float = 0.95
    update_epochs: int = 2
    num_minibatches: int = 8
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    learning_rate: float = 3e-4
    anneal_lr: bool = True
    num_envs: int = 8
    num_steps: int = 64
    total_timesteps: int = 1_000_000
    gamma: float = 0.99
    curve_window: int = 500
    normalize_obs: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "lambdas", tuple(float(l) for l in self.lambdas))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.memory not in ("trace", "stack"):
            raise ValueError(f"memory must be 'trace' or 'stack', got {self.memory!r}")
        if self.memory == "trace" and not self.lambdas:
            raise ValueError("trace memory needs at least one forgetting factor")
        if any(not 0.0 <= l < 1.0 for l in self.lambdas):
            raise ValueError("forgetting factors must lie in [0, 1)")
        if self.stack < 1:
            raise ValueError("frame stack must be >= 1")
        if not 0.0 <= self.gamma < 1.0 or not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gamma must lie in [0, 1) and gae_lambda in [0, 1]")
        if self.clip_coef <= 0 or self.max_grad_norm <= 0 or self.learning_rate <= 0:
            raise ValueError("clip, grad norm and learning rate must be > 0")
        if (self.num_envs * self.num_steps) % self.num_minibatches:
            raise ValueError("batch size must be divisible by the number of minibatches")

    @property
    def batch_size(self) -> int:
        return self.num_envs * self.num_steps

    @property
    def num_updates(self) -> int:
        return max(1, self.total_timesteps // self.batch_size)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        return config_hash(self.to_dict())


# ---------------------------------------------------------------------------
# memories
# ---------------------------------------------------------------------------


class TraceMemory:
    """One trace per forgetting factor, concatenated; reset to zero at episode start."""

    def __init__(self, lambdas, ysize: int, n: int):
        self.lam = np.asarray(lambdas, dtype=float)[None, :, None]
        self.ysize = ysize
        self.z = np.zeros((n, len(lambdas), ysize))

    @property
    def size(self) -> int:
        return self.z.shape[1] * self.ysize

    def reset(self, mask: np.ndarray) -> None:
        self.z[mask] = 0.0

    def update(self, y: np.ndarray) -> np.ndarray:
        onehot = np.eye(self.ysize)[y][:, None, :]
        self.z = self.lam * self.z + (1.0 - self.lam) * onehot
        return self.z.reshape(len(y), -1).copy()


class StackMemory:
    """The last ``m`` one-hot observations, most recent first, zero-padded."""

    def __init__(self, m: int, ysize: int, n: int):
        self.ysize = ysize
        self.buf = np.zeros((n, m, ysize))

    @property
    def size(self) -> int:
        return self.buf.shape[1] * self.ysize

    def reset(self, mask: np.ndarray) -> None:
        self.buf[mask] = 0.0

    def update(self, y: np.ndarray) -> np.ndarray:
        self.buf = np.roll(self.buf, 1, axis=1)
        self.buf[:, 0] = np.eye(self.ysize)[y]
        return self.buf.reshape(len(y), -1).copy()


class RunningNorm:
    """Per-feature running mean and variance; inputs are standardised and clipped to +-10."""

    def __init__(self, size: int, eps: float = 1e-8):
        self.mean = np.zeros(size)
        self.var = np.ones(size)
        self.count = eps
        self.eps = eps

    def update(self, x: np.ndarray) -> None:
        n = len(x)
        mean, var = x.mean(axis=0), x.var(axis=0)
        delta = mean - self.mean
        total = self.count + n
        self.mean = self.mean + delta * n / total
        self.var = (self.var * self.count + var * n + delta**2 * self.count * n / total) / total
        self.count = total

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.mean) / np.sqrt(self.var + self.eps), -10.0, 10.0)


def make_memory(cfg: PpoConfig, ysize: int, n: int):
    if cfg.memory == "trace":
        return TraceMemory(cfg.lambdas, ysize, n)
    return StackMemory(cfg.stack, ysize, n)


# ---------------------------------------------------------------------------
# advantages and loss
# ---------------------------------------------------------------------------


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    last_values: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalised advantage estimates over a ``(T, N)`` rollout.

    ``dones[t]`` marks that the episode ended with the transition out of step
    ``t``, so nothing is bootstrapped across it.  Returns ``(advantages,
    returns)`` with ``returns = advantages + values``.
    """
    T = rewards.shape[0]
    adv = np.zeros_like(rewards, dtype=float)
    acc = np.zeros(rewards.shape[1:])
    for t in reversed(range(T)):
        nxt = last_values if t == T - 1 else values[t + 1]
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * nxt * live - values[t]
        acc = delta + gamma * lam * live * acc
        adv[t] = acc
    return adv, adv + values


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray


def ppo_loss(actor: MLP, critic: MLP, b: Batch, cfg: PpoConfig, normalize: bool = True):
    """Loss, gradients (actor then critic parameters) and diagnostics for one minibatch."""
    n = len(b.actions)
    logits, ca = actor.forward(b.obs)
    v, cc = critic.forward(b.obs)
    v = v[:, 0]
    logp_all = log_softmax(logits)
    p = np.exp(logp_all)
    rows = np.arange(n)
    logp = logp_all[rows, b.actions]
    ratio = np.exp(logp - b.logp)
    adv = b.advantages
    if normalize and n > 1:
        adv = (adv - adv.mean()) / (adv.std(ddof=1) + 1e-8)
    pg1 = -adv * ratio
    pg2 = -adv * np.clip(ratio, 1.0 - cfg.clip_coef, 1.0 + cfg.clip_coef)
    pg_loss = np.maximum(pg1, pg2).mean()
    ent = -(p * logp_all).sum(axis=1)
    v_loss = 0.5 * np.mean((v - b.returns) ** 2)
    loss = pg_loss - cfg.ent_coef * ent.mean() + cfg.vf_coef * v_loss

    dlogp = np.where(pg1 >= pg2, -adv * ratio, 0.0) / n
    onehot = np.zeros_like(p)
    onehot[rows, b.actions] = 1.0
    dent = -p * (logp_all + ent[:, None])
    dlogits = dlogp[:, None] * (onehot - p) - cfg.ent_coef * dent / n
    dv = (cfg.vf_coef * (v - b.returns) / n)[:, None]
    grads = actor.backward(ca, dlogits) + critic.backward(cc, dv)
    if not np.isfinite(loss):
        raise NonFiniteError("non-finite loss")
    stats = {
        "loss": float(loss),
        "pg_loss": float(pg_loss),
        "v_loss": float(v_loss),
        "entropy": float(ent.mean()),
        "clipfrac": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_coef)),
    }
    return float(loss), grads, stats


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


class PpoDiverged(RuntimeError):
    pass


@dataclass
class PpoResult:
    curve: LearningCurve
    episode_steps: np.ndarray  # env steps at the end of each episode
    episode_success: np.ndarray
    episode_length: np.ndarray
    config: PpoConfig
    stats: list = field(default_factory=list)

    def final_success(self, fraction: float = 0.1) -> float:
        n = len(self.episode_success)
        if n == 0:
            return 0.0
        tail = max(1, int(round(fraction * n)))
        return float(self.episode_success[-tail:].mean())

    def episodes_to(self, level: float, window: int | None = None) -> int | None:
        """First episode count at which the trailing-window success reaches ``level``."""
        w = window or self.config.curve_window
        s = self.episode_success
        if len(s) < w:
            return None
        rolling = np.convolve(s, np.ones(w) / w, mode="valid")
        hit = np.flatnonzero(rolling >= level)
        return int(hit[0] + w) if len(hit) else None


def success_curve(success: np.ndarray, window: int, seed: int, chash: str) -> LearningCurve:
    nwin = len(success) // window
    if nwin == 0:
        idx = np.array([max(len(success), 1)])
        metric = np.array([success.mean() if len(success) else 0.0])
    else:
        idx = (np.arange(nwin) + 1) * window
        metric = success[: nwin * window].reshape(nwin, window).mean(axis=1)
    return LearningCurve(idx, metric, seed, chash, name="success_rate")


def ppo_train(env: PomdpSpec | int, cfg: PpoConfig, log_every: int = 0) -> PpoResult:
    """Train actor and critic on a T-maze (or any episodic ``PomdpSpec``).

    Success is a positive reward on the terminating transition.  Episodes
    that hit ``max_steps`` count as failures and are not bootstrapped.
    """
    if isinstance(env, int):
        env = tmaze_env(env, cfg.gamma)
    if not env.episodic:
        raise ValueError("PPO training expects an episodic environment")
    rng = make_rng(cfg.seed)
    N, T = cfg.num_envs, cfg.num_steps
    mem = make_memory(cfg, env.nobs, N)
    actor = MLP.build([mem.size, *cfg.hidden, env.nactions], rng, out_gain=0.01)
    critic = MLP.build([mem.size, *cfg.hidden, 1], rng, out_gain=1.0)
    opt = Adam(actor.params + critic.params)

    norm = RunningNorm(mem.size) if cfg.normalize_obs else None

    def observe(raw: np.ndarray) -> np.ndarray:
        if norm is None:
            return raw
        norm.update(raw)
        return norm(raw)

    x = env.reset(rng, N)
    feat = observe(mem.update(env.emit(x, rng)))
    ep_len = np.zeros(N, dtype=int)
    ep_steps, ep_succ, ep_lens, stats_log = [], [], [], []
    global_step = 0
    buf_obs = np.zeros((T, N, mem.size))
    buf_act = np.zeros((T, N), dtype=int)
    buf_logp = np.zeros((T, N))
    buf_val = np.zeros((T, N))
    buf_rew = np.zeros((T, N))
    buf_done = np.zeros((T, N))

    for update in range(cfg.num_updates):
        lr = cfg.learning_rate * (1.0 - update / cfg.num_updates) if cfg.anneal_lr else cfg.learning_rate
        try:
            for t in range(T):
                logits, _ = actor.forward(feat)
                value, _ = critic.forward(feat)
                logp_all = log_softmax(logits)
                cdf = np.cumsum(np.exp(logp_all), axis=1)
                a = np.minimum((cdf < rng.random(N)[:, None]).sum(axis=1), env.nactions - 1)
                nxt, r = env.step(x, a, rng)
                ep_len += 1
                global_step += N
                term = env.is_terminal(nxt)
                done = term | (ep_len >= env.max_steps)
                buf_obs[t], buf_act[t], buf_val[t] = feat, a, value[:, 0]
                buf_logp[t] = logp_all[np.arange(N), a]
                buf_rew[t], buf_done[t] = r, done
                for i in np.flatnonzero(done):
                    ep_steps.append(global_step)
                    ep_succ.append(bool(term[i] and r[i] > 0))
                    ep_lens.append(int(ep_len[i]))
                if done.any():
                    nxt = nxt.copy()
                    nxt[done] = env.reset(rng, int(done.sum()))
                    ep_len[done] = 0
                    mem.reset(done)
                feat = observe(mem.update(env.emit(nxt, rng)))
                x = nxt
            last_v = critic.forward(feat)[0][:, 0]
            adv, ret = gae(buf_rew, buf_val, buf_done, last_v, cfg.gamma, cfg.gae_lambda)
            B = cfg.batch_size
            flat = Batch(
                buf_obs.reshape(B, -1), buf_act.reshape(B), buf_logp.reshape(B), adv.reshape(B), ret.reshape(B)
            )
            mb = B // cfg.num_minibatches
            for _ in range(cfg.update_epochs):
                perm = rng.permutation(B)
                for s in range(0, B, mb):
                    idx = perm[s : s + mb]
                    part = Batch(flat.obs[idx], flat.actions[idx], flat.logp[idx], flat.advantages[idx], flat.returns[idx])
                    _, grads, st = ppo_loss(actor, critic, part, cfg)
                    grads, _ = clip_by_global_norm(grads, cfg.max_grad_norm)
                    opt.step(grads, lr)
        except NonFiniteError as exc:
            raise PpoDiverged(f"update {update} (step {global_step}): {exc}") from exc
        if log_every and (update + 1) % log_every == 0:
            recent = np.mean(ep_succ[-cfg.curve_window :]) if ep_succ else 0.0
            stats_log.append({"update": update + 1, "step": global_step, "success": float(recent), **st})
    succ = np.asarray(ep_succ, dtype=float)
    return PpoResult(
        success_curve(succ, cfg.curve_window, cfg.seed, cfg.config_hash()),
        np.asarray(ep_steps),
        succ,
        np.asarray(ep_lens),
        cfg,
        stats_log,
    )
