from __future__ import annotations

import numpy as np
import pytest

from memtrace.environments import (
    DOWN,
    FORWARD,
    UP,
    PomdpSpec,
    Trajectory,
    TwoStateParams,
    make_rng,
    random_walk_env,
    sample_trajectory,
    tmaze_always_up_policy,
    tmaze_env,
    tmaze_space,
    tmaze_state,
    two_state_hmm,
)


def test_tables_are_stochastic():
    for env in (tmaze_env(3), two_state_hmm(TwoStateParams(0.1, 0.2)), random_walk_env()):
        assert np.allclose(env.transition.sum(axis=2), 1.0)
        assert np.allclose(env.emission.sum(axis=1), 1.0)
        assert np.isclose(env.initial.sum(), 1.0)


def test_invalid_tables_rejected():
    env = two_state_hmm(TwoStateParams(0.1, 0.2))
    with pytest.raises(ValueError):
        PomdpSpec(
            name="bad",
            transition=env.transition * 0.5,
            emission=env.emission,
            initial=env.initial,
            reward=env.reward,
            gamma=0.9,
            space=env.space,
            value_range=env.value_range,
        )
    with pytest.raises(ValueError):
        TwoStateParams(1.5, 0.0)


def test_tmaze_rewards_follow_table():
    k = 3
    env = tmaze_env(k)
    rng = make_rng(0)
    junction = k - 1
    for colour in (0, 1):
        for sign in (0, 1):
            x = np.array([tmaze_state(colour, sign, junction, k)])
            _, r_up = env.step(x, np.array([UP]), rng)
            _, r_down = env.step(x, np.array([DOWN]), rng)
            expect = 1.0 if colour == sign else -1.0
            assert r_up[0] == expect and r_down[0] == -expect
    with pytest.raises(ValueError):
        tmaze_env(1)


def test_tmaze_corridor_moves():
    k = 4
    env = tmaze_env(k)
    rng = make_rng(1)
    x = np.array([tmaze_state(0, 1, 0, k)])
    nxt, _ = env.step(x, np.array([FORWARD]), rng)
    assert nxt[0] == tmaze_state(0, 1, 1, k)
    same, _ = env.step(x, np.array([UP]), rng)
    assert same[0] == x[0]


def test_tmaze_always_up_episode():
    space = tmaze_space()
    for k in (2, 5):
        env = tmaze_env(k)
        for seed in range(20):
            traj = sample_trajectory(env, tmaze_always_up_policy(), seed=seed)
            assert len(traj) == k
            text = traj.history(k - 1).render(space)
            assert text[0] in "ab" and text[-1] in "xy" and set(text[1:-1]) <= {"o"}
            win = (text[0] == "a") == (text[-1] == "x")
            assert traj.rewards[-1] == (1.0 if win else -1.0)
            assert np.all(traj.rewards[:-1] == 0.0)


def test_sampling_is_deterministic():
    env = random_walk_env()
    a = sample_trajectory(env, horizon=200, seed=7, burn_in=10)
    b = sample_trajectory(env, horizon=200, seed=7, burn_in=10)
    c = sample_trajectory(env, horizon=200, seed=8, burn_in=10)
    assert np.array_equal(a.observations, b.observations)
    assert np.array_equal(a.rewards, b.rewards)
    assert not np.array_equal(a.observations, c.observations)
    assert a.origin == 10


def test_random_walk_dynamics():
    env = random_walk_env()
    states, obs, rew = env.simulate(50_000, make_rng(3))
    steps = np.diff(states)
    wrapped = rew[:-1] != 0
    assert np.all(np.abs(steps[~wrapped]) <= 100)
    assert np.all(states[1:][wrapped] == 500)
    assert set(np.unique(rew)) <= {-1.0, 0.0, 1.0}
    bracket = (11 * states) // 1001
    # half the time the bracket, otherwise uniform over 11 symbols
    assert abs(np.mean(obs == bracket) - (0.5 + 0.5 / 11)) < 0.01


def test_random_walk_fast_path_matches_tables():
    env = random_walk_env()
    rng = make_rng(5)
    x = np.full(200_000, 950)
    nxt, r = env.step(x, np.zeros_like(x), rng)
    p_over = env.transition[950, 0, 500]
    assert abs(np.mean(nxt == 500) - p_over) < 0.01
    assert np.all(r[nxt == 500] == 1.0)


def test_two_state_rewards_are_observations():
    env = two_state_hmm(TwoStateParams(0.2, 0.1))
    traj = sample_trajectory(env, horizon=300, seed=2)
    # reward out of time t is the next observation
    assert np.array_equal(traj.rewards[:-1], traj.observations[1:].astype(float))


def test_trajectory_json_round_trip():
    env = tmaze_env(3)
    t = sample_trajectory(env, tmaze_always_up_policy(), seed=4)
    back = Trajectory.from_json(t.to_json())
    assert np.array_equal(back.observations, t.observations)
    assert np.array_equal(back.rewards, t.rewards)
    assert back.seed == t.seed


def test_policy_required_for_multi_action_env():
    with pytest.raises(ValueError):
        sample_trajectory(tmaze_env(3), None, seed=0)
    with pytest.raises(ValueError):
        sample_trajectory(tmaze_env(3), np.ones((5, 2)), seed=0)
