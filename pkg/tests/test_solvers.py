import itertools

import numpy as np
import pytest

from gmfg.dist import random_simplex, tv_distance
from gmfg.envs import FrozenMDP, PricingModel
from gmfg.smooth import argmax_e
from gmfg.solvers import (SolverConfigError, StepSchedule, TrpoConfig, occupancy_sample,
                          policy_evaluation, project_simplex, q_learning_async, q_learning_sync,
                          td_evaluate, trpo_solve, trpo_update, value_iteration)
from gmfg.streams import stream

POLY = StepSchedule("polynomial", h=0.7)


def random_mdp(rng, S, A, gamma, deterministic=False):
    if deterministic:
        P = np.zeros((S, A, S))
        P[np.arange(S)[:, None], np.arange(A)[None], rng.integers(S, size=(S, A))] = 1
    else:
        P = random_simplex(rng, S, size=(S, A))
    return FrozenMDP(P, rng.uniform(size=(S, A)), gamma, 1.0)


def linear_q(mdp, pi):
    """Oracle Q^pi from the truncated Neumann series sum_t gamma^t (P^pi)^t r_pi."""
    S = mdp.n_states
    P_pi = np.einsum("sa,sat->st", pi, mdp.P)
    r_pi = (pi * mdp.R).sum(1)
    V, term = np.zeros(S), r_pi.copy()
    for _ in range(2000):
        V += term
        term = mdp.gamma * P_pi @ term
    return mdp.R + mdp.gamma * mdp.P @ V


def enumerate_optimum(mdp):
    """Q* by brute force over all deterministic stationary policies."""
    S, A = mdp.n_states, mdp.n_actions
    best = None
    for acts in itertools.product(range(A), repeat=S):
        pi = np.eye(A)[list(acts)]
        Q = linear_q(mdp, pi)
        best = Q if best is None else np.maximum(best, Q)
    return best


def success_rate(fn, seeds=20):
    return np.mean([fn(stream(1234, "solver-test", i)) for i in range(seeds)])


# exact -------------------------------------------------------------------

def test_value_iteration_zero_and_single_state():
    mdp = FrozenMDP(np.ones((1, 3, 1)), np.zeros((1, 3)), 0.9, 1.0)
    assert np.allclose(value_iteration(mdp).Q, 0)
    r = np.array([[0.2, 0.7, 0.5]])
    mdp = FrozenMDP(np.ones((1, 3, 1)), r, 0.9, 1.0)
    Q = value_iteration(mdp, tol=1e-10).Q
    assert np.allclose(Q, r + 0.9 * 0.7 / 0.1, atol=1e-9)


def test_value_iteration_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(20):
        mdp = random_mdp(rng, 2, 2, 0.8)
        assert np.abs(value_iteration(mdp, tol=1e-9).Q - enumerate_optimum(mdp)).max() <= 1e-9


def test_value_iteration_residuals_contract():
    rng = np.random.default_rng(1)
    mdp = random_mdp(rng, 6, 3, 0.9)
    res = np.array(value_iteration(mdp, tol=1e-10).residuals)
    res = res[res > 1e-13]
    assert np.all(res[1:] <= 0.9 * res[:-1] + 1e-13)


def test_policy_evaluation_matches_series():
    rng = np.random.default_rng(2)
    mdp = random_mdp(rng, 5, 3, 0.7)
    pi = random_simplex(rng, 3, size=5)
    Q, V = policy_evaluation(mdp, pi)
    assert np.allclose(Q, linear_q(mdp, pi))
    assert np.allclose(V, (pi * Q).sum(1))


# Q-learning ------------------------------------------------------------------

def test_sync_q_one_backup():
    rng = np.random.default_rng(3)
    mdp = random_mdp(rng, 4, 3, 0.5, deterministic=True)
    Q = q_learning_sync(mdp, 1, StepSchedule("constant", eta=1.0), rng, C=0.0)
    assert np.allclose(Q, mdp.R)


def test_sync_q_matches_value_iteration():
    def trial(rng):
        mdp = random_mdp(np.random.default_rng(7), 5, 4, 0.7)
        Q = q_learning_sync(mdp, 10**5, POLY, rng)
        return np.abs(Q - value_iteration(mdp).Q).max() <= 0.05 * mdp.v_max
    assert success_rate(trial) >= 0.95


def test_sync_q_stays_bounded():
    rng = np.random.default_rng(4)
    mdp = random_mdp(rng, 5, 4, 0.9)
    for C in (0.0, 3.0):
        Q = q_learning_sync(mdp, 2000, StepSchedule("constant", eta=0.3), rng, C=C)
        assert Q.min() >= min(C, 0) - 1e-12 and Q.max() <= mdp.v_max + max(C, 0) + 1e-12


def test_sync_q_greedy_on_pricing():
    m = PricingModel()
    mdp = m.frozen(m.uniform_mean_field())
    Q = q_learning_sync(mdp, None, StepSchedule("constant", eta=0.01), np.random.default_rng(5))
    Qs = value_iteration(mdp).Q
    agree = np.mean(Q.argmax(1) == Qs.argmax(1))
    assert agree >= 0.9


def test_async_q_accounting():
    rng = np.random.default_rng(6)
    mdp = random_mdp(rng, 3, 2, 0.5)
    Q, counts = q_learning_async(mdp, 0, POLY, rng, C=2.5)
    assert np.all(Q == 2.5) and counts.sum() == 0
    Q, counts = q_learning_async(mdp, 12345, POLY, rng)
    assert counts.sum() == 12345


def test_async_q_matches_value_iteration():
    def trial(rng):
        mdp = random_mdp(np.random.default_rng(8), 3, 2, 0.6)
        Q, _ = q_learning_async(mdp, 5 * 10**5, POLY, rng, epsilon=0.3)
        return np.abs(Q - value_iteration(mdp).Q).max() <= 0.1 * mdp.v_max
    assert success_rate(trial) >= 0.95


# TD --------------------------------------------------------------------------

def test_td_zero_rewards():
    rng = np.random.default_rng(9)
    mdp = random_mdp(rng, 3, 2, 0.5)
    mdp = FrozenMDP(mdp.P, np.zeros_like(mdp.R), 0.5, 1.0)
    pi = random_simplex(rng, 2, size=3)
    assert np.allclose(td_evaluate(mdp, pi, 1000, POLY, rng), 0)


def test_td_matches_linear_solve():
    mdp = random_mdp(np.random.default_rng(10), 2, 2, 0.7)
    pi = np.array([[0.3, 0.7], [0.6, 0.4]])
    ref = linear_q(mdp, pi)

    def trial(rng):
        return np.abs(td_evaluate(mdp, pi, 10**5, POLY, rng) - ref).max() <= 0.05 * mdp.v_max
    assert success_rate(trial) >= 0.95


def test_td_of_greedy_policy_recovers_q_star():
    mdp = random_mdp(np.random.default_rng(11), 3, 2, 0.7)
    Qs = value_iteration(mdp).Q
    pi = argmax_e(Qs)

    def trial(rng):
        return np.abs(td_evaluate(mdp, pi, 10**5, POLY, rng) - Qs).max() <= 0.05 * mdp.v_max
    assert success_rate(trial) >= 0.95


# occupancy -------------------------------------------------------------------

def test_occupancy_limits():
    rng = np.random.default_rng(12)
    nu = np.array([0.2, 0.5, 0.3])
    mdp = random_mdp(rng, 3, 2, 1e-9)
    pi = random_simplex(rng, 2, size=3)
    draws = occupancy_sample(mdp, pi, nu, rng, size=10**5)
    assert tv_distance(np.bincount(draws, minlength=3) / draws.size, nu) <= 0.01
    ident = FrozenMDP(np.tile(np.eye(3)[:, None, :], (1, 2, 1)), np.zeros((3, 2)), 0.9, 1.0)
    draws = occupancy_sample(ident, pi, nu, rng, size=10**5)
    assert tv_distance(np.bincount(draws, minlength=3) / draws.size, nu) <= 0.01


def test_occupancy_matches_linear_algebra():
    rng = np.random.default_rng(13)
    mdp = random_mdp(rng, 2, 2, 0.8)
    pi = np.array([[0.5, 0.5], [0.1, 0.9]])
    nu = np.array([0.7, 0.3])
    P_pi = np.einsum("sa,sat->st", pi, mdp.P)
    ref = 0.2 * nu @ np.linalg.inv(np.eye(2) - 0.8 * P_pi)
    draws = occupancy_sample(mdp, pi, nu, rng, size=10**6)
    assert tv_distance(np.bincount(draws, minlength=2) / draws.size, ref) <= 0.01


# TRPO ------------------------------------------------------------------------

def test_project_simplex_against_bisection():
    rng = np.random.default_rng(14)
    V = rng.normal(scale=2, size=(200, 5))
    P = project_simplex(V)
    for v, p in zip(V, P):
        lo, hi = v.min() - 1, v.max()
        for _ in range(200):
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if np.maximum(v - mid, 0).sum() > 1 else (lo, mid)
        assert np.allclose(p, np.maximum(v - lo, 0), atol=1e-9)


def test_trpo_kl_update_closed_form():
    pi = np.array([[0.5, 0.5], [0.2, 0.8]])
    new = trpo_update(pi, np.array([0, 0]), np.array([0, 1]), np.array([1.0, 3.0]), 0.1, 0.5)
    g = np.array([2 * 1.0 / 0.5, 2 * 3.0 / 0.5]) / 2
    w = pi[0] * np.exp(0.1 * 0.5 * g)
    assert np.allclose(new[0], w / w.sum())
    assert np.array_equal(new[1], pi[1])


def test_trpo_single_action():
    rng = np.random.default_rng(15)
    mdp = random_mdp(rng, 3, 1, 0.5)
    res = trpo_solve(mdp, TrpoConfig(episodes=5, m0=8), rng)
    assert np.array_equal(res.policy, np.ones((3, 1)))


def test_trpo_small_mdp():
    mdp = random_mdp(np.random.default_rng(16), 2, 2, 0.2)
    v_star = value_iteration(mdp).V.mean()

    def trial(rng):
        res = trpo_solve(mdp, TrpoConfig(episodes=200, m0=64), rng)
        return v_star - res.best_value <= 0.05 * mdp.v_max
    assert success_rate(trial) >= 0.95


def test_trpo_pricing():
    m = PricingModel()
    mdp = m.frozen(m.uniform_mean_field())
    res = trpo_solve(mdp, TrpoConfig(episodes=1000, m0=256, step_scale=10.0),
                     np.random.default_rng(17))
    v_pi = policy_evaluation(mdp, res.policy)[1].mean()
    assert value_iteration(mdp).V.mean() - v_pi <= 0.1 * mdp.v_max


def test_trpo_horizon_bias():
    cfg = TrpoConfig(rollout_tol=1e-2)
    H = cfg.horizon(0.9, 1.0)
    assert 0.9**H / (1 - 0.9) <= 1e-2 < 0.9 ** (H - 1) / (1 - 0.9)


def test_config_errors():
    with pytest.raises(SolverConfigError):
        StepSchedule("polynomial", h=0.4)
    with pytest.raises(SolverConfigError):
        StepSchedule("cosine")
    with pytest.raises(SolverConfigError):
        TrpoConfig(bregman="hellinger")
    with pytest.raises(SolverConfigError):
        TrpoConfig(restart=(0.0, 1.0))
