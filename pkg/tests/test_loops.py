import itertools

import numpy as np
import pytest

from gmfg.dist import l1_distance, marginals, tv_distance
from gmfg.envs import PricingModel, PricingParams, ToyModel, ToyParams, population_step
from gmfg.loops import (LoopConfig, gamma1_exact, gamma2_exact, gamma_composed, gmf_naive,
                        gmf_p, gmf_v, gmf_weak, iterate_gamma, smoothed_fixed_point,
                        snap_to_empirical, weak_population_step)
from gmfg.smooth import EpsNetConfig, SmoothingConfig, argmax_e
from gmfg.solvers import policy_evaluation

from _models import RandomModel, random_L, random_pi

EXACT = LoopConfig(K=5, eps_net=None, smoothing=SmoothingConfig("argmax_e"),
                   record_exploitability=False)


# exact maps ------------------------------------------------------------------

def test_gamma1_toy_equilibrium():
    m = ToyModel()
    _, pi_star, L_star = m.equilibrium()
    assert np.allclose(gamma1_exact(m, L_star), pi_star)
    assert np.allclose(gamma2_exact(m, pi_star, L_star), L_star)
    assert np.allclose(gamma_composed(m, L_star), L_star)


def test_gamma1_uniform_when_reward_ignores_action():
    rng = np.random.default_rng(0)
    m = RandomModel(4, 3, rng)
    m._P[:] = m._P[:, :1, :]
    m._R[:] = m._R[:, :1]
    assert np.allclose(gamma1_exact(m, random_L(rng, m)), 1 / 3)


def test_gamma1_pricing_matches_enumeration():
    m = PricingModel(PricingParams(S=3, Q=3, H=1))
    L = m.uniform_mean_field()
    mdp = m.frozen(L)
    S, A = m.shape
    # best deterministic policy by enumeration; unique for this instance
    best, best_v = None, -np.inf
    for acts in itertools.product(range(A), repeat=S):
        pi = np.eye(A)[list(acts)]
        v = policy_evaluation(mdp, pi)[1]
        if best is None or np.all(v >= best_v - 1e-12) and np.any(v > best_v + 1e-12):
            best, best_v = pi, v
    assert np.array_equal(gamma1_exact(m, L), best)


def test_gamma2_absorbing_state():
    rng = np.random.default_rng(1)
    m = RandomModel(3, 2, rng)
    m._P[:] = 0
    m._P[..., 0] = 1
    out = gamma2_exact(m, random_pi(rng, m), random_L(rng, m))
    assert np.allclose(marginals(out)[0], [1, 0, 0])


def test_iterate_gamma_records_steps():
    m = ToyModel(ToyParams(p=0.5))
    traj, steps = iterate_gamma(m, K=3)
    assert len(traj) == 4 and len(steps) == 3
    assert steps == [l1_distance(a, b) for a, b in zip(traj[1:], traj[:-1])]


def test_smoothed_fixed_point_is_fixed():
    m = PricingModel()
    sm = SmoothingConfig("softmax_c", c=4.0)
    L = smoothed_fixed_point(m, sm)
    assert l1_distance(gamma_composed(m, L, sm), L) < 1e-9


# loops -----------------------------------------------------------------------

def test_zero_iterations_return_initial_mean_field():
    m = ToyModel()
    rec = gmf_v(m, EXACT.with_(K=0), inner="exact")
    assert len(rec.L) == 1 and rec.K == 0
    assert np.array_equal(rec.final_L, m.uniform_mean_field())


def test_gmf_v_exact_toy_converges():
    m = ToyModel()
    rec = gmf_v(m, EXACT.with_(K=3), inner="exact")
    _, _, L_star = m.equilibrium()
    assert l1_distance(rec.final_L, L_star) < 1e-12


def test_gmf_p_exact_matches_gmf_v_exact():
    m = PricingModel()
    cfg = LoopConfig(K=6, evaluation="exact", vi_tol=1e-12, record_exploitability=False)
    rv = gmf_v(m, cfg, inner="exact")
    rp = gmf_p(m, cfg, inner="exact")
    for a, b in zip(rv.L, rp.L):
        assert np.allclose(a, b, atol=1e-9)


def test_naive_exact_on_contractive_map():
    # the policy is constant, so Gamma is the chain step mu -> mu P^pi
    rng = np.random.default_rng(2)
    m = RandomModel(4, 3, rng)
    rec = gmf_naive(m, EXACT.with_(K=60), inner="exact")
    assert rec.delta[-1] < 1e-8
    assert all(np.array_equal(p, rec.pi[0]) for p in rec.pi)


def test_gmf_v_q_learning_is_reproducible():
    m = ToyModel()
    cfg = LoopConfig(K=2, seed=3, record_exploitability=False)
    a, b = gmf_v(m, cfg), gmf_v(m, cfg)
    assert all(np.array_equal(x, y) for x, y in zip(a.L, b.L))


def test_projection_keeps_iterates_on_grid():
    m = PricingModel()
    rec = gmf_v(m, LoopConfig(K=2, record_exploitability=False), inner="exact")
    for L in rec.L:
        units = L * 10**4
        assert np.allclose(units, np.round(units), atol=1e-6)
        assert int(np.round(units).sum()) == 10**4


# weak loops ------------------------------------------------------------------

def test_weak_single_player_is_point_mass():
    m = PricingModel()
    rec = gmf_weak(m, LoopConfig(K=3, N=1, record_exploitability=False), inner="exact")
    for L in rec.L[1:]:
        assert np.sort(L.ravel())[-1] == 1.0
    assert rec.notes  # uniform L0 is not in Emp_1


def test_weak_step_is_unbiased():
    rng = np.random.default_rng(4)
    m = RandomModel(3, 2, rng)
    L, pi = snap_to_empirical(random_L(rng, m), 10), random_pi(rng, m)
    draws = [weak_population_step(m, pi, L, 10, rng) for _ in range(10**4)]
    assert tv_distance(np.mean(draws, axis=0), population_step(m, pi, L)) <= 0.02


def test_weak_step_concentrates():
    rng = np.random.default_rng(5)
    m = RandomModel(3, 2, rng)
    L, pi = random_L(rng, m), random_pi(rng, m)
    target = population_step(m, pi, L)
    err = {N: np.mean([l1_distance(weak_population_step(m, pi, L, N, rng), target)
                       for _ in range(200)]) for N in (20, 2000)}
    # the error shrinks roughly like 1/sqrt(N)
    assert err[2000] < err[20] / 5


def test_snap_to_empirical():
    L = np.array([[0.33, 0.17], [0.25, 0.25]])
    out = snap_to_empirical(L, 4)
    assert np.allclose(out * 4, np.round(out * 4)) and out.sum() == pytest.approx(1)
    assert l1_distance(out, L) <= 4 * 0.25


def test_loop_config_errors():
    with pytest.raises(ValueError):
        LoopConfig(K=-1)
    with pytest.raises(ValueError):
        LoopConfig(evaluation="mc")
    with pytest.raises(ValueError):
        gmf_weak(ToyModel(), LoopConfig(K=1))


def test_eps_net_config_reaches_loop():
    m = ToyModel()
    rec = gmf_v(m, EXACT.with_(K=1, eps_net=EpsNetConfig(1)), inner="exact")
    assert np.allclose(rec.final_L * 10, np.round(rec.final_L * 10))
