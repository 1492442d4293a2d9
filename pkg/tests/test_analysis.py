import itertools

import numpy as np
import pytest

from gmfg.analysis import (MeanFieldUnsupported, MetricConfig, NPlayerProfile, assumption_bounds,
                           contraction_ratio, contraction_report, exploitability_mf,
                           exploitability_n, point_mass_fixed_points, stationary_mean_field)
from gmfg.envs import (AuctionModel, AuctionParams, FrozenMDP, NPlayerPricing, PricingModel,
                       PricingParams, ToyModel, ToyParams, clearing_price)
from gmfg.loops import iterate_gamma, smoothed_fixed_point
from gmfg.smooth import SmoothingConfig
from gmfg.solvers import policy_evaluation, value_iteration

from _models import RandomModel

SMALL = PricingParams(S=2, Q=2, H=2)


# mean-field exploitability ---------------------------------------------------

@pytest.mark.parametrize("p", [0.5, 0.3])
def test_exploitability_zero_at_toy_equilibrium(p):
    m = ToyModel(ToyParams(p=p))
    _, pi, L = m.equilibrium()
    mu, L2 = stationary_mean_field(m, pi)
    assert np.allclose(L2, L)
    assert exploitability_mf(m, pi) < 1e-6


def test_exploitability_orders_pricing_policies():
    m = PricingModel()
    sm = SmoothingConfig("softmax_c", c=4.0)
    L = smoothed_fixed_point(m, sm)
    pi_fp = sm(value_iteration(m.frozen(L), tol=1e-12).Q)
    rng = np.random.default_rng(0)
    for _ in range(5):
        pi_rand = rng.dirichlet(np.ones(m.n_actions), size=m.n_states)
        assert exploitability_mf(m, pi_rand) > exploitability_mf(m, pi_fp) > 0


def test_exploitability_matches_direct_formula():
    rng = np.random.default_rng(1)
    m = RandomModel(4, 3, rng)
    pi = rng.dirichlet(np.ones(3), size=4)
    P_pi = np.einsum("sa,sat->st", pi, m._P)
    w, v = np.linalg.eig(P_pi.T)
    mu = np.real(v[:, np.argmin(np.abs(w - 1))])
    mu /= mu.sum()
    mdp = m.frozen(mu[:, None] * pi)
    v_star = mu @ value_iteration(mdp, tol=1e-12).V
    v_pi = mu @ policy_evaluation(mdp, pi)[1]
    ref = (v_star - v_pi) / (abs(v_star) + 0.1)
    assert exploitability_mf(m, pi) == pytest.approx(ref, abs=1e-9)


def test_exploitability_unsupported_for_auction():
    m = AuctionModel(AuctionParams(s_max=4, a_max=3, M=2))
    with pytest.raises(MeanFieldUnsupported):
        exploitability_mf(m, np.full(m.shape, 1 / m.n_actions))


# N-player exploitability -----------------------------------------------------

def single_agent_gaps(model, pi, eps0):
    """Exact normalized gap per initial state when a lone firm sets the price."""
    prm = model.params
    price = np.array([clearing_price(q, prm.d, prm.sigma, prm.q_floor) for q in model.action_q])
    R = model._base + price[None] * model.action_q[None] + model.reward_shift
    mdp = FrozenMDP(model.kernel(), R, model.gamma, model.r_max)
    v_star = value_iteration(mdp, tol=1e-12).V
    v_pi = policy_evaluation(mdp, pi)[1]
    return np.maximum(0, (v_star - v_pi) / (np.abs(v_star) + eps0))


def test_single_player_exploitability_matches_exact():
    m = PricingModel(PricingParams(S=3, Q=3, H=2))
    game = NPlayerPricing(m, 1)
    rng = np.random.default_rng(2)
    pi = np.eye(m.n_actions)[rng.integers(m.n_actions, size=m.n_states)]
    cfg = MetricConfig(mc_profiles=120, br_steps=20_000, rollouts=1)
    res = exploitability_n(game, NPlayerProfile.symmetric(pi, 1), cfg, rng)
    ref = single_agent_gaps(m, pi, cfg.eps0).mean()
    assert ref > 0.01
    assert abs(res.mean - ref) <= 4 * res.se + 1e-3


def pure_equilibria(model):
    """Own-state deterministic pairs that no player can improve on from any joint state,
    even with policies that see the joint state."""
    S, A = model.shape
    prm = model.params
    q = model.action_q
    nxt = model._next
    gamma = model.gamma
    joint = list(itertools.product(range(S), range(S)))

    def reward(i, s, a):
        p = clearing_price((q[a[0]] + q[a[1]]) / 2, prm.d, prm.sigma, prm.q_floor)
        return model._base[s[i], a[i]] + p * q[a[i]]

    found = []
    pols = list(itertools.product(range(A), repeat=S))
    for pol in itertools.product(pols, pols):
        ok = True
        for i in (0, 1):
            j = 1 - i
            # values under the profile and under the best joint-state reply
            V_pi = np.zeros(len(joint))
            V_br = np.zeros(len(joint))
            for _ in range(400):
                new_pi, new_br = np.empty_like(V_pi), np.empty_like(V_br)
                for k, s in enumerate(joint):
                    a = [pol[0][s[0]], pol[1][s[1]]]
                    s2 = tuple(nxt[s[n], a[n]] for n in (0, 1))
                    new_pi[k] = reward(i, s, a) + gamma * V_pi[joint.index(s2)]
                    best = -np.inf
                    for ai in range(A):
                        b = list(a)
                        b[i] = ai
                        s2 = tuple(nxt[s[n], b[n]] for n in (0, 1))
                        best = max(best, reward(i, s, b) + gamma * V_br[joint.index(s2)])
                    new_br[k] = best
                V_pi, V_br = new_pi, new_br
            if np.any(V_br > V_pi + 1e-9):
                ok = False
                break
        if ok:
            found.append(pol)
    return found


def test_equilibrium_profile_has_no_gap():
    m = PricingModel(SMALL)
    eqs = pure_equilibria(m)
    assert eqs, "the small game has a pure equilibrium"
    pol = eqs[0]
    eye = np.eye(m.n_actions)
    policies = np.stack([eye[list(p)][:, None, :] for p in pol])
    profile = NPlayerProfile(policies)
    res = exploitability_n(NPlayerPricing(m, 2), profile,
                           MetricConfig(mc_profiles=30, br_steps=20_000, rollouts=1),
                           np.random.default_rng(3))
    assert res.mean < 1e-9


def test_exploitability_n_input_checks():
    m = PricingModel(SMALL)
    with pytest.raises(ValueError):
        exploitability_n(NPlayerPricing(m, 3), NPlayerProfile.symmetric(np.full(m.shape, 0.25), 2),
                         MetricConfig(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        MetricConfig(eps0=0)
    with pytest.raises(ValueError):
        MetricConfig(mc_profiles=0)


# contraction and bounds ------------------------------------------------------

def test_contraction_excludes_identical_pairs():
    m = ToyModel()
    L = m.uniform_mean_field()
    assert contraction_ratio(m, L, L) is None


def test_constant_map_has_zero_ratios():
    rng = np.random.default_rng(4)
    m = RandomModel(3, 2, rng)
    m._P[:] = m._P[0, 0]  # next state ignores (s, a)
    rep = contraction_report(m, 200, rng)
    assert rep.ratios.size == 200 and rep.max < 1e-12


def test_contraction_report_toy():
    m = ToyModel(ToyParams(p=0.3))
    rep = contraction_report(m, 100, np.random.default_rng(5))
    assert rep.ratios.size + rep.excluded == 100
    counts, _ = rep.histogram(10)
    assert counts.sum() == rep.ratios.size


def test_assumption_bounds():
    rng = np.random.default_rng(6)
    b = assumption_bounds(PricingModel(SMALL), 50, rng)
    assert b["c1"] == 1 and b["c2"] == 0 and b["d3"] == 0
    b = assumption_bounds(ToyModel(), 50, rng)
    assert b["c1"] == 1 and b["c2"] == 0 and b["d3"] == 0
    assert b["d2"] == pytest.approx(2 * 1 * 1 * 2 * 1 / 1)
    b = assumption_bounds(AuctionModel(AuctionParams(s_max=4, a_max=3, M=2)), 50, rng)
    assert b["c2"] > 0 and b["d3"] > 0


def test_point_mass_fixed_points_pricing():
    m = PricingModel(PricingParams(sigma=1.3))
    fps = point_mass_fixed_points(m)
    # plain iteration from uniform settles on the same point at this elasticity
    traj, steps = iterate_gamma(m, K=40)
    assert steps[-1] == 0
    assert len(fps) == 1 and np.array_equal(fps[0], traj[-1])


def test_point_mass_fixed_points_toy():
    # corners are swapped by the argmax map, never fixed
    assert point_mass_fixed_points(ToyModel()) == []
