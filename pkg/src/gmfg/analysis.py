"""Evaluation metrics and diagnostics.

Mean-field exploitability, Monte Carlo N-player exploitability, empirical
contraction ratios of the exact composed map, point-mass fixed points and
the plug-in Lipschitz bounds d2, d3 for the population map.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .dist import invariant_distribution, l1_distance, random_simplex
from .envs.base import GMFGModel
from .envs.pricing import NPlayerPricing
from .loops import gamma_composed
from .solvers import StepSchedule, policy_evaluation, value_iteration
from .streams import kernel_seed


class MeanFieldUnsupported(RuntimeError):
    """C_MF needs an L-independent kernel; otherwise a matching term is missing."""


@dataclass(frozen=True)
class MetricConfig:
    eps0: float = 0.1
    best_response: str = "exact_vi"  # exact_vi | learned
    mc_profiles: int = 100
    br_steps: int = 100_000
    br_schedule: StepSchedule = StepSchedule("polynomial", h=0.7)
    br_epsilon: tuple = (0.1, 0.01)
    rollouts: int = 200
    rollout_tol: float = 1e-3
    wide_ci: float = 0.05

    def __post_init__(self):
        if self.eps0 <= 0:
            raise ValueError("eps0 must be positive")
        if self.best_response not in ("exact_vi", "learned"):
            raise ValueError(f"unknown best-response mode {self.best_response!r}")
        if self.mc_profiles < 1 or self.rollouts < 1 or self.br_steps < 0:
            raise ValueError("mc_profiles, rollouts must be >= 1 and br_steps >= 0")


def _normalized_gap(best, value, eps0):
    return max(0.0, (best - value) / (abs(best) + eps0))


def stationary_mean_field(model: GMFGModel, pi):
    """(mu, L) with mu invariant for P^pi and L = mu x pi."""
    if model.transition_depends_on_mean_field:
        raise MeanFieldUnsupported(
            f"{model.name}: the kernel depends on the mean field, so the stationary "
            "population is not determined by pi alone")
    P = model.kernel(model.uniform_mean_field())
    P_pi = np.einsum("sa,sat->st", pi, P)
    mu = invariant_distribution(P_pi)
    return mu, mu[:, None] * pi


def exploitability_mf(model: GMFGModel, pi, eps0: float = 0.1, tol: float = 1e-10):
    """Normalized best-response gap of pi against its own stationary mean field."""
    pi = np.asarray(pi, float)
    mu, L = stationary_mean_field(model, pi)
    mdp = model.frozen(L)
    v_star = float(mu @ value_iteration(mdp, tol=tol).V)
    v_pi = float(mu @ policy_evaluation(mdp, pi)[1])
    return _normalized_gap(v_star, v_pi, eps0)


# N-player ----------------------------------------------------------------

@dataclass
class NPlayerProfile:
    """Per-player policies over (own state, mean-action bin)."""

    policies: np.ndarray  # (N, S, B, A)
    lo: float = 0.0
    hi: float = 1.0
    bin0: int = 0  # mean-action bin assumed before the first observation

    @property
    def n_bins(self):
        return self.policies.shape[2]

    @property
    def N(self):
        return self.policies.shape[0]

    @classmethod
    def symmetric(cls, pi, N):
        pi = np.asarray(pi, float)
        return cls(np.ascontiguousarray(np.broadcast_to(pi[None, :, None, :], (N,) + pi.shape[:1]
                                                        + (1,) + pi.shape[1:])))

    def cum(self):
        c = np.cumsum(self.policies, axis=-1)
        c[..., -1] = 1.0
        return np.ascontiguousarray(c)


@dataclass
class NPlayerExploitability:
    mean: float
    se: float
    gaps: np.ndarray = field(repr=False)
    wide_ci: bool = False


def _game_args(game: NPlayerPricing):
    m = game.model
    prm = m.params
    return (game.next_table, np.ascontiguousarray(game.base_table, float), game.action_q,
            float(prm.d), float(prm.sigma), float(prm.q_floor), float(m.reward_shift),
            float(m.gamma))


def rollout_horizon(gamma, r_max, tol):
    if gamma <= 0:
        return 1
    return max(1, int(np.ceil(np.log(tol * (1 - gamma) / r_max) / np.log(gamma))))


def exploitability_n(game: NPlayerPricing, profile: NPlayerProfile, cfg: MetricConfig, rng,
                     ) -> NPlayerExploitability:
    """Monte Carlo estimate of the N-player exploitability.

    Initial profiles are drawn uniformly from S^N and one player per
    profile is probed. That player's best response against the frozen
    others is learned by async Q-learning; both values are estimated by
    rollouts under common random numbers.
    """
    if profile.N != game.N:
        raise ValueError("profile size does not match the game")
    args = _game_args(game)
    S, A = game.n_states, game.n_actions
    B = profile.n_bins
    H = rollout_horizon(game.model.gamma, game.model.r_max, cfg.rollout_tol)
    pol = profile.policies
    gaps = np.empty(cfg.mc_profiles)
    kind, h, eta = cfg.br_schedule._args()
    for j in range(cfg.mc_profiles):
        states0 = rng.integers(S, size=game.N).astype(np.int64)
        player = int(rng.integers(game.N))
        cum = profile.cum()
        Q = K.nplayer_best_response(*args, cum, states0, player, int(cfg.br_steps), kind, h, eta,
                                    0.0, float(cfg.br_epsilon[0]), float(cfg.br_epsilon[1]), B,
                                    float(profile.lo), float(profile.hi), profile.bin0,
                                    kernel_seed(rng))
        dev = pol.copy()
        dev[player] = (Q == Q.max(axis=-1, keepdims=True)).astype(float)
        dev[player] /= dev[player].sum(axis=-1, keepdims=True)
        dev_cum = np.cumsum(dev, axis=-1)
        dev_cum[..., -1] = 1.0
        seed = kernel_seed(rng)
        v_pi, _ = K.nplayer_value(*args, cum, states0, player, H, cfg.rollouts, B,
                                  float(profile.lo), float(profile.hi), profile.bin0, seed)
        v_br, _ = K.nplayer_value(*args, np.ascontiguousarray(dev_cum), states0, player, H,
                                  cfg.rollouts, B, float(profile.lo), float(profile.hi), profile.bin0,
                                  seed)
        # the profile's own policy is a candidate response
        gaps[j] = _normalized_gap(max(v_br, v_pi), v_pi, cfg.eps0)
    se = float(gaps.std(ddof=1) / np.sqrt(len(gaps))) if len(gaps) > 1 else float("inf")
    return NPlayerExploitability(float(gaps.mean()), se, gaps, se > cfg.wide_ci)


# contraction and Lipschitz diagnostics ---------------------------------------

@dataclass
class ContractionReport:
    ratios: np.ndarray
    excluded: int = 0

    @property
    def max(self):
        return float(self.ratios.max()) if self.ratios.size else 0.0

    @property
    def mean(self):
        return float(self.ratios.mean()) if self.ratios.size else 0.0

    def histogram(self, bins=20):
        top = max(self.max, 1e-12)
        return np.histogram(self.ratios, bins=bins, range=(0.0, top))


def contraction_ratio(model, L1, L2, smoothing=None):
    den = l1_distance(L1, L2)
    if den < 1e-9:
        return None
    return l1_distance(gamma_composed(model, L1, smoothing), gamma_composed(model, L2, smoothing)) / den


def contraction_report(model: GMFGModel, n_pairs: int, rng, smoothing=None) -> ContractionReport:
    """Ratios ||Gamma(L1)-Gamma(L2)||_1 / ||L1-L2||_1 for uniform random pairs."""
    n = model.n_states * model.n_actions
    ratios, excluded = [], 0
    for _ in range(n_pairs):
        L1 = random_simplex(rng, n).reshape(model.shape)
        L2 = random_simplex(rng, n).reshape(model.shape)
        r = contraction_ratio(model, L1, L2, smoothing)
        if r is None:
            excluded += 1
        else:
            ratios.append(r)
    return ContractionReport(np.array(ratios), excluded)


def point_mass_fixed_points(model: GMFGModel, smoothing=None, tol: float = 1e-12):
    """Mean fields concentrated on one (s, a) that the composed map leaves in place.

    With a deterministic kernel and argmax selection every pure stationary
    equilibrium in which all players share one state is of this form; such
    points can exist without attracting the iteration.
    """
    S, A = model.shape
    found = []
    for s in range(S):
        for a in range(A):
            L = np.zeros((S, A))
            L[s, a] = 1.0
            if l1_distance(gamma_composed(model, L, smoothing, tol=tol), L) < 1e-9:
                found.append(L)
    return found


def assumption_bounds(model: GMFGModel, sample_size: int, rng):
    """Plug-in d2 and d3 for the population map's Lipschitz constants.

    c1 is the largest transition probability seen over sampled mean fields
    and c2 the largest ratio ||P(.|s,a,L)-P(.|s,a,L')||_1 / ||L-L'||_1 over
    sampled pairs.
    """
    n = model.n_states * model.n_actions
    S, A = model.state_space, model.action_space
    c1, c2 = 0.0, 0.0
    for _ in range(sample_size):
        L1 = random_simplex(rng, n).reshape(model.shape)
        L2 = random_simplex(rng, n).reshape(model.shape)
        P1, P2 = model.kernel(L1), model.kernel(L2)
        c1 = max(c1, float(P1.max()), float(P2.max()))
        den = l1_distance(L1, L2)
        if den > 1e-12:
            c2 = max(c2, float(np.abs(P1 - P2).sum(-1).max()) / den)
    d2 = 2 * S.diam * A.diam * S.size * c1 / A.d_min
    d3 = S.diam * A.diam * c2 / 2
    return {"c1": c1, "c2": c2, "d2": d2, "d3": d3}
