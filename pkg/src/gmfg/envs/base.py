"""The model contract shared by every environment, and the simulators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dist import FiniteSpace, as_mean_field, as_policy, marginals


class InvalidAction(ValueError):
    pass


class InvalidInput(ValueError):
    pass


@dataclass(frozen=True)
class Outcomes:
    """Finite joint law of (next state, reward) for every (s, a).

    Arrays have shape (S, A, K); ``prob`` rows sum to one. Rewards are
    already shifted into [0, r_max].
    """

    next_state: np.ndarray
    reward: np.ndarray
    prob: np.ndarray

    @property
    def cum(self):
        c = np.cumsum(self.prob, axis=-1)
        c[..., -1] = 1.0
        return c


class FrozenMDP:
    """The single-agent MDP obtained by freezing the mean field at L."""

    def __init__(self, P, R, gamma, r_max, outcomes=None):
        self.P = np.asarray(P, dtype=float)
        self.R = np.asarray(R, dtype=float)
        self.gamma = float(gamma)
        self.r_max = float(r_max)
        if outcomes is None:
            outcomes = outcomes_from_kernel(self.P, self.R)
        self.outcomes = outcomes
        self._cum = outcomes.cum

    @property
    def n_states(self):
        return self.P.shape[0]

    @property
    def n_actions(self):
        return self.P.shape[1]

    @property
    def v_max(self):
        return self.r_max / (1 - self.gamma)

    @property
    def deterministic(self):
        return self.outcomes.prob.shape[-1] == 1

    def sample(self, s, a, rng):
        """One (s', r) draw."""
        if self.deterministic:
            k = 0
        else:
            k = int(np.searchsorted(self._cum[s, a], rng.random(), side="right"))
            k = min(k, self._cum.shape[-1] - 1)
        return int(self.outcomes.next_state[s, a, k]), float(self.outcomes.reward[s, a, k])

    def policy_kernel(self, pi):
        """State-to-state matrix P^pi."""
        return np.einsum("sa,sat->st", pi, self.P)


def outcomes_from_kernel(P, R):
    """Outcome tables for a kernel with deterministic mean rewards."""
    S, A, _ = P.shape
    if np.all(P.max(-1) == 1.0):
        nxt = P.argmax(-1)[..., None]
        return Outcomes(nxt, np.asarray(R, float)[..., None], np.ones((S, A, 1)))
    nxt = np.broadcast_to(np.arange(S), (S, A, S)).copy()
    rew = np.broadcast_to(np.asarray(R, float)[..., None], (S, A, S)).copy()
    return Outcomes(nxt, rew, P.copy())


class GMFGModel:
    """Base class for the environments.

    Subclasses implement ``kernel(L)`` (shape S x A x S) and
    ``raw_reward_mean(L)`` and set ``reward_shift`` / ``r_max``. Rewards
    seen by learners are ``raw + reward_shift`` and lie in [0, r_max].
    """

    state_space: FiniteSpace
    action_space: FiniteSpace
    gamma: float
    reward_shift: float
    r_max: float
    transition_depends_on_mean_field = True
    name = "model"

    @property
    def n_states(self):
        return self.state_space.size

    @property
    def n_actions(self):
        return self.action_space.size

    @property
    def shape(self):
        return (self.n_states, self.n_actions)

    @property
    def v_max(self):
        return self.r_max / (1 - self.gamma)

    def kernel(self, L):
        raise NotImplementedError

    def raw_reward_mean(self, L):
        raise NotImplementedError

    def reward_mean(self, L):
        return self.raw_reward_mean(L) + self.reward_shift

    def outcomes(self, L):
        return outcomes_from_kernel(self.kernel(L), self.reward_mean(L))

    def frozen(self, L) -> FrozenMDP:
        L = as_mean_field(L, self.shape)
        return FrozenMDP(self.kernel(L), self.reward_mean(L), self.gamma, self.r_max,
                         self.outcomes(L))

    def transition(self, s, a, L):
        return self.kernel(L)[s, a]

    def reward_sample(self, s, a, L, rng):
        out = self.outcomes(L)
        k = rng.choice(out.prob.shape[-1], p=out.prob[s, a])
        return float(out.reward[s, a, k])

    def uniform_mean_field(self):
        return np.full(self.shape, 1.0 / (self.n_states * self.n_actions))

    def summary(self, L) -> dict:
        """Environment-specific scalars recorded along runs."""
        return {}


def population_step(model: GMFGModel, pi, L):
    """Exact one-step population map: L'(s',a') = mu'(s') pi(a'|s')."""
    L = as_mean_field(L, model.shape)
    pi = as_policy(pi, model.shape)
    mu, _ = marginals(L)
    mu_next = np.einsum("s,sa,sat->t", mu, pi, model.kernel(L))
    mu_next = np.clip(mu_next, 0, None)
    mu_next /= mu_next.sum()
    return mu_next[:, None] * pi


def strong_simulate(model: GMFGModel, s, pi, L, rng):
    """The strong oracle G: (s', r, L') with L' computed exactly."""
    pi = as_policy(pi, model.shape)
    a = int(rng.choice(model.n_actions, p=pi[s]))
    out = model.outcomes(L)
    k = int(rng.choice(out.prob.shape[-1], p=out.prob[s, a]))
    return int(out.next_state[s, a, k]), float(out.reward[s, a, k]), population_step(model, pi, L)


def is_empirical(L, N, atol=1e-9):
    L = np.asarray(L, dtype=float)
    counts = L * N
    return bool(np.all(np.abs(counts - np.round(counts)) <= atol * N)
                and np.all(counts > -atol) and abs(L.sum() - 1) <= atol)


def weak_simulate(model: GMFGModel, s, pi, L_N, N, rng):
    """The weak oracle G_W: one agent-level (s', r), no population output."""
    if not is_empirical(L_N, N):
        raise InvalidInput(f"mean field is not an empirical distribution of {N} players")
    pi = as_policy(pi, model.shape)
    a = int(rng.choice(model.n_actions, p=pi[s]))
    out = model.outcomes(L_N)
    k = int(rng.choice(out.prob.shape[-1], p=out.prob[s, a]))
    return int(out.next_state[s, a, k]), float(out.reward[s, a, k])
