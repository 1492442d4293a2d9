"""Two-state toy game: move left or right, rewarded for matching a target law."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dist import FiniteSpace, marginals, w2_two_point
from .base import GMFGModel

LEFT, RIGHT = 0, 1


@dataclass(frozen=True)
class ToyParams:
    p: float = 0.5
    gamma: float = 0.5

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")


class ToyModel(GMFGModel):
    name = "toy"
    transition_depends_on_mean_field = False

    def __init__(self, params: ToyParams = ToyParams()):
        self.params = params
        self.gamma = params.gamma
        self.target = np.array([1 - params.p, params.p])
        self.state_space = FiniteSpace.grid(2)
        self.action_space = FiniteSpace.grid(2)
        P = np.zeros((2, 2, 2))
        P[:, LEFT, 0] = 1.0
        P[:, RIGHT, 1] = 1.0
        self._P = P
        # each W2 term is at most 1
        self.reward_shift = 2.0
        self.r_max = 2.0

    def kernel(self, L=None):
        return self._P

    def conditional_actions(self, L):
        """beta(s, .) = L(s, .)/mu(s), with (1/2, 1/2) where mu(s) = 0."""
        L = np.asarray(L, dtype=float)
        mu, _ = marginals(L)
        beta = np.full((2, 2), 0.5)
        pos = mu > 0
        beta[pos] = L[pos] / mu[pos, None]
        return beta

    def raw_reward_mean(self, L):
        mu, _ = marginals(L)
        beta = self.conditional_actions(L)
        per_state = np.array([-w2_two_point(mu, self.target) - w2_two_point(beta[s], self.target)
                              for s in range(2)])
        return np.repeat(per_state[:, None], 2, axis=1)

    def step(self, s, a, L, rng=None, raw=False):
        r = float(self.raw_reward_mean(L)[s, a])
        return int(a), r if raw else r + self.reward_shift

    def summary(self, L) -> dict:
        mu, alpha = marginals(L)
        return {"mass_state1": float(mu[1]), "mass_action1": float(alpha[1])}

    def equilibrium(self):
        """The analytic stationary solution (mu*, pi*, L*)."""
        mu = self.target.copy()
        pi = np.tile(self.target, (2, 1))
        return mu, pi, mu[:, None] * pi
