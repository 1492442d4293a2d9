"""Equilibrium pricing with inventories: the mean-field model and its N-player version.

A firm holds inventory ``s`` of raw material, produces ``q`` and
replenishes ``h``. The market price clears average production against the
demand curve ``d p^-sigma``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..dist import DimensionError, FiniteSpace, marginals
from .base import GMFGModel, InvalidAction


@dataclass(frozen=True)
class PricingParams:
    S: int = 10  # number of inventory levels, states 0..S-1
    Q: int = 10  # production grid 1..Q
    H: int = 10  # replenishment grid 0..H-1
    d: float = 50.0
    sigma: float = 2.0
    c0: float = 0.5
    c1: float = 0.1
    c2: float = 0.5
    c3: float = 0.2
    c4: float = 0.2
    gamma: float = 0.2
    q_floor: float = 0.01

    def __post_init__(self):
        if min(self.S, self.Q, self.H) < 1:
            raise ValueError("S, Q, H must be positive")
        if self.d <= 0 or self.sigma <= 0:
            raise ValueError("d and sigma must be positive")
        if min(self.c0, self.c1, self.c2, self.c3, self.c4) < 0:
            raise ValueError("costs must be nonnegative")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")

    def with_(self, **kw):
        return replace(self, **kw)


def clearing_price(mean_q, d, sigma, q_floor=0.01):
    """Price solving mean production = d p^-sigma, with a supply floor."""
    return (d / max(float(mean_q), q_floor)) ** (1.0 / sigma)


def pricing_reward(s, q, h, p, prm: PricingParams):
    """Raw one-period profit (vectorises over numpy inputs)."""
    return ((p - prm.c0) * q - prm.c1 * q**2 - prm.c2 * h
            - (prm.c2 + prm.c3) * np.maximum(q - s, 0) - prm.c4 * s)


def inventory_next(s, q, h, s_cap):
    return np.minimum(s - np.minimum(q, s) + h, s_cap)


class PricingModel(GMFGModel):
    name = "pricing"
    transition_depends_on_mean_field = False

    def __init__(self, params: PricingParams = PricingParams()):
        self.params = prm = params
        self.gamma = prm.gamma
        self.q_values = np.arange(1, prm.Q + 1)
        self.h_values = np.arange(0, prm.H)
        qq, hh = np.meshgrid(self.q_values, self.h_values, indexing="ij")
        self.action_q = qq.ravel()
        self.action_h = hh.ravel()
        self.state_space = FiniteSpace.grid(prm.S)
        self.action_space = FiniteSpace(np.stack([self.action_q, self.action_h], 1))
        s = np.arange(prm.S)[:, None]
        self._next = inventory_next(s, self.action_q[None], self.action_h[None], prm.S - 1)
        P = np.zeros((prm.S, self.n_actions, prm.S))
        np.put_along_axis(P, self._next[..., None], 1.0, axis=-1)
        self._P = P
        # raw reward = base + p * q, linear in the price
        self._base = pricing_reward(s, self.action_q[None], self.action_h[None], 0.0, prm)
        p_lo = clearing_price(self.action_q.max(), prm.d, prm.sigma, prm.q_floor)
        p_hi = clearing_price(self.action_q.min(), prm.d, prm.sigma, prm.q_floor)
        lo = min(self._raw(p_lo).min(), self._raw(p_hi).min())
        hi = max(self._raw(p_lo).max(), self._raw(p_hi).max())
        self.price_bounds = (p_lo, p_hi)
        self.reward_shift = max(0.0, -lo)
        self.r_max = hi + self.reward_shift

    def _raw(self, p):
        return self._base + p * self.action_q[None]

    def action_index(self, q, h):
        if not (1 <= q <= self.params.Q and 0 <= h < self.params.H):
            raise InvalidAction(f"action (q={q}, h={h}) is outside the grid")
        return int((q - 1) * self.params.H + h)

    def mean_production(self, alpha):
        return float(np.dot(alpha, self.action_q))

    def price(self, L):
        _, alpha = marginals(L)
        return self.price_from_actions(alpha)

    def price_from_actions(self, alpha):
        prm = self.params
        return clearing_price(self.mean_production(alpha), prm.d, prm.sigma, prm.q_floor)

    def kernel(self, L=None):
        return self._P

    def raw_reward_mean(self, L):
        return self._raw(self.price(L))

    def step(self, s, action, L, rng=None, raw=False):
        """One transition from inventory ``s`` under action (q, h)."""
        q, h = action
        a = self.action_index(q, h)
        if not 0 <= s < self.params.S:
            raise InvalidAction(f"inventory {s} outside 0..{self.params.S - 1}")
        r = float(self._raw(self.price(L))[s, a])
        return int(self._next[s, a]), r if raw else r + self.reward_shift

    def production_distribution(self, L):
        """Law of the produced quantity q under the action marginal."""
        _, alpha = marginals(L)
        return alpha.reshape(self.params.Q, self.params.H).sum(1)

    def summary(self, L):
        return {"price": self.price(L),
                "mean_production": self.mean_production(marginals(L)[1])}


class NPlayerPricing:
    """N firms sharing one market price."""

    def __init__(self, model: PricingModel, N: int):
        if N < 1:
            raise ValueError("N must be >= 1")
        self.model = model
        self.N = int(N)
        self.next_table = model._next.astype(np.int64)
        self.base_table = model._base
        self.action_q = model.action_q.astype(float)

    @property
    def n_states(self):
        return self.model.n_states

    @property
    def n_actions(self):
        return self.model.n_actions

    def price(self, actions):
        prm = self.model.params
        mean_q = self.action_q[np.asarray(actions)].mean()
        return clearing_price(mean_q, prm.d, prm.sigma, prm.q_floor)

    def step(self, states, actions, rng=None):
        states = np.asarray(states, dtype=np.int64)
        actions = np.asarray(actions, dtype=np.int64)
        if states.shape != (self.N,) or actions.shape != (self.N,):
            raise DimensionError(f"expected {self.N} states and actions")
        p = self.price(actions)
        rewards = self.base_table[states, actions] + p * self.action_q[actions]
        return self.next_table[states, actions], rewards + self.model.reward_shift
