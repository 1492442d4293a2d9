"""Repeated second-price auction with budgets.

A bidder with budget ``s`` submits bid ``a`` against ``M - 1`` opponents
whose bids are drawn from the population bid marginal. Ties go to the
bidder. The winner pays the highest opposing bid ``x``, collects a click
value ``v`` and is penalised at rate ``1 + rho`` for any overshoot of the
budget.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..dist import FiniteSpace, marginals
from .base import GMFGModel, InvalidAction, Outcomes


@dataclass(frozen=True)
class AuctionParams:
    s_max: int = 10
    a_max: int = 10
    M: int = 5
    rho: float = 0.2
    gamma: float = 0.8
    v_probs: Optional[tuple] = None  # law of v on {0..a_max}; uniform if None

    def __post_init__(self):
        if self.s_max < 1 or self.a_max < 1:
            raise ValueError("s_max and a_max must be positive")
        if self.M < 2:
            raise ValueError("M must be >= 2")
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.v_probs is not None:
            v = np.asarray(self.v_probs, float)
            if v.shape != (self.a_max + 1,) or np.any(v < 0) or abs(v.sum() - 1) > 1e-9:
                raise ValueError("v_probs must be a distribution on 0..a_max")

    def with_(self, **kw):
        return replace(self, **kw)

    @property
    def v_dist(self):
        if self.v_probs is None:
            return np.full(self.a_max + 1, 1.0 / (self.a_max + 1))
        return np.asarray(self.v_probs, float)


def auction_reward(s, x, v, won, rho):
    """Raw reward given the payment x (highest opposing bid) and value v."""
    if not won:
        return 0.0
    return float(v - x - (1 + rho) * max(x - s, 0))


def budget_next(s, x, won):
    if not won:
        return s
    return s - x if x <= s else 0


def opponent_max_law(alpha, M):
    """P(max of M-1 iid bids = x) for x = 0..a_max."""
    F = np.cumsum(alpha)
    F[-1] = 1.0
    G = np.clip(F, 0, 1) ** (M - 1)
    return np.diff(np.concatenate([[0.0], G]))


class AuctionModel(GMFGModel):
    name = "auction"
    transition_depends_on_mean_field = True

    def __init__(self, params: AuctionParams = AuctionParams()):
        self.params = prm = params
        self.gamma = prm.gamma
        self.state_space = FiniteSpace.grid(prm.s_max + 1)
        self.action_space = FiniteSpace.grid(prm.a_max + 1)
        self.reward_shift = (2 + prm.rho) * prm.a_max
        self.r_max = self.reward_shift + prm.a_max
        S, A = prm.s_max + 1, prm.a_max + 1
        s = np.arange(S)[:, None]
        x = np.arange(A)[None, :]
        # win tables over (s, x); losing is one extra outcome
        self._win_next = np.where(x <= s, s - x, 0)
        self._win_payoff = -x - (1 + prm.rho) * np.maximum(x - s, 0)

    def _x_law(self, L):
        _, alpha = marginals(L)
        return opponent_max_law(alpha, self.params.M)

    def kernel(self, L):
        S, A = self.shape
        px = self._x_law(L)
        P = np.zeros((S, A, S))
        s_idx = np.arange(S)
        for a in range(A):
            lose = px[a + 1:].sum()
            P[s_idx, a, s_idx] += lose
            for x in range(a + 1):
                np.add.at(P, (s_idx, a, self._win_next[:, x]), px[x])
        return P

    def raw_reward_mean(self, L):
        px = self._x_law(L)
        ev = float(np.dot(self.params.v_dist, np.arange(self.params.a_max + 1)))
        gain = (self._win_payoff + ev) * px[None, :]  # (S, x)
        # a bid a wins exactly when x <= a
        return np.cumsum(gain, axis=1)

    def outcomes(self, L):
        """Joint (s', r) law: one lose outcome plus (x, v) win outcomes."""
        S, A = self.shape
        px = self._x_law(L)
        vd = self.params.v_dist
        nv = vd.size
        K = 1 + A * nv
        nxt = np.empty((S, A, K), dtype=np.int64)
        rew = np.empty((S, A, K))
        prob = np.zeros((S, A, K))
        s_idx = np.arange(S)
        nxt[:, :, 0] = s_idx[:, None]
        rew[:, :, 0] = self.reward_shift
        xs = np.repeat(np.arange(A), nv)
        vs = np.tile(np.arange(nv), A)
        nxt[:, :, 1:] = self._win_next[:, xs][:, None, :]
        rew[:, :, 1:] = (self._win_payoff[:, xs] + vs[None] + self.reward_shift)[:, None, :]
        joint = (px[:, None] * vd[None, :]).ravel()
        for a in range(A):
            prob[:, a, 0] = px[a + 1:].sum()
            prob[:, a, 1:] = np.where(xs <= a, joint, 0.0)[None, :]
        return Outcomes(nxt, rew, prob)

    def summary(self, L) -> dict:
        mu, alpha = marginals(L)
        return {"mean_budget": float(mu @ np.arange(mu.size)),
                "mean_bid": float(alpha @ np.arange(alpha.size))}

    def step(self, s, a, L, rng, raw=False):
        """Simulate one auction round by drawing the opponents' bids."""
        prm = self.params
        if not (0 <= a <= prm.a_max):
            raise InvalidAction(f"bid {a} outside 0..{prm.a_max}")
        _, alpha = marginals(L)
        bids = rng.choice(prm.a_max + 1, size=prm.M - 1, p=alpha)
        x = int(bids.max())
        won = x <= a
        v = int(rng.choice(prm.a_max + 1, p=prm.v_dist))
        r = auction_reward(s, x, v, won, prm.rho)
        return budget_next(s, x, won), r if raw else r + self.reward_shift
