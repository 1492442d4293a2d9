"""Inner solvers for the MDP obtained by freezing the mean field.

Exact value iteration and policy evaluation serve as oracles; the
sample-based solvers (synchronous and asynchronous Q-learning, TD
evaluation, TRPO) only touch the model through sampled transitions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .dist import as_distribution, as_policy
from .envs.base import FrozenMDP
from .streams import kernel_seed


class SolverConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StepSchedule:
    """beta_l = (l+1)^-h (polynomial) or a constant eta."""

    kind: str = "constant"
    h: float = 0.7
    eta: float = 0.01

    def __post_init__(self):
        if self.kind not in ("polynomial", "constant"):
            raise SolverConfigError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "polynomial" and not 0.5 < self.h < 1:
            raise SolverConfigError("polynomial schedule needs h in (1/2, 1)")
        if self.kind == "constant" and not 0 < self.eta <= 1:
            raise SolverConfigError("constant schedule needs eta in (0, 1]")

    def rate(self, l):
        if self.kind == "polynomial":
            return (l + 1.0) ** (-self.h)
        return self.eta

    def _args(self):
        return (K.POLY if self.kind == "polynomial" else K.CONST, float(self.h), float(self.eta))


def default_budget(mdp: FrozenMDP, factor: int = 100) -> int:
    return int(factor * mdp.n_states * mdp.n_actions)


def _cum(p):
    c = np.cumsum(p, axis=-1)
    c[..., -1] = 1.0
    return np.ascontiguousarray(c)


def _tables(mdp: FrozenMDP):
    o = mdp.outcomes
    return (np.ascontiguousarray(o.next_state, dtype=np.int64),
            np.ascontiguousarray(o.reward, dtype=float), _cum(o.prob))


# exact oracles ----------------------------------------------------------

@dataclass
class ValueIterationResult:
    Q: np.ndarray
    V: np.ndarray
    residuals: list


def value_iteration(mdp: FrozenMDP, tol: float = 1e-8, max_iter: int = 100_000,
                    Q0=None) -> ValueIterationResult:
    """Bellman iteration until ||Q_{t+1}-Q_t|| <= tol (1-gamma)/gamma.

    The stopping rule guarantees ||Q_t - Q*||_inf <= tol.
    """
    g = mdp.gamma
    P, R = mdp.P, mdp.R
    Q = np.zeros_like(R) if Q0 is None else np.array(Q0, dtype=float)
    stop = tol * (1 - g) / g if g > 0 else np.inf
    residuals = []
    for _ in range(max_iter):
        Q_new = R + g * P @ Q.max(axis=1)
        res = float(np.max(np.abs(Q_new - Q)))
        residuals.append(res)
        Q = Q_new
        if res <= stop:
            break
    return ValueIterationResult(Q, Q.max(axis=1), residuals)


def policy_evaluation(mdp: FrozenMDP, pi):
    """Exact (Q^pi, V^pi) from the linear system V = r_pi + gamma P^pi V."""
    pi = as_policy(pi, (mdp.n_states, mdp.n_actions))
    r_pi = np.einsum("sa,sa->s", pi, mdp.R)
    P_pi = mdp.policy_kernel(pi)
    V = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)
    Q = mdp.R + mdp.gamma * mdp.P @ V
    return Q, V


def occupancy_measure(mdp: FrozenMDP, pi, nu):
    """d_nu^pi = (1-gamma) nu (I - gamma P^pi)^-1."""
    P_pi = mdp.policy_kernel(as_policy(pi))
    A = np.eye(mdp.n_states) - mdp.gamma * P_pi
    return (1 - mdp.gamma) * np.linalg.solve(A.T, np.asarray(nu, float))


# sample-based solvers ---------------------------------------------------

def q_learning_sync(mdp: FrozenMDP, T: Optional[int], schedule: StepSchedule, rng,
                    C: float = 0.0):
    """Synchronous Q-learning: every (s, a) is updated from a fresh sample each iteration."""
    T = default_budget(mdp) if T is None else int(T)
    nxt, rew, cum = _tables(mdp)
    kind, h, eta = schedule._args()
    return K.sync_q(nxt, rew, cum, mdp.gamma, T, kind, h, eta, float(C), kernel_seed(rng))


def td_evaluate(mdp: FrozenMDP, pi, l_steps: Optional[int], schedule: StepSchedule, rng,
                C: float = 0.0):
    """Synchronous TD(0) estimate of Q^pi with next actions drawn from pi."""
    l_steps = default_budget(mdp) if l_steps is None else int(l_steps)
    pi = as_policy(pi, (mdp.n_states, mdp.n_actions))
    nxt, rew, cum = _tables(mdp)
    kind, h, eta = schedule._args()
    return K.sync_td(nxt, rew, cum, np.ascontiguousarray(pi), mdp.gamma, l_steps, kind, h, eta, float(C),
                     kernel_seed(rng))


def q_learning_async(mdp: FrozenMDP, T: int, schedule: StepSchedule, rng, epsilon=0.1,
                     C: float = 0.0, s0: Optional[int] = None):
    """Q-learning along one epsilon-greedy trajectory with per-pair visit-count steps.

    ``epsilon`` is a constant or a (start, end) pair decayed linearly.
    Returns (Q, visit counts).
    """
    eps0, eps1 = (epsilon, epsilon) if np.isscalar(epsilon) else epsilon
    if s0 is None:
        s0 = int(rng.integers(mdp.n_states))
    nxt, rew, cum = _tables(mdp)
    kind, h, eta = schedule._args()
    return K.async_q(nxt, rew, cum, mdp.gamma, int(T), kind, h, eta, float(C), float(eps0),
                     float(eps1), int(s0), kernel_seed(rng))


def occupancy_sample(mdp: FrozenMDP, pi, nu, rng, size: Optional[int] = None):
    """Exact draws from d_nu^pi by geometric stopping."""
    pi = as_policy(pi, (mdp.n_states, mdp.n_actions))
    nu = as_distribution(nu)
    nxt, _, cum = _tables(mdp)
    n = 1 if size is None else int(size)
    out = K.occupancy(nxt, cum, _cum(pi), _cum(nu), mdp.gamma, n, kernel_seed(rng))
    return int(out[0]) if size is None else out


# TRPO -------------------------------------------------------------------

@dataclass(frozen=True)
class TrpoConfig:
    episodes: int = 200
    m0: int = 64
    bregman: str = "kl"  # kl | euclidean
    step_scale: float = 1.0
    rollout_tol: float = 1e-2
    restart: Optional[tuple] = None  # nu; uniform when None
    eval_every: int = 10

    def __post_init__(self):
        if self.episodes < 0 or self.m0 < 1 or self.eval_every < 1:
            raise SolverConfigError("episodes >= 0, m0 >= 1 and eval_every >= 1 are required")
        if self.bregman not in ("kl", "euclidean"):
            raise SolverConfigError(f"unknown Bregman divergence {self.bregman!r}")
        if self.step_scale <= 0 or self.rollout_tol <= 0:
            raise SolverConfigError("step_scale and rollout_tol must be positive")
        if self.restart is not None:
            nu = np.asarray(self.restart, float)
            if np.any(nu <= 0) or abs(nu.sum() - 1) > 1e-9:
                raise SolverConfigError("restart distribution must be strictly positive")

    def horizon(self, gamma, r_max):
        if gamma <= 0 or r_max <= 0:
            return 1
        target = self.rollout_tol * (1 - gamma) / r_max
        if target >= 1:
            return 1
        return max(1, int(np.ceil(np.log(target) / np.log(gamma))))

    def step_size(self, l, gamma, r_max, n_actions):
        c_w1 = 1.0 if self.bregman == "kl" else np.sqrt(n_actions)
        return self.step_scale * (1 - gamma) / (c_w1 * max(r_max, 1e-12) * np.sqrt(l + 1))


@dataclass
class TrpoResult:
    policy: np.ndarray
    last: np.ndarray
    best_value: float
    values: list = field(default_factory=list)


def project_simplex(v):
    """Euclidean projection of each row onto the probability simplex."""
    v = np.atleast_2d(np.asarray(v, float))
    n = v.shape[1]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(v.shape[0]), rho] / (rho + 1)
    return np.maximum(v - theta[:, None], 0)


def trpo_update(pi, states, actions, qhat, t_l, gamma, bregman="kl"):
    """One proximal step from the sampled gradient estimates.

    Per visited state the gradient estimate is the importance-weighted
    |A| Q_hat e_{a_m} / (1-gamma), averaged over that state's samples.
    States without samples keep their row.
    """
    S, A = pi.shape
    n_s = np.bincount(states, minlength=S).astype(float)
    g = np.zeros((S, A))
    np.add.at(g, (states, actions), A * qhat / (1 - gamma))
    visited = n_s > 0
    g[visited] /= n_s[visited, None]
    new = pi.copy()
    if bregman == "kl":
        z = np.log(pi[visited]) + t_l * (1 - gamma) * g[visited]
        z -= z.max(axis=1, keepdims=True)
        # floor keeps every probability strictly positive in floating point
        w = np.exp(np.maximum(z, -700.0))
        new[visited] = w / w.sum(axis=1, keepdims=True)
    else:
        new[visited] = project_simplex(pi[visited] + t_l * (1 - gamma) * g[visited])
    return new


def trpo_solve(mdp: FrozenMDP, cfg: TrpoConfig, rng, pi0=None) -> TrpoResult:
    """Sample-based TRPO; returns the best policy seen under exact evaluation."""
    S, A = mdp.n_states, mdp.n_actions
    pi = np.full((S, A), 1.0 / A) if pi0 is None else as_policy(pi0, (S, A)).copy()
    nu = np.full(S, 1.0 / S) if cfg.restart is None else np.asarray(cfg.restart, float)
    mu_eval = np.full(S, 1.0 / S)
    nxt, rew, cum = _tables(mdp)
    nu_cum = _cum(nu)
    H = cfg.horizon(mdp.gamma, mdp.r_max)

    def value(p):
        return float(mu_eval @ policy_evaluation(mdp, p)[1])

    best, best_v = pi.copy(), value(pi)
    values = [best_v]
    for l in range(cfg.episodes):
        states, actions, qhat = K.trpo_batch(nxt, rew, cum, _cum(pi), nu_cum, mdp.gamma, cfg.m0,
                                             H, kernel_seed(rng))
        t_l = cfg.step_size(l, mdp.gamma, mdp.r_max, A)
        pi = trpo_update(pi, states, actions, qhat, t_l, mdp.gamma, cfg.bregman)
        if (l + 1) % cfg.eval_every == 0 or l + 1 == cfg.episodes:
            v = value(pi)
            values.append(v)
            if v > best_v:
                best, best_v = pi.copy(), v
    return TrpoResult(best, pi, best_v, values)
