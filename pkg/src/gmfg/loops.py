"""Outer fixed-point iterations over the mean field.

``gamma1_exact``/``gamma2_exact``/``gamma_composed`` are the exact maps.
``gmf_v`` (value-based inner solver), ``gmf_p`` (policy-based inner
solver followed by TD evaluation), ``gmf_naive`` (argmax-e, no projection)
and ``gmf_weak`` (N-sample empirical population) all share one loop body.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dist import as_mean_field, l1_distance, marginals
from .envs.base import GMFGModel, population_step
from .smooth import EpsNetConfig, SmoothingConfig, action_gap, argmax_e, project_eps_net, round_to_units
from .solvers import (StepSchedule, TrpoConfig, policy_evaluation, q_learning_sync, td_evaluate,
                      trpo_solve, value_iteration)
from .streams import stream

INNER_VALUE = ("q_learning", "exact")
INNER_POLICY = ("trpo", "exact")


# exact maps -------------------------------------------------------------

def best_response_q(model: GMFGModel, L, tol: float = 1e-10):
    return value_iteration(model.frozen(L), tol=tol).Q


def gamma1_exact(model: GMFGModel, L, smoothing: Optional[SmoothingConfig] = None,
                 tol: float = 1e-10):
    """Policy selection: argmax-e (or a smoothed rule) of the optimal Q at L."""
    Q = best_response_q(model, L, tol)
    return argmax_e(Q) if smoothing is None else smoothing(Q)


def gamma2_exact(model: GMFGModel, pi, L):
    """One exact population step: mu'(s') = sum mu(s) pi(a|s) P(s'|s,a,L)."""
    return population_step(model, pi, L)


def gamma_composed(model: GMFGModel, L, smoothing: Optional[SmoothingConfig] = None,
                   tol: float = 1e-10):
    return gamma2_exact(model, gamma1_exact(model, L, smoothing, tol), L)


def iterate_gamma(model: GMFGModel, L0=None, K: int = 50, smoothing=None, tol: float = 1e-10,
                  stop: float = 0.0):
    """Repeated exact Gamma; returns (trajectory, step sizes)."""
    L = model.uniform_mean_field() if L0 is None else as_mean_field(L0, model.shape)
    traj, steps = [L], []
    for _ in range(K):
        L_new = gamma_composed(model, L, smoothing, tol)
        steps.append(l1_distance(L_new, L))
        L = L_new
        traj.append(L)
        if steps[-1] < stop:
            break
    return traj, steps


def smoothed_fixed_point(model: GMFGModel, smoothing: SmoothingConfig, L0=None,
                         max_iter: int = 5000, tol: float = 1e-10):
    """Fixed point of L -> Gamma2(f(Q*_L), L) for a smoothed selection rule f."""
    traj, steps = iterate_gamma(model, L0, max_iter, smoothing, tol=1e-12, stop=tol)
    if steps and steps[-1] >= tol:
        raise RuntimeError(f"smoothed iteration did not settle: last step {steps[-1]:.3g}")
    return traj[-1]


def weak_population_step(model: GMFGModel, pi, L, N: int, rng):
    """Empirical next mean field of N players advanced through the weak simulator."""
    mu, _ = marginals(L)
    out = model.outcomes(L)
    S, A = model.shape
    s = rng.choice(S, size=N, p=mu)
    u = rng.random(N)
    cum = np.cumsum(pi[s], axis=1)
    a = np.minimum((u[:, None] >= cum).sum(1), A - 1)
    ocum = np.cumsum(out.prob[s, a], axis=1)
    k = np.minimum((rng.random(N)[:, None] >= ocum).sum(1), ocum.shape[1] - 1)
    s2 = out.next_state[s, a, k]
    cum2 = np.cumsum(pi[s2], axis=1)
    a2 = np.minimum((rng.random(N)[:, None] >= cum2).sum(1), A - 1)
    counts = np.zeros(S * A)
    np.add.at(counts, s2 * A + a2, 1.0)
    return (counts / N).reshape(S, A)


def snap_to_empirical(L, N: int):
    """Nearest member of Emp_N by largest-remainder apportionment."""
    L = np.asarray(L, float)
    return (round_to_units(L.ravel(), N) / N).reshape(L.shape)


# configured loops -------------------------------------------------------

@dataclass(frozen=True)
class LoopConfig:
    K: int = 20
    inner_steps: Optional[int] = None  # T_k; 100 |S||A| when None
    td_steps: Optional[int] = None  # l_k; 100 |S||A| when None
    evaluation: str = "td"  # td | exact, how gmf_p certifies its inner policy
    schedule: StepSchedule = StepSchedule("constant", eta=0.01)
    q_init: float = 0.0
    smoothing: SmoothingConfig = SmoothingConfig("softmax_c", c=4.0)
    eps_net: Optional[EpsNetConfig] = EpsNetConfig(4)
    trpo: TrpoConfig = TrpoConfig(episodes=1000, m0=256, step_scale=10.0)
    L0: Optional[np.ndarray] = None
    seed: int = 0
    N: Optional[int] = None
    record_exploitability: bool = True
    vi_tol: float = 1e-8

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if self.evaluation not in ("td", "exact"):
            raise ValueError(f"unknown evaluation {self.evaluation!r}")
        if self.N is not None and self.N < 1:
            raise ValueError("N must be >= 1")

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class RunRecord:
    algorithm: str
    L: list = field(default_factory=list)  # L_0 .. L_K
    pi: list = field(default_factory=list)  # pi_0 .. pi_{K-1}
    delta: list = field(default_factory=list)  # ||L_{k+1} - L_k||_1
    exploitability: list = field(default_factory=list)
    min_gap: list = field(default_factory=list)
    summary: list = field(default_factory=list)  # env scalars at L_{k+1}
    sampled_state: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def K(self):
        return len(self.pi)

    @property
    def final_L(self):
        return self.L[-1]

    @property
    def final_pi(self):
        return self.pi[-1] if self.pi else None

    def metrics(self) -> dict:
        """Per-iteration scalar series (wall time excluded: not reproducible)."""
        out = {"delta_l1": np.array(self.delta, float),
               "exploitability": np.array(self.exploitability, float),
               "min_action_gap": np.array(self.min_gap, float)}
        for key in (self.summary[0] if self.summary else {}):
            out[key] = np.array([s[key] for s in self.summary], float)
        return out


def _inner_q(model, mdp, kind, cfg: LoopConfig, rng):
    if kind == "exact":
        return value_iteration(mdp, tol=cfg.vi_tol).Q
    if kind == "q_learning":
        return q_learning_sync(mdp, cfg.inner_steps, cfg.schedule, rng, C=cfg.q_init)
    raise ValueError(f"unknown value-based inner solver {kind!r}")


def _inner_policy_q(model, mdp, kind, cfg: LoopConfig, rng_inner, rng_td):
    if kind == "exact":
        pi_hat = argmax_e(value_iteration(mdp, tol=cfg.vi_tol).Q)
    elif kind == "trpo":
        pi_hat = trpo_solve(mdp, cfg.trpo, rng_inner).policy
    else:
        raise ValueError(f"unknown policy-based inner solver {kind!r}")
    if cfg.evaluation == "exact":
        return policy_evaluation(mdp, pi_hat)[0]
    return td_evaluate(mdp, pi_hat, cfg.td_steps, cfg.schedule, rng_td, C=cfg.q_init)


def _exploit(model, pi):
    from .analysis import MeanFieldUnsupported, exploitability_mf
    try:
        return exploitability_mf(model, pi)
    except MeanFieldUnsupported:
        return float("nan")


def run_loop(model: GMFGModel, cfg: LoopConfig, *, family: str = "value", inner: str = "q_learning",
             smoothing: Optional[SmoothingConfig] = None, project: bool = True,
             weak: bool = False, run: int = 0, name: Optional[str] = None) -> RunRecord:
    """Shared loop body; see the wrappers below for the named algorithms."""
    smoothing = cfg.smoothing if smoothing is None else smoothing
    rec = RunRecord(name or f"{family}-{inner}")
    L = model.uniform_mean_field() if cfg.L0 is None else as_mean_field(cfg.L0, model.shape)
    if weak:
        if cfg.N is None:
            raise ValueError("weak loops need N")
        snapped = snap_to_empirical(L, cfg.N)
        if not np.array_equal(snapped, L):
            rec.notes.append(f"L0 snapped to Emp_{cfg.N}")
        L = snapped
    elif project and cfg.eps_net is not None:
        L = project_eps_net(L, cfg.eps_net)
    rec.L.append(L)
    for k in range(cfg.K):
        t0 = time.perf_counter()
        mdp = model.frozen(L)
        if family == "value":
            Q = _inner_q(model, mdp, inner, cfg, stream(cfg.seed, run, "inner", k))
        else:
            Q = _inner_policy_q(model, mdp, inner, cfg, stream(cfg.seed, run, "inner", k),
                                stream(cfg.seed, run, "td", k))
        pi = smoothing(Q)
        pop_rng = stream(cfg.seed, run, "population", k)
        mu, _ = marginals(L)
        rec.sampled_state.append(int(pop_rng.choice(model.n_states, p=mu)))
        if weak:
            L_new = weak_population_step(model, pi, L, cfg.N, pop_rng)
        else:
            L_new = gamma2_exact(model, pi, L)
            if project and cfg.eps_net is not None:
                L_new = project_eps_net(L_new, cfg.eps_net)
        rec.pi.append(pi)
        rec.delta.append(l1_distance(L_new, L))
        rec.min_gap.append(float(np.min(action_gap(Q))))
        rec.exploitability.append(_exploit(model, pi) if cfg.record_exploitability else np.nan)
        rec.summary.append(model.summary(L_new))
        L = L_new
        rec.L.append(L)
        rec.wall.append(time.perf_counter() - t0)
    return rec


def gmf_v(model, cfg: LoopConfig, inner: str = "q_learning", run: int = 0) -> RunRecord:
    """Value-based loop: inner Q, smoothed policy, exact population step, eps-net projection."""
    return run_loop(model, cfg, family="value", inner=inner, run=run, name=f"gmf_v[{inner}]")


def gmf_p(model, cfg: LoopConfig, inner: str = "trpo", run: int = 0) -> RunRecord:
    """Policy-based loop: inner policy, TD evaluation, smoothed policy of the TD estimate."""
    return run_loop(model, cfg, family="policy", inner=inner, run=run, name=f"gmf_p[{inner}]")


def gmf_naive(model, cfg: LoopConfig, inner: str = "q_learning", run: int = 0) -> RunRecord:
    """argmax-e of the approximate Q with no projection."""
    family = "policy" if inner == "trpo" else "value"
    return run_loop(model, cfg, family=family, inner=inner, smoothing=SmoothingConfig("argmax_e"),
                    project=False, run=run, name=f"gmf_naive[{inner}]")


def gmf_weak(model, cfg: LoopConfig, inner: str = "q_learning", run: int = 0) -> RunRecord:
    """N-player empirical population advance; Emp_N replaces the eps-net."""
    family = "policy" if inner == "trpo" else "value"
    return run_loop(model, cfg, family=family, inner=inner, weak=True, project=False, run=run,
                    name=f"gmf_weak[{inner}]")
