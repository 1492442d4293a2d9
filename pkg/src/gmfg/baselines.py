"""N-player baselines: independent learners (IL) and mean-action Q-learning (MF-Q).

Both train N asynchronous Q-learners simultaneously on the shared-price
game. MF-Q players additionally observe the bin of the other players'
mean production at the previous step.
"""
from __future__ import annotations

import numpy as np

from . import _kernels as K
from .analysis import NPlayerProfile, _game_args
from .envs.pricing import NPlayerPricing
from .smooth import argmax_e
from .solvers import StepSchedule
from .streams import kernel_seed


class BaselineConfigError(ValueError):
    pass


class JointQLearner:
    """Resumable simultaneous Q-learning for all N players.

    ``advance(t)`` continues training up to joint step ``t`` of ``T``. The
    exploration rate decays linearly over the full budget ``T`` whatever
    the checkpoints; each call draws a fresh kernel seed from ``rng``.
    """

    def __init__(self, game: NPlayerPricing, T: int, schedule: StepSchedule, n_bins: int, rng,
                 epsilon=(0.1, 0.01), C: float = 0.0):
        if T < 0:
            raise BaselineConfigError("T must be >= 0")
        self.game, self.T, self.schedule = game, int(T), schedule
        self.epsilon = (float(epsilon[0]), float(epsilon[1]))
        q = game.model.q_values
        self.lo, self.hi = float(q.min()), float(q.max())
        N, S, A = game.N, game.n_states, game.n_actions
        self.Q = np.full((N, S, n_bins, A), float(C))
        self.counts = np.zeros((N, S, n_bins, A), dtype=np.int64)
        self.states = rng.integers(S, size=N).astype(np.int64)
        self.bins = np.full(N, n_bins // 2, dtype=np.int64)
        self.t = 0
        self._rng = rng

    def advance(self, t1: int):
        t1 = min(int(t1), self.T)
        if t1 > self.t:
            kind, h, eta = self.schedule._args()
            K.nplayer_train(*_game_args(self.game), self.Q, self.counts, self.states, self.bins,
                            self.t, t1, self.T, kind, h, eta, *self.epsilon, self.lo, self.hi,
                            kernel_seed(self._rng))
            self.t = t1
        return self

    def profile(self) -> NPlayerProfile:
        A = self.Q.shape[-1]
        policies = argmax_e(self.Q.reshape(-1, A)).reshape(self.Q.shape)
        # evaluation episodes start in the bin the learners saw most
        bin0 = int(np.argmax(self.counts.sum(axis=(0, 1, 3))))
        return NPlayerProfile(np.ascontiguousarray(policies), self.lo, self.hi, bin0)


def il_learner(game, T, schedule, rng, epsilon=(0.1, 0.01), C=0.0) -> JointQLearner:
    return JointQLearner(game, T, schedule, 1, rng, epsilon, C)


def mfq_learner(game, T, schedule, rng, n_bins=10, epsilon=(0.1, 0.01), C=0.0,
                allow_single_bin=False) -> JointQLearner:
    if n_bins < 2 and not (allow_single_bin and n_bins == 1):
        raise BaselineConfigError("mean-action grid needs at least 2 bins")
    return JointQLearner(game, T, schedule, n_bins, rng, epsilon, C)


def il_train(game: NPlayerPricing, T: int, schedule: StepSchedule, rng, epsilon=(0.1, 0.01),
             C: float = 0.0) -> NPlayerProfile:
    """Each player runs Q-learning on its own (state, action, reward) stream."""
    return il_learner(game, T, schedule, rng, epsilon, C).advance(T).profile()


def mfq_train(game: NPlayerPricing, T: int, schedule: StepSchedule, rng, n_bins: int = 10,
              epsilon=(0.1, 0.01), C: float = 0.0, allow_single_bin: bool = False
              ) -> NPlayerProfile:
    """Q-learning on (own state, bin of others' mean production, action).

    Bins split [q_min, q_max] into ``n_bins`` equal widths. A single bin
    is only accepted with ``allow_single_bin`` (it reduces to IL).
    """
    return mfq_learner(game, T, schedule, rng, n_bins, epsilon, C,
                       allow_single_bin).advance(T).profile()
