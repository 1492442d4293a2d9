"""Two-state toy game: the composed map, its fixed point and the exploitability.

Players move left or right and are rewarded for matching a target law
(1 - p, p) both in where they stand and in what they do. The stationary
equilibrium is L* = target x target.
"""
import numpy as np

from gmfg.analysis import exploitability_mf
from gmfg.envs import ToyModel, ToyParams
from gmfg.loops import LoopConfig, gamma_composed, gmf_v, iterate_gamma
from gmfg.smooth import SmoothingConfig

m = ToyModel(ToyParams(p=0.5))
mu, pi, L = m.equilibrium()
print("analytic equilibrium L*:\n", L)
print("Gamma(L*) - L*:", np.abs(gamma_composed(m, L) - L).max())
print("exploitability of pi*:", exploitability_mf(m, pi))

# from a point mass the argmax map flips the population between corners
L0 = np.zeros((2, 2))
L0[0, 0] = 1
_, steps = iterate_gamma(m, L0, K=6)
print("argmax map from a corner, step sizes:", steps)

# the softmax map does settle from the same start
_, steps = iterate_gamma(m, L0, K=30, smoothing=SmoothingConfig("softmax_c", c=4.0))
print("softmax map from a corner, last step sizes:", np.round(steps[-3:], 8))

rec = gmf_v(m, LoopConfig(K=5, eps_net=None, smoothing=SmoothingConfig("argmax_e")),
            inner="exact")
print("gmf_v with exact inner solves, deltas:", rec.delta)
