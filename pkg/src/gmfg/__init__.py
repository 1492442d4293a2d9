"""Learning stationary equilibria of mean-field games on finite spaces.

Subpackages and modules: ``dist`` (distributions and distances),
``envs`` (pricing, auction and toy models), ``smooth`` (policy smoothing
and eps-net projection), ``solvers`` (tabular MDP solvers), ``loops``
(outer fixed-point iterations), ``baselines`` (N-player learners),
``analysis`` (exploitability and contraction diagnostics) and ``cli``.
"""
__version__ = "0.1.0"

from . import analysis, baselines, dist, envs, loops, smooth, solvers, streams  # noqa: F401
from .loops import LoopConfig, gmf_naive, gmf_p, gmf_v, gmf_weak  # noqa: F401
