"""Equilibrium price on the pricing model: smoothed loops against naive ones.

At sigma = 2 the argmax map does have a fixed point (every firm at zero
inventory producing q = 7), but iterating the map from the uniform
population cycles between two other populations and never finds it.
With softmax selection the iterates approach the fixed point of the
smoothed map, which is computed exactly for comparison.
"""
import numpy as np

from gmfg.analysis import point_mass_fixed_points
from gmfg.envs import PricingModel, PricingParams
from gmfg.loops import LoopConfig, gmf_naive, gmf_v, smoothed_fixed_point
from gmfg.smooth import SmoothingConfig

for sigma in (2.0, 1.3):
    m = PricingModel(PricingParams(sigma=sigma))
    L_fix = smoothed_fixed_point(m, SmoothingConfig("softmax_c", c=4.0))
    rec = gmf_v(m, LoopConfig(K=20, record_exploitability=False))
    prices = [s["price"] for s in rec.summary]
    exact = [round(m.price(L), 3) for L in point_mass_fixed_points(m)]
    print(f"sigma={sigma}: argmax-map fixed point prices {exact}, "
          f"smoothed fixed point price {m.price(L_fix):.3f}")
    print("  GMF-V-Q price by iteration:", np.round(prices, 3).tolist())

m = PricingModel()
rec = gmf_naive(m, LoopConfig(K=20, record_exploitability=False))
print("naive loop step sizes:", np.round(rec.delta, 3).tolist())
print("naive loop prices:", np.round([s["price"] for s in rec.summary], 3).tolist())
