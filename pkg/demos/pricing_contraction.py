"""How contractive is the composed map on the pricing model?

Draws uniform pairs of mean fields and reports the l1 ratio of their
images. With deterministic inventory dynamics and argmax selection most
pairs land on the same image (ratio 0); the remaining pairs sit on
opposite sides of a price threshold where the best reply changes, and
their images are disjoint point masses.
"""
import numpy as np

from gmfg.analysis import contraction_report
from gmfg.envs import PricingModel, PricingParams
from gmfg.loops import gamma1_exact

variants = {"default": {}, "gamma=0.1": {"gamma": 0.1}, "S=5,A=25": {"S": 5, "Q": 5, "H": 5},
            "costs": dict(c0=2.5, c1=0.5, c2=2.5, c3=1.0, c4=1.0), "d=200": {"d": 200.0},
            "sigma=1.0": {"sigma": 1.0}}
for name, kw in variants.items():
    rep = contraction_report(PricingModel(PricingParams(**kw)), 1000, np.random.default_rng(0))
    print(f"{name:10s} max {rep.max:.3f} mean {rep.mean:.4f} "
          f"pairs above 0.3: {(rep.ratios > 0.3).sum()}")

# best replies against populations that all produce the same q
m = PricingModel()
for q in range(1, m.params.Q + 1):
    L = np.zeros(m.shape)
    L[0, m.action_index(q, 0)] = 1
    best = m.action_q[gamma1_exact(m, L).argmax(1)]
    print(f"price {m.price(L):.3f}: best production by inventory {best.tolist()}")
