"""N-player exploitability of GMF-VW-Q, MF-Q and IL on the pricing game.

A reduced version of the compare command: one replicate, fewer Monte
Carlo profiles. Run the full study with
    gmfg compare --config demos/configs/compare_n20.cfg --out out/compare
"""
from gmfg.analysis import MetricConfig, NPlayerProfile, exploitability_n
from gmfg.baselines import il_train, mfq_train
from gmfg.envs import NPlayerPricing, PricingModel
from gmfg.loops import LoopConfig, gmf_weak
from gmfg.solvers import StepSchedule
from gmfg.streams import stream

N = 20
m = PricingModel()
game = NPlayerPricing(m, N)
mc = MetricConfig(mc_profiles=20)
sched = StepSchedule("polynomial", h=0.7)
rec = gmf_weak(m, LoopConfig(K=20, N=N, record_exploitability=False))
profiles = {"gmf_vw": NPlayerProfile.symmetric(rec.final_pi, N),
            "mfq": mfq_train(game, 10**6, sched, stream(0, "mfq")),
            "il": il_train(game, 10**6, sched, stream(0, "il"))}
for name, prof in profiles.items():
    e = exploitability_n(game, prof, mc, stream(0, "eval", name))
    print(f"{name:7s} exploitability {e.mean:.4f} +- {e.se:.4f}")
