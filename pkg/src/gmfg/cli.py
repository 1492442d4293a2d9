"""Config-driven experiment harness.

    gmfg <command> --config <path> [--seed N] [--out DIR] [--replicates N] [--workers N]

Commands: train, contraction, compare, evaluate, sweep. Each writes
long-format CSVs ``(replicate, k, metric, value)``, a ``summary.csv``
with per-k means and 90% normal-approximation intervals, and a
``manifest.cfg`` that reproduces the run when passed back as ``--config``.
Exit codes: 0 success, 1 runtime failure, 2 invalid config.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata

import numpy as np

from . import config as C
from .analysis import (MeanFieldUnsupported, MetricConfig, NPlayerProfile, contraction_report,
                       exploitability_mf, exploitability_n, stationary_mean_field)
from .baselines import il_learner, mfq_learner
from .envs import NPlayerPricing, PricingModel, make_model
from .loops import LoopConfig, gmf_naive, gmf_p, gmf_v, gmf_weak
from .smooth import EpsNetConfig, SmoothingConfig
from .solvers import StepSchedule, TrpoConfig
from .streams import stream

Z90 = 1.645
GMF_ALGORITHMS = ("gmf_v", "gmf_p", "gmf_naive", "gmf_vw", "gmf_pw")


class ReplicateFailure(RuntimeError):
    def __init__(self, replicate, seed, exc):
        self.replicate, self.seed = replicate, seed
        super().__init__(f"replicate {replicate} (seed {seed}, stream key ({seed}, {replicate})) "
                         f"failed: {type(exc).__name__}: {exc}")


# building blocks from a resolved config ------------------------------------

def build_model(cfg):
    return make_model(cfg["env"], **cfg.section(f"env.{cfg['env']}"))


def loop_config(cfg) -> LoopConfig:
    digits = cfg["eps_net.digits"]
    return LoopConfig(
        K=cfg["loop.K"], inner_steps=cfg["loop.inner_steps"], td_steps=cfg["loop.td_steps"],
        evaluation=cfg["loop.evaluation"],
        schedule=StepSchedule(cfg["schedule.kind"], h=cfg["schedule.h"], eta=cfg["schedule.eta"]),
        q_init=cfg["loop.q_init"],
        smoothing=SmoothingConfig(cfg["smoothing.kind"], c=cfg["smoothing.c"]),
        eps_net=EpsNetConfig(digits) if digits > 0 else None,
        trpo=TrpoConfig(episodes=cfg["trpo.episodes"], m0=cfg["trpo.m0"],
                        bregman=cfg["trpo.bregman"], step_scale=cfg["trpo.step_scale"],
                        rollout_tol=cfg["trpo.rollout_tol"], eval_every=cfg["trpo.eval_every"]),
        seed=cfg["run.seed"], N=cfg["loop.N"], vi_tol=cfg["loop.vi_tol"])


def metric_config(cfg) -> MetricConfig:
    return MetricConfig(eps0=cfg["metric.eps0"], mc_profiles=cfg["metric.mc_profiles"],
                        br_steps=cfg["metric.br_steps"], rollouts=cfg["metric.rollouts"])


def _inner(cfg, algorithm):
    inner = cfg["inner"]
    if inner != "default":
        return inner
    return "trpo" if algorithm in ("gmf_p", "gmf_pw") else "q_learning"


def run_gmf(cfg, algorithm, model, replicate, K=None):
    lc = loop_config(cfg)
    if K is not None:
        lc = lc.with_(K=K)
    inner = _inner(cfg, algorithm)
    if algorithm == "gmf_v":
        return gmf_v(model, lc, inner=inner, run=replicate)
    if algorithm == "gmf_p":
        return gmf_p(model, lc, inner=inner, run=replicate)
    if algorithm == "gmf_naive":
        return gmf_naive(model, lc, inner=inner, run=replicate)
    if algorithm in ("gmf_vw", "gmf_pw"):
        return gmf_weak(model, lc, inner=inner, run=replicate)
    raise C.ConfigError(f"{algorithm} is not a mean-field loop")


def check_config(cfg):
    """Semantic checks that need the library; raises ConfigError with a line."""
    lines = getattr(cfg, "_lines", {})
    env_lines = [n for k, n in lines.items() if k.startswith(f"env.{cfg['env']}.")]
    try:
        model = build_model(cfg)
    except (TypeError, ValueError) as exc:
        raise C.ConfigError(f"env.{cfg['env']}: {exc}", min(env_lines, default=lines.get("env")))
    try:
        loop_config(cfg)
        metric_config(cfg)
    except (TypeError, ValueError) as exc:
        raise C.ConfigError(str(exc))
    needs_game = cfg["command"] == "compare" or cfg["algorithm"] in ("il", "mfq")
    if needs_game and not isinstance(model, PricingModel):
        raise C.ConfigError("the N-player game is only defined for env = pricing", lines.get("env"))
    algos = cfg["algorithms"] if cfg["command"] == "compare" else [cfg["algorithm"]]
    for a in algos:
        inner = _inner(cfg, a)
        if a in ("gmf_v", "gmf_vw") and inner not in ("q_learning", "exact"):
            raise C.ConfigError(f"{a} needs inner = q_learning or exact", lines.get("inner"))
        if a in ("gmf_p", "gmf_pw") and inner not in ("trpo", "exact"):
            raise C.ConfigError(f"{a} needs inner = trpo or exact", lines.get("inner"))
    return model


# replicate workers ----------------------------------------------------------

def _train_replicate(cfg, r):
    model = build_model(cfg)
    algorithm = cfg["algorithm"]
    if algorithm in ("il", "mfq"):
        return _compare_replicate(cfg, algorithm, r)
    rec = run_gmf(cfg, algorithm, model, r)
    rows = []
    for name, series in rec.metrics().items():
        rows += [(r, k, name, v) for k, v in enumerate(series)]
    S, A = model.shape
    pol = [(r, s, a, float(rec.final_pi[s, a])) for s in range(S) for a in range(A)] if rec.K else []
    mf = [(r, s, a, float(rec.final_L[s, a])) for s in range(S) for a in range(A)]
    return {"metrics": rows, "policy": pol, "mean_field": mf}


def _checkpoints(total, n):
    n = min(n, total) if total > 0 else 1
    return [max(1, round(j * total / n)) for j in range(1, n + 1)]


def _compare_replicate(cfg, algorithm, r):
    model = build_model(cfg)
    N = cfg["compare.N"]
    game = NPlayerPricing(model, N)
    mc = metric_config(cfg)
    eval_rng = stream(cfg["run.seed"], r, "eval", algorithm)
    rows = []

    def record(j, progress, profile):
        e = exploitability_n(game, profile, mc, eval_rng)
        rows.extend([(r, j, "exploitability", e.mean), (r, j, "exploitability_se", e.se),
                     (r, j, "progress", progress)])

    n_cp = cfg["compare.checkpoints"]
    if algorithm in GMF_ALGORITHMS:
        c2 = C.Config(cfg)
        c2["loop.N"] = N
        rec = run_gmf(c2, algorithm, model, r)
        for j, k in enumerate(_checkpoints(rec.K, n_cp), start=1):
            record(j, k, NPlayerProfile.symmetric(rec.pi[k - 1], N))
    else:
        T = cfg["baseline.steps"]
        sched = StepSchedule("polynomial", h=cfg["baseline.h"])
        eps = (cfg["baseline.eps_start"], cfg["baseline.eps_end"])
        rng = stream(cfg["run.seed"], r, "baseline", algorithm)
        if algorithm == "il":
            learner = il_learner(game, T, sched, rng, eps)
        else:
            learner = mfq_learner(game, T, sched, rng, cfg["baseline.bins"], eps)
        for j, t in enumerate(_checkpoints(T, n_cp), start=1):
            record(j, t, learner.advance(t).profile())
    return {"metrics": rows}


def _contraction_replicate(cfg, r):
    model = build_model(cfg)
    rep = contraction_report(model, cfg["contraction.pairs"], stream(cfg["run.seed"], r, "misc",
                                                                     "contraction"))
    return {"ratios": [(r, i, float(x)) for i, x in enumerate(rep.ratios)],
            "metrics": [(r, 0, "max_ratio", rep.max), (r, 0, "mean_ratio", rep.mean),
                        (r, 0, "excluded_pairs", rep.excluded)]}


def _evaluate_replicate(cfg, r, pi):
    model = build_model(cfg)
    rows = []
    try:
        rows.append((r, 0, "exploitability", exploitability_mf(model, pi, cfg["metric.eps0"])))
        _, L = stationary_mean_field(model, pi)
        rows += [(r, 0, k, v) for k, v in model.summary(L).items()]
    except MeanFieldUnsupported:
        rows.append((r, 0, "exploitability", float("nan")))
    if cfg["metric.nplayer"]:
        game = NPlayerPricing(model, cfg["compare.N"])
        e = exploitability_n(game, NPlayerProfile.symmetric(pi, game.N), metric_config(cfg),
                             stream(cfg["run.seed"], r, "eval", "evaluate"))
        rows += [(r, 0, "nplayer_exploitability", e.mean),
                 (r, 0, "nplayer_exploitability_se", e.se)]
    return {"metrics": rows}


def _call(job):
    fn, args, r, seed = job
    try:
        return fn(*args)
    except Exception as exc:  # reported with the replicate's seed
        raise ReplicateFailure(r, seed, exc) from exc


def run_replicates(cfg, fn, extra=None):
    """Run ``fn(cfg, r, *extra[r])`` for every replicate, in order."""
    n = cfg["run.replicates"]
    jobs = [(fn, (cfg, r) + tuple(extra[r] if extra else ()), r, cfg["run.seed"])
            for r in range(n)]
    if cfg["run.workers"] > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=cfg["run.workers"]) as pool:
            return list(pool.map(_call, jobs))
    return [_call(j) for j in jobs]


# output ------------------------------------------------------------------

def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def summarize(rows, key_len=0):
    """Per-(key..., k, metric) mean and mean +- 1.645 sd/sqrt(n) over replicates.

    ``rows`` are ``(*key, replicate, k, metric, value)``.
    """
    groups = {}
    for row in rows:
        key = row[:key_len] + row[key_len + 1:key_len + 3]
        groups.setdefault(key, []).append(float(row[key_len + 3]))
    out = []
    for key, vals in groups.items():
        x = np.array(vals)
        n = len(x)
        mean = float(x.mean())
        if n > 1:
            with np.errstate(invalid="ignore"):
                half = Z90 * float(x.std(ddof=1)) / math.sqrt(n)
            lo, hi = mean - half, mean + half
        else:
            lo = hi = float("nan")
        out.append(key + (mean, lo, hi, n))
    return out


def manifest_text(cfg):
    from . import __version__
    versions = [f"gmfg {__version__}"]
    for pkg in ("numpy", "scipy", "numba"):
        try:
            versions.append(f"{pkg} {metadata.version(pkg)}")
        except metadata.PackageNotFoundError:
            versions.append(f"{pkg} unknown")
    n, seed = cfg["run.replicates"], cfg["run.seed"]
    head = [f"# versions: {', '.join(versions)}",
            f"# seeds: replicate r draws every stream from key ({seed}, r), r = 0..{n - 1}"]
    return "\n".join(head) + "\n" + cfg.dump()


def write_common(cfg, out, metrics, key_header=()):
    os.makedirs(out, exist_ok=True)
    name = "compare.csv" if key_header else "metrics.csv"
    write_csv(os.path.join(out, name), list(key_header) + ["replicate", "k", "metric", "value"],
              metrics)
    write_csv(os.path.join(out, "summary.csv"),
              list(key_header) + ["k", "metric", "mean", "ci_low", "ci_high", "n"],
              summarize(metrics, len(key_header)))
    with open(os.path.join(out, "manifest.cfg"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest_text(cfg))


# commands ------------------------------------------------------------------

def cmd_train(cfg, out):
    results = run_replicates(cfg, _train_replicate)
    rows = [row for res in results for row in res["metrics"]]
    write_common(cfg, out, rows)
    if cfg["algorithm"] in GMF_ALGORITHMS:
        write_csv(os.path.join(out, "policy.csv"), ["replicate", "s", "a", "value"],
                  [row for res in results for row in res["policy"]])
        write_csv(os.path.join(out, "mean_field.csv"), ["replicate", "s", "a", "value"],
                  [row for res in results for row in res["mean_field"]])
    return rows


def cmd_contraction(cfg, out):
    results = run_replicates(cfg, _contraction_replicate)
    rows = [row for res in results for row in res["metrics"]]
    write_common(cfg, out, rows)
    write_csv(os.path.join(out, "ratios.csv"), ["replicate", "pair", "ratio"],
              [row for res in results for row in res["ratios"]])
    return rows


def _compare_job(cfg, r, algorithm):
    return _compare_replicate(cfg, algorithm, r)


def cmd_compare(cfg, out):
    rows = []
    for alg in cfg["algorithms"]:
        res = run_replicates(cfg, _compare_job, [(alg,)] * cfg["run.replicates"])
        rows += [(alg,) + row for r in res for row in r["metrics"]]
    write_common(cfg, out, rows, key_header=("algorithm",))
    return rows


def read_policy(path, model):
    """Policy CSV ``(replicate, s, a, value)`` or ``(s, a, value)`` -> {replicate: pi}."""
    S, A = model.shape
    pols = {}
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            r = int(row.get("replicate", 0))
            pi = pols.setdefault(r, np.zeros((S, A)))
            pi[int(row["s"]), int(row["a"])] = float(row.get("value", row.get("prob")))
    for r, pi in pols.items():
        if not np.allclose(pi.sum(axis=1), 1.0, atol=1e-6):
            raise C.ConfigError(f"policy for replicate {r} in {path} has rows not summing to 1")
    return pols


def cmd_evaluate(cfg, out):
    model = build_model(cfg)
    pols = read_policy(cfg["evaluate.policy"], model)
    c2 = C.Config(cfg)
    c2["run.replicates"] = len(pols)
    order = sorted(pols)
    results = run_replicates(c2, _evaluate_replicate, [(pols[r],) for r in order])
    rows = [(order[i],) + row[1:] for i, res in enumerate(results) for row in res["metrics"]]
    write_common(c2, out, rows)
    return rows


def cmd_sweep(cfg, out):
    key = cfg["sweep.key"]
    all_rows = []
    for text in cfg["sweep.values"]:
        sub = C.Config(cfg)
        sub[key] = C.parse_value(key, text)
        sub["command"] = "train"
        sub._lines = getattr(cfg, "_lines", {})
        check_config(sub)
        sub_out = os.path.join(out, f"{key}={text}")
        rows = cmd_train(sub, sub_out)
        all_rows += [(text,) + row for row in rows]
    write_csv(os.path.join(out, "sweep_summary.csv"),
              ["value", "k", "metric", "mean", "ci_low", "ci_high", "n"],
              summarize(all_rows, 1))
    with open(os.path.join(out, "manifest.cfg"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest_text(cfg))
    return all_rows


COMMANDS = {"train": cmd_train, "contraction": cmd_contraction, "compare": cmd_compare,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep}


def resolve(argv):
    ap = argparse.ArgumentParser(prog="gmfg", description="Mean-field game experiment harness")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--replicates", type=int)
    ap.add_argument("--workers", type=int)
    args = ap.parse_args(argv)
    with open(args.config, encoding="utf-8") as fh:
        text = fh.read()
    cfg = C.parse_text(text)
    lines = cfg._lines
    cfg["command"] = args.command
    # a contraction study is one batch of pairs unless replicates are asked for
    if args.command == "contraction" and "run.replicates" not in lines:
        cfg["run.replicates"] = 1
    for name in ("seed", "out", "replicates", "workers"):
        v = getattr(args, name)
        if v is not None:
            cfg[f"run.{name}"] = v
    cfg._lines = lines
    C.validate(cfg)
    check_config(cfg)
    return cfg


def main(argv=None) -> int:
    try:
        cfg = resolve(argv)
    except C.ConfigError as exc:
        print(f"gmfg: invalid config: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"gmfg: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        COMMANDS[cfg["command"]](cfg, cfg["run.out"])
    except C.ConfigError as exc:
        print(f"gmfg: invalid config: {exc}", file=sys.stderr)
        return 2
    except ReplicateFailure as exc:
        print(f"gmfg: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"gmfg: run failed (seed {cfg['run.seed']}): {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
