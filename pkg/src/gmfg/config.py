"""Flat ``key = value`` experiment configs with dotted sections.

Every accepted key is declared in ``SCHEMA`` with its type, default and
a short description; ``docs/config_schema.md`` is generated from it.
Blank lines and ``#`` comments are ignored.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional


class ConfigError(ValueError):
    def __init__(self, message, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    t = text.strip().lower()
    return None if t in ("", "none", "default") else int(t)


def _list(text):
    return [p.strip() for p in text.split(",") if p.strip()]


def _choice(*options):
    def parse(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t
    parse.options = options
    return parse


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    doc: str
    type_name: str


def _k(parse, default, doc, type_name=None):
    name = type_name or getattr(parse, "__name__", "str").lstrip("_")
    if hasattr(parse, "options"):
        name = "|".join(parse.options)
    return Key(parse, default, doc, name)


SCHEMA: dict[str, Key] = {
    "command": _k(_choice("train", "contraction", "compare", "evaluate", "sweep"), "train",
                  "what to run; the command-line positional overrides it"),
    "env": _k(_choice("pricing", "toy", "auction"), "pricing", "environment"),
    # pricing
    "env.pricing.S": _k(int, 10, "inventory levels (states 0..S-1)"),
    "env.pricing.Q": _k(int, 10, "production grid 1..Q"),
    "env.pricing.H": _k(int, 10, "replenishment grid 0..H-1"),
    "env.pricing.d": _k(float, 50.0, "benchmark demand"),
    "env.pricing.sigma": _k(float, 2.0, "demand elasticity"),
    "env.pricing.c0": _k(float, 0.5, "unit production cost"),
    "env.pricing.c1": _k(float, 0.1, "quadratic production cost"),
    "env.pricing.c2": _k(float, 0.5, "unit replenishment cost"),
    "env.pricing.c3": _k(float, 0.2, "shortage premium over c2"),
    "env.pricing.c4": _k(float, 0.2, "unit holding cost"),
    "env.pricing.gamma": _k(float, 0.2, "discount factor"),
    "env.pricing.q_floor": _k(float, 0.01, "supply floor before inverting demand"),
    # toy
    "env.toy.p": _k(float, 0.5, "target Bernoulli parameter"),
    "env.toy.gamma": _k(float, 0.5, "discount factor"),
    # auction
    "env.auction.s_max": _k(int, 10, "largest budget"),
    "env.auction.a_max": _k(int, 10, "largest bid"),
    "env.auction.M": _k(int, 5, "bidders per slot"),
    "env.auction.rho": _k(float, 0.2, "overshoot penalty rate"),
    "env.auction.gamma": _k(float, 0.8, "discount factor"),
    # algorithm
    "algorithm": _k(_choice("gmf_v", "gmf_p", "gmf_naive", "gmf_vw", "gmf_pw", "il", "mfq"),
                    "gmf_v", "learner for train/sweep"),
    "algorithms": _k(_list, ["gmf_vw", "mfq", "il"], "comma-separated learners for compare",
                     "list"),
    "inner": _k(_choice("default", "q_learning", "trpo", "exact"), "default",
                "inner solver; default is q_learning for value loops, trpo for policy loops"),
    "loop.K": _k(int, 20, "outer iterations"),
    "loop.inner_steps": _k(_opt_int, None, "Q-learning iterations T_k; none = 100|S||A|", "int"),
    "loop.td_steps": _k(_opt_int, None, "TD iterations l_k; none = 100|S||A|", "int"),
    "loop.evaluation": _k(_choice("td", "exact"), "td", "how policy loops evaluate their policy"),
    "loop.q_init": _k(float, 0.0, "initial Q value C"),
    "loop.N": _k(int, 20, "population size for weak loops"),
    "loop.vi_tol": _k(float, 1e-8, "value-iteration accuracy for exact inner solves"),
    "schedule.kind": _k(_choice("constant", "polynomial"), "constant", "inner step sizes"),
    "schedule.eta": _k(float, 0.01, "constant step size"),
    "schedule.h": _k(float, 0.7, "polynomial exponent, beta_l = (l+1)^-h"),
    "smoothing.kind": _k(_choice("softmax_c", "argmax_e"), "softmax_c", "policy selection rule"),
    "smoothing.c": _k(float, 4.0, "softmax temperature c"),
    "eps_net.digits": _k(int, 4, "projection grid 10^-digits; 0 disables projection"),
    "trpo.episodes": _k(int, 1000, "TRPO episodes per inner solve"),
    "trpo.m0": _k(int, 256, "samples per episode"),
    "trpo.bregman": _k(_choice("kl", "euclidean"), "kl", "proximal divergence"),
    "trpo.step_scale": _k(float, 10.0, "constant multiplying the step size t_l"),
    "trpo.rollout_tol": _k(float, 1e-2, "truncation bias bound for Q rollouts"),
    "trpo.eval_every": _k(int, 10, "episodes between exact evaluations of the iterate"),
    # baselines
    "baseline.steps": _k(int, 1_000_000, "joint training steps for il/mfq"),
    "baseline.bins": _k(int, 10, "mean-action bins for mfq"),
    "baseline.h": _k(float, 0.7, "visit-count step exponent"),
    "baseline.eps_start": _k(float, 0.1, "initial exploration rate"),
    "baseline.eps_end": _k(float, 0.01, "final exploration rate"),
    # metrics
    "metric.eps0": _k(float, 0.1, "safeguard in the normalized gap"),
    "metric.mc_profiles": _k(int, 100, "sampled initial profiles for N-player exploitability"),
    "metric.br_steps": _k(int, 100_000, "best-response learning steps per profile"),
    "metric.rollouts": _k(int, 200, "rollouts per value estimate"),
    "metric.nplayer": _k(_bool, False,
                         "evaluate also estimates N-player exploitability (pricing only)", "bool"),
    "compare.checkpoints": _k(int, 5, "evaluation points along training"),
    "compare.N": _k(int, 20, "players in the N-player game"),
    "contraction.pairs": _k(int, 1000, "random mean-field pairs"),
    "evaluate.policy": _k(str, "", "policy CSV (s,a,prob) to evaluate"),
    "sweep.key": _k(str, "", "dotted key to vary"),
    "sweep.values": _k(_list, [], "comma-separated values", "list"),
    "run.replicates": _k(int, 20, "independent sample paths"),
    "run.seed": _k(int, 0, "base seed"),
    "run.out": _k(str, "out", "output directory"),
    "run.workers": _k(int, 1, "worker processes for replicates"),
}

# keys that do not influence results and are left out of manifests
NON_RESULT_KEYS = ("run.out", "run.workers")


def format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ", ".join(str(x) for x in v)
    return str(v)


class Config(dict):
    """Resolved configuration; every schema key is present."""

    def section(self, prefix):
        pre = prefix + "."
        return {k[len(pre):]: v for k, v in self.items() if k.startswith(pre)}

    def dump(self, include_all=False) -> str:
        lines = []
        for key in SCHEMA:
            if not include_all and key in NON_RESULT_KEYS:
                continue
            lines.append(f"{key} = {format_value(self[key])}")
        return "\n".join(lines) + "\n"


def parse_value(key, text, line=None):
    if key not in SCHEMA:
        raise ConfigError(f"unknown key {key!r}", line)
    try:
        return SCHEMA[key].parse(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {exc}", line) from None


def parse_text(text: str) -> Config:
    cfg = Config({k: v.default for k, v in SCHEMA.items()})
    seen = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", n)
        key, value = (p.strip() for p in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", n)
        seen[key] = n
        cfg[key] = parse_value(key, value, n)
    cfg._lines = seen
    validate(cfg)
    return cfg


def validate(cfg: Config):
    lines = getattr(cfg, "_lines", {})

    def need(cond, key, msg):
        if not cond:
            raise ConfigError(f"{key}: {msg}", lines.get(key))

    need(cfg["run.replicates"] >= 1, "run.replicates", "must be >= 1")
    need(cfg["run.workers"] >= 1, "run.workers", "must be >= 1")
    need(cfg["loop.K"] >= 0, "loop.K", "must be >= 0")
    need(cfg["loop.N"] >= 1, "loop.N", "must be >= 1")
    need(cfg["eps_net.digits"] >= 0, "eps_net.digits", "must be >= 0")
    need(cfg["smoothing.c"] > 0, "smoothing.c", "must be positive")
    need(cfg["baseline.bins"] >= 2, "baseline.bins", "mfq needs at least 2 bins")
    need(cfg["metric.eps0"] > 0, "metric.eps0", "must be positive")
    need(cfg["contraction.pairs"] >= 1, "contraction.pairs", "must be >= 1")
    need(cfg["compare.checkpoints"] >= 1, "compare.checkpoints", "must be >= 1")
    for a in cfg["algorithms"]:
        need(a in SCHEMA["algorithm"].parse.options, "algorithms", f"unknown algorithm {a!r}")
    if cfg["command"] == "sweep":
        need(cfg["sweep.key"] in SCHEMA, "sweep.key", f"unknown key {cfg['sweep.key']!r}")
        need(len(cfg["sweep.values"]) > 0, "sweep.values", "needs at least one value")
        for v in cfg["sweep.values"]:
            parse_value(cfg["sweep.key"], v, lines.get("sweep.values"))
    if cfg["command"] == "evaluate":
        need(bool(cfg["evaluate.policy"]), "evaluate.policy", "evaluate needs a policy file")


def load(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse_text(fh.read())


def schema_markdown() -> str:
    rows = ["# Config keys", "",
            "One `key = value` per line; `#` starts a comment. Unlisted keys are rejected.", "",
            "| key | type | default | meaning |", "|---|---|---|---|"]
    for key, k in SCHEMA.items():
        type_name = k.type_name.replace("|", " \\| ")
        rows.append(f"| `{key}` | {type_name} | `{format_value(k.default)}` | {k.doc} |")
    return "\n".join(rows) + "\n"
