"""argmax-e, the generalized softmax family, action gaps and eps-net projection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

TIE_ATOL = 1e-12


@dataclass(frozen=True)
class SmoothingConfig:
    kind: str = "softmax_c"  # argmax_e | softmax_c | softmax_h
    c: float = 4.0
    c_prime: Optional[float] = None
    h: Optional[Callable[[np.ndarray], np.ndarray]] = None
    h_grid: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("argmax_e", "softmax_c", "softmax_h"):
            raise ValueError(f"unknown smoothing kind {self.kind!r}")
        if self.c_prime is None:
            object.__setattr__(self, "c_prime", self.c)
        if not (self.c >= self.c_prime > 0):
            raise ValueError("need c >= c' > 0")
        if self.kind == "softmax_h":
            if self.h is None:
                raise ValueError("softmax_h needs a link function h")
            grid = np.linspace(-10, 10, 41) if self.h_grid is None else np.asarray(self.h_grid, float)
            check_link(self.h, grid, self.c, self.c_prime)

    def __call__(self, Q):
        return smooth_policy(Q, self)


def check_link(h, grid, c, c_prime):
    """Check c'(x-y) <= h(x)-h(y) <= c(x-y) pairwise on a grid."""
    x = np.sort(np.asarray(grid, float))
    hx = np.asarray(h(x), float)
    dx = x[:, None] - x[None, :]
    dh = hx[:, None] - hx[None, :]
    upper = dx > 0
    slack = 1e-12 * (1 + np.abs(dx))
    if np.any(dh[upper] < c_prime * dx[upper] - slack[upper]) or np.any(
        dh[upper] > c * dx[upper] + slack[upper]
    ):
        raise ValueError("link function violates the (c', c) slope bounds")


def argmax_e(x, atol: float = TIE_ATOL):
    """Uniform distribution over the (tolerance-detected) argmax set.

    Works row-wise on 2-D input.
    """
    x = np.asarray(x, dtype=float)
    top = x.max(axis=-1, keepdims=True)
    ties = (x >= top - atol).astype(float)
    return ties / ties.sum(axis=-1, keepdims=True)


def softmax(z):
    z = np.asarray(z, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_c(x, c: float):
    return softmax(c * np.asarray(x, dtype=float))


def softmax_h(x, cfg: SmoothingConfig):
    if cfg.kind == "softmax_c":
        return softmax_c(x, cfg.c)
    if cfg.kind != "softmax_h":
        raise ValueError("softmax_h needs a softmax_c or softmax_h config")
    # evaluate h first, then stabilise in exponent space
    return softmax(cfg.h(np.asarray(x, dtype=float)))


def smooth_policy(Q, cfg: SmoothingConfig):
    """Row-wise smoothed greedy policy from a Q table."""
    if cfg.kind == "argmax_e":
        return argmax_e(Q)
    return softmax_h(Q, cfg)


def action_gap(Q, s=None, atol: float = TIE_ATOL):
    """Gap between the best value and the best non-maximal value.

    Returns ``inf`` when every action is maximal. With ``s=None`` the gap
    is returned for every row of a 2-D table.
    """
    Q = np.asarray(Q, dtype=float)
    if s is not None:
        Q = Q[s]
    if Q.ndim == 1:
        top = Q.max()
        rest = Q[Q < top - atol]
        return float(top - rest.max()) if rest.size else np.inf
    return np.array([action_gap(row, atol=atol) for row in Q])


@dataclass(frozen=True)
class EpsNetConfig:
    digits: int = 4

    def __post_init__(self):
        if int(self.digits) < 1:
            raise ValueError("digits must be >= 1")

    @property
    def quantum(self) -> float:
        return 10.0 ** (-self.digits)


def project_eps_net(L, cfg: EpsNetConfig = EpsNetConfig()):
    """Project a distribution onto the 10^-digits grid.

    Truncates every cell, then hands the missing quanta one at a time to
    the cells with the largest truncated remainders (ties to the lowest
    flat index).
    """
    L = np.asarray(L, dtype=float)
    units = round_to_units(L.ravel(), 10**cfg.digits)
    return (units / 10**cfg.digits).reshape(L.shape)


def round_to_units(p, total: int):
    """Largest-remainder apportionment of ``total`` integer units to ``p``."""
    p = np.clip(np.asarray(p, dtype=float), 0, None)
    p = p / p.sum()
    scaled = p * total
    units = np.floor(scaled + 1e-9).astype(np.int64)
    # rounding makes float noise irrelevant when ranking remainders
    remainder = np.round(scaled - units, 9)
    deficit = int(total - units.sum())
    if deficit > 0:
        # stable sort keeps lowest index first among equal remainders
        order = np.argsort(-remainder, kind="stable")
        units[order[:deficit]] += 1
    elif deficit < 0:
        order = np.argsort(remainder, kind="stable")
        take = [i for i in order if units[i] > 0][: -deficit]
        units[take] -= 1
    return units
