"""Finite probability spaces, distributions over them, and distances.

Distributions are plain numpy arrays. The ``as_*`` helpers validate and
return float arrays; everything else is a pure function.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

# construction tolerance for probability tables
PROB_ATOL = 1e-9
# fixed-point residual tolerance
RESIDUAL_TOL = 1e-8


class DimensionError(ValueError):
    pass


class GeometryError(ValueError):
    """Raised when a distance is requested on a geometry it does not support."""


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class FiniteSpace:
    """A finite set of points embedded in R^k.

    ``coords`` has shape (size, k). States use k=1; pricing actions use
    k=2, one coordinate each for production and replenishment.
    """

    coords: np.ndarray
    labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("coords must be a nonempty (size, k) array")
        if c.shape[0] > 1:
            dists = _pairwise(c)
            off = dists[~np.eye(len(c), dtype=bool)]
            if off.min() <= 0:
                raise ValueError("embedding coordinates must be pairwise distinct")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @classmethod
    def grid(cls, n: int, start: float = 0.0) -> "FiniteSpace":
        return cls(np.arange(n, dtype=float) + start)

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def d_min(self) -> float:
        if self.size == 1:
            return np.inf
        d = _pairwise(self.coords)
        return float(d[~np.eye(self.size, dtype=bool)].min())

    @property
    def diam(self) -> float:
        return float(_pairwise(self.coords).max())

    def __len__(self):
        return self.size


def _pairwise(c):
    return np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(-1))


def as_distribution(x, atol: float = PROB_ATOL) -> np.ndarray:
    """Validate a probability vector (any shape) and return it as floats."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty distribution")
    if not np.all(np.isfinite(x)):
        raise ValueError("distribution has non-finite entries")
    if x.min() < -atol:
        raise ValueError(f"negative probability {x.min():.3g}")
    if abs(x.sum() - 1.0) > atol:
        raise ValueError(f"total mass {x.sum():.12g} differs from 1")
    return x


def as_mean_field(L, shape=None) -> np.ndarray:
    L = as_distribution(L)
    if L.ndim != 2:
        raise DimensionError("a mean field is a (state, action) table")
    if shape is not None and L.shape != tuple(shape):
        raise DimensionError(f"mean field shape {L.shape} != {tuple(shape)}")
    return L


def as_policy(pi, shape=None, atol: float = PROB_ATOL) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 2:
        raise DimensionError("a policy is a (state, action) table")
    if shape is not None and pi.shape != tuple(shape):
        raise DimensionError(f"policy shape {pi.shape} != {tuple(shape)}")
    if pi.min() < -atol or np.abs(pi.sum(1) - 1).max() > atol:
        raise ValueError("policy rows must be probability vectors")
    return pi


def marginals(L):
    """State marginal mu and action marginal alpha of a mean field."""
    L = np.asarray(L, dtype=float)
    return L.sum(axis=1), L.sum(axis=0)


def joint(mu, pi):
    """L(s, a) = mu(s) pi(a|s)."""
    return np.asarray(mu, dtype=float)[:, None] * np.asarray(pi, dtype=float)


def _check_same(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    return x, y


def l1_distance(x, y) -> float:
    x, y = _check_same(x, y)
    return float(np.abs(x - y).sum())


def tv_distance(x, y) -> float:
    return l1_distance(x, y) / 2


def w1_distance_1d(x, y, space: FiniteSpace) -> float:
    """W1 on a 1-D support through the CDF formula."""
    x, y = _check_same(x, y)
    if space.dim != 1:
        raise GeometryError("w1_distance_1d needs a 1-D embedding")
    if x.ndim != 1 or x.size != space.size:
        raise DimensionError("distribution size does not match the space")
    coords = space.coords[:, 0]
    order = np.argsort(coords)
    cx = np.cumsum(x[order])[:-1]
    cy = np.cumsum(y[order])[:-1]
    return float(np.sum(np.abs(cx - cy) * np.diff(coords[order])))


def w2_two_point(x, y) -> float:
    """W2 between two laws on two points at unit distance."""
    x, y = _check_same(x, y)
    if x.shape != (2,):
        raise GeometryError("w2_two_point needs a two-point support")
    return float(np.sqrt(abs(x[1] - y[1])))


def _matrix_power_rows(mu, P, max_steps):
    """Yield (steps, mu P^steps) for steps = 1, 2, 4, ... up to max_steps."""
    Pk = P.copy()
    steps = 1
    while steps <= max_steps:
        yield steps, mu @ Pk
        Pk = Pk @ Pk
        steps *= 2


def invariant_distribution(P, max_steps: int = 10**6, tol: float = RESIDUAL_TOL):
    """Invariant law of a row-stochastic matrix, started from uniform.

    Iterates the lazy chain (I + P)/2, which has exactly the invariant laws
    of P but is aperiodic. Steps are taken by repeated squaring, so the
    cap ``max_steps`` costs only log2(max_steps) matrix products.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n):
        raise DimensionError("transition matrix must be square")
    if P.min() < -PROB_ATOL or np.abs(P.sum(1) - 1).max() > PROB_ATOL:
        raise ValueError("transition matrix rows must be stochastic")
    lazy = 0.5 * (np.eye(n) + P)
    start = np.full(n, 1.0 / n)
    mu = start
    for _, mu in _matrix_power_rows(start, lazy, max_steps):
        mu = np.clip(mu, 0, None)
        mu = mu / mu.sum()
        if np.abs(mu @ P - mu).sum() <= tol:
            return mu
    raise ConvergenceError(
        f"no invariant distribution within {max_steps} steps "
        f"(residual {np.abs(mu @ P - mu).sum():.3g})"
    )


def transport_lp(x, y, cost) -> float:
    """Brute-force optimal transport cost through a linear program."""
    from scipy.optimize import linprog

    x, y = np.asarray(x, float), np.asarray(y, float)
    x, y = x / x.sum(), y / y.sum()
    m, n = len(x), len(y)
    A = []
    for i in range(m):
        row = np.zeros((m, n))
        row[i] = 1
        A.append(row.ravel())
    for j in range(n):
        col = np.zeros((m, n))
        col[:, j] = 1
        A.append(col.ravel())
    # HiGHS presolve declares near-degenerate problems (masses ~1e-10) infeasible
    # at these tolerances; the plain simplex solves them
    res = linprog(np.asarray(cost, float).ravel(), A_eq=np.array(A),
                  b_eq=np.concatenate([x, y]), bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10, "presolve": False})
    if res.status != 0:
        raise ConvergenceError(f"transport LP failed: {res.message}")
    return float(res.fun)


def random_simplex(rng, n, size=None):
    """Uniform draws on the probability simplex (flat Dirichlet)."""
    return rng.dirichlet(np.ones(n), size=size)


def product_space(*spaces: FiniteSpace) -> FiniteSpace:
    pts = [np.concatenate(p) for p in itertools.product(*(s.coords for s in spaces))]
    return FiniteSpace(np.array(pts))
