"""Grid belief over the primary gain, filtered from 1-bit ARQ feedback.

A belief is a piecewise-linear density on a :class:`GammaGrid`; its mass is the
trapezoid sum ``sum(weights * density)``. Prediction integrates the Markov
transition density exactly against each piecewise-linear basis function, so
narrow kernels (small ``alpha``) are resolved without refining the grid.

The public functions take and return :class:`Belief` objects. The simulator
drives the ``_batch`` helpers directly with one density column per belief.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import IO

import numpy as np

from cogpower.fading import FadingParams, LinkBudget, _as_fading, cond_pdf, gamma_threshold

GAMMA_MAX = 8.0
GAMMA_NODES = 801
COLLAPSE_MASS = 1e-12


@dataclass(frozen=True, eq=False)
class GammaGrid:
    """Strictly increasing gain nodes on ``[0, gamma_max]`` with trapezoid weights."""

    nodes: np.ndarray
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise ValueError("grid needs at least two nodes")
        if x[0] != 0.0 or np.any(np.diff(x) <= 0):
            raise ValueError("nodes must start at 0 and be strictly increasing")
        dx = np.diff(x)
        w = np.zeros_like(x)
        w[:-1] += dx / 2
        w[1:] += dx / 2
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, gamma_max: float = GAMMA_MAX, n: int = GAMMA_NODES) -> "GammaGrid":
        return _uniform_grid(float(gamma_max), int(n))

    @property
    def gamma_max(self) -> float:
        return float(self.nodes[-1])

    def __len__(self):
        return self.nodes.size

    def same_as(self, other: "GammaGrid") -> bool:
        return self is other or (
            self.nodes.shape == other.nodes.shape and np.array_equal(self.nodes, other.nodes)
        )

    def refine(self, factor: int) -> "GammaGrid":
        """Grid with every cell split into ``factor`` equal sub-cells; keeps all nodes."""
        if factor < 1:
            raise ValueError("refinement factor must be >= 1")
        if factor == 1:
            return self
        u = np.arange(factor) / factor
        x = self.nodes
        fine = (x[:-1, None] + np.diff(x)[:, None] * u[None, :]).ravel()
        return GammaGrid(np.append(fine, x[-1]))


@lru_cache(maxsize=16)
def _uniform_grid(gamma_max: float, n: int) -> GammaGrid:
    if gamma_max <= 0 or n < 2:
        raise ValueError("need gamma_max > 0 and n >= 2")
    x = np.linspace(0.0, gamma_max, n)
    x[-1] = gamma_max
    return GammaGrid(x)


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Markov kernel on a grid, ``predict(d)[i] = sum_j weights[j] * values[i, j] * d[j]``.

    ``values[i, j]`` is the transition density at node ``i`` averaged over the
    hat function of source node ``j``; for smooth kernels it equals
    ``cond_pdf(node_i, node_j)`` to second order in the grid spacing.
    """

    grid: GammaGrid
    values: np.ndarray
    alpha: FadingParams | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        n = len(self.grid)
        if v.shape != (n, n):
            raise ValueError(f"kernel must be {n}x{n}, got {v.shape}")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("kernel values must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        # operator applied to raw densities
        op = v * self.grid.weights[None, :]
        op.setflags(write=False)
        object.__setattr__(self, "_op", op)

    @classmethod
    def build(cls, grid: GammaGrid, fp, order: int = 8) -> "TransitionKernel":
        fp = _as_fading(fp)
        return cls(grid, _hat_kernel(grid, fp, order), fp)

    def column_mass(self) -> np.ndarray:
        """Trapezoid mass landing inside ``[0, gamma_max]`` from each source node."""
        return self.grid.weights @ self.values


def _hat_kernel(grid: GammaGrid, fp: FadingParams, order: int) -> np.ndarray:
    x = grid.nodes
    dx = np.diff(x)
    t, tw = np.polynomial.legendre.leggauss(order)
    u = (t + 1.0) / 2.0  # local coordinate in each cell
    s = x[:-1, None] + dx[:, None] * u[None, :]  # (cells, order)
    qw = dx[:, None] * (tw / 2.0)[None, :]
    n = x.size
    acc = np.zeros((n, n))
    chunk = max(1, 2_000_000 // max(1, s.size))
    for lo in range(0, n, chunk):
        rows = slice(lo, min(n, lo + chunk))
        f = cond_pdf(x[rows, None, None], s[None, :, :], fp) * qw[None, :, :]
        acc[rows, :-1] += f @ (1.0 - u)
        acc[rows, 1:] += f @ u
    return acc / grid.weights[None, :]


@lru_cache(maxsize=16)
def kernel_for(alpha: float, gamma_max: float = GAMMA_MAX, n: int = GAMMA_NODES) -> TransitionKernel:
    """Cached kernel on the uniform grid."""
    return TransitionKernel.build(GammaGrid.uniform(gamma_max, n), FadingParams(alpha))


@dataclass(frozen=True, eq=False)
class Belief:
    """Normalized density over the current primary gain.

    ``resets`` counts how often an impossible observation forced a fallback to
    the stationary prior.
    """

    grid: GammaGrid
    density: np.ndarray
    resets: int = 0

    def __post_init__(self):
        d = np.asarray(self.density, dtype=float)
        if d.shape != self.grid.nodes.shape:
            raise ValueError("density must have one value per grid node")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("density must be finite and nonnegative")
        object.__setattr__(self, "density", d)

    @property
    def mass(self) -> float:
        return float(self.grid.weights @ self.density)

    def mean(self) -> float:
        """Mean gain under the piecewise-linear density."""
        x, d = self.grid.nodes, self.density
        dx = np.diff(x)
        # exact integral of x*d(x) for linear d on each cell
        seg = dx * (x[:-1] * (2 * d[:-1] + d[1:]) + x[1:] * (d[:-1] + 2 * d[1:])) / 6.0
        return float(seg.sum())

    def to_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "density"])
        for g, v in zip(self.grid.nodes, self.density):
            w.writerow([repr(float(g)), repr(float(v))])


@dataclass(frozen=True)
class ArqObservation:
    """ACK (True) or NACK (False) for a packet sent at secondary power ``power_used``."""

    ack: bool
    power_used: float

    def __post_init__(self):
        if self.power_used < 0:
            raise ValueError("power_used must be >= 0")


# -- batched array kernels ---------------------------------------------------


def _prior_density(grid: GammaGrid) -> np.ndarray:
    d = np.exp(-grid.nodes)
    return d / (grid.weights @ d)


def _normalize(grid: GammaGrid, D: np.ndarray) -> np.ndarray:
    return D / (grid.weights @ D)


def _predict_batch(kernel: TransitionKernel, D: np.ndarray) -> np.ndarray:
    out = kernel._op @ D
    return _normalize(kernel.grid, out)


def _likelihood_batch(grid: GammaGrid, D: np.ndarray, gamma_th, ack):
    """Indicator update of each column; returns ``(D_new, reset_mask)``.

    ACK keeps nodes with ``gain >= gamma_th``, NACK keeps ``gain < gamma_th``.
    """
    gamma_th = np.asarray(gamma_th, dtype=float)
    ack = np.asarray(ack, dtype=bool)
    keep = (grid.nodes[:, None] >= gamma_th[None, :]) == ack[None, :]
    out = np.where(keep, D, 0.0)
    mass = grid.weights @ out
    reset = mass < COLLAPSE_MASS
    if np.any(reset):
        out[:, reset] = _prior_density(grid)[:, None]
        mass = np.where(reset, 1.0, mass)
    return out / mass[None, :], reset


def _outage_mass_batch(grid: GammaGrid, D: np.ndarray, thresholds) -> np.ndarray:
    """Mass of each column on ``[0, threshold]``; shape ``(len(thresholds), columns)``."""
    x = grid.nodes
    dx = np.diff(x)
    thr = np.atleast_1d(np.asarray(thresholds, dtype=float))
    cum = np.zeros_like(D)
    cum[1:] = np.cumsum(dx[:, None] * (D[:-1] + D[1:]) / 2.0, axis=0)
    k = np.clip(np.searchsorted(x, thr, side="right") - 1, 0, x.size - 2)
    u = np.clip((thr - x[k]) / dx[k], 0.0, 1.0)[:, None]
    d0, d1 = D[k], D[k + 1]
    m = cum[k] + dx[k][:, None] * (d0 * u + (d1 - d0) * u * u / 2.0)
    return np.clip(m, 0.0, 1.0)


# -- public operations -------------------------------------------------------


def init_prior(grid: GammaGrid) -> Belief:
    """Stationary exponential prior, truncated to the grid and renormalized."""
    return Belief(grid, _prior_density(grid))


def likelihood_update(b: Belief, obs: ArqObservation, budget: LinkBudget) -> Belief:
    """Bayes update with the hard ACK/NACK likelihood at the outage threshold."""
    gth = gamma_threshold(obs.power_used, budget)
    d, reset = _likelihood_batch(b.grid, b.density[:, None], [gth], [obs.ack])
    return Belief(b.grid, d[:, 0], b.resets + int(reset[0]))


def predict(b: Belief, k: TransitionKernel) -> Belief:
    """Propagate the belief one packet through the Markov kernel.

    Mass that leaves ``[0, gamma_max]`` is returned by renormalization.
    """
    if not b.grid.same_as(k.grid):
        raise ValueError("belief and kernel are defined on different grids")
    return replace(b, density=_predict_batch(k, b.density[:, None])[:, 0])


def outage_mass(b: Belief, gamma_th) -> float:
    """Belief mass below ``gamma_th``, integrating the piecewise-linear density.

    Also accepts an array of thresholds and returns an array.
    """
    m = _outage_mass_batch(b.grid, b.density[:, None], gamma_th)[:, 0]
    return float(m[0]) if np.ndim(gamma_th) == 0 else m
