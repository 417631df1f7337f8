"""Secondary power selection.

Greedy maximizers of the weighted-sum throughput (delayed exact CSI or a
filtered ARQ belief) and the outage-constrained delayed-CSI policy solved by
bisection on the Lagrange multiplier.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import IO

import numpy as np
from scipy import integrate

from cogpower.belief import Belief, GammaGrid, _outage_mass_batch
from cogpower.fading import (
    FadingParams,
    LinkBudget,
    _as_fading,
    gamma_threshold,
    outage_cdf,
    secondary_rate,
)

POWER_NODES = 201
DUAL_TOL = 5e-4
LAMBDA_CAP = 1e6
BISECTION_STEPS = 60
QUAD_REFINE = 20


class InfeasibleError(ValueError):
    """The outage target is below what zero secondary power already incurs."""

    def __init__(self, message: str, natural_outage: float):
        super().__init__(message)
        self.natural_outage = natural_outage


@dataclass(frozen=True, eq=False)
class PowerGrid:
    """Candidate secondary powers, increasing from 0 to ``p_max``."""

    powers: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.powers, dtype=float)
        if p.ndim != 1 or p.size < 1 or p[0] != 0.0 or np.any(np.diff(p) <= 0):
            raise ValueError("powers must start at 0 and be strictly increasing")
        p.setflags(write=False)
        object.__setattr__(self, "powers", p)

    @classmethod
    def uniform(cls, p_max: float = 20.0, n: int = POWER_NODES) -> "PowerGrid":
        p = np.linspace(0.0, p_max, n)
        p[-1] = p_max
        return cls(p)

    @property
    def p_max(self) -> float:
        return float(self.powers[-1])

    def __len__(self):
        return self.powers.size


def _objective(outage: np.ndarray, beta, rates: np.ndarray, R_o: float) -> np.ndarray:
    """Weighted sum per candidate power; ``outage`` is ``(powers, columns)``."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    return (1.0 - beta)[None, :] * rates[:, None] + (beta * R_o)[None, :] * (1.0 - outage)


def _argmax(obj: np.ndarray):
    # np.argmax returns the first maximum: the smallest power on ties
    idx = np.argmax(obj, axis=0)
    return idx, obj[idx, np.arange(obj.shape[1])]


def _check_beta(beta):
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta!r}")


def greedy_power_cg(gamma_prev: float, beta: float, fp, b: LinkBudget, pg: PowerGrid):
    """Best power on ``pg`` given the exact previous gain; returns ``(power, throughput)``."""
    _check_beta(beta)
    fp = _as_fading(fp)
    gth = gamma_threshold(pg.powers, b)
    out = outage_cdf(gth, gamma_prev, fp)[:, None]
    idx, val = _argmax(_objective(out, beta, secondary_rate(pg.powers, b), b.R_o))
    return float(pg.powers[idx[0]]), float(val[0])


def greedy_power_arq(predicted: Belief, beta: float, b: LinkBudget, pg: PowerGrid):
    """Best power on ``pg`` against the predicted ARQ belief; returns ``(power, throughput)``."""
    _check_beta(beta)
    gth = gamma_threshold(pg.powers, b)
    out = _outage_mass_batch(predicted.grid, predicted.density[:, None], gth)
    idx, val = _argmax(_objective(out, beta, secondary_rate(pg.powers, b), b.R_o))
    return float(pg.powers[idx[0]]), float(val[0])


@dataclass(frozen=True, eq=False)
class PowerPolicy:
    """Secondary power as a function of the delayed primary gain.

    ``status`` is ``"constrained"`` when the outage target binds and
    ``"slack"`` when full power already satisfies it.
    """

    grid: GammaGrid
    power: np.ndarray
    lam: float
    achieved_outage: float
    achieved_rate: float
    P_out: float = 1.0
    status: str = "constrained"
    R_o: float = field(default=math.log(11.0), repr=False)

    @property
    def beta_equivalent(self) -> float:
        """Weight at which the weighted-sum maximizer selects the same powers."""
        return self.lam / (self.lam + self.R_o)

    def to_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gamma", "power"])
        for g, p in zip(self.grid.nodes, self.power):
            w.writerow([repr(float(g)), repr(float(p))])


class _DualProblem:
    """Per-node Lagrangian maximization against the stationary delayed-gain law.

    Expectations use trapezoid quadrature against ``exp(-g')`` on a refined
    copy of the grid, plus the tail above ``gamma_max`` at full power.
    """

    def __init__(self, fp: FadingParams, b: LinkBudget, gg: GammaGrid, pg: PowerGrid, refine: int):
        self.gg, self.pg, self.b, self.refine = gg, pg, b, refine
        fine = gg.refine(refine)
        x = fine.nodes
        self.v = fine.weights * np.exp(-x)
        gth = gamma_threshold(pg.powers, b)
        self.outage = outage_cdf(gth[None, :], x[:, None], fp)
        self.rates = secondary_rate(pg.powers, b)
        gmax = gg.gamma_max
        self.tail_rate = math.exp(-gmax) * float(self.rates[-1])
        self.tail_outage = _tail_outage(float(gth[-1]), fp, gmax)
        self.natural_outage = float(self.v @ self.outage[:, 0]) + _tail_outage(float(gth[0]), fp, gmax)
        self._rows = np.arange(x.size)

    def solve(self, lam: float):
        idx = np.argmax(self.rates[None, :] - lam * self.outage, axis=1)
        eo = float(self.v @ self.outage[self._rows, idx]) + self.tail_outage
        er = float(self.v @ self.rates[idx]) + self.tail_rate
        return idx, eo, er

    def policy(self, lam, idx, eo, er, P_out, status) -> PowerPolicy:
        power = self.pg.powers[idx[:: self.refine]]
        return PowerPolicy(self.gg, power, lam, eo, er, P_out, status, self.b.R_o)


def _tail_outage(gth: float, fp: FadingParams, gmax: float) -> float:
    val, _ = integrate.quad(
        lambda g: outage_cdf(gth, g, fp) * math.exp(-g), gmax, np.inf, epsabs=1e-14, limit=200
    )
    return val


def lagrangian_policy(fp, lam: float, b: LinkBudget, gg: GammaGrid, pg: PowerGrid, refine: int = QUAD_REFINE):
    """Per-node maximizer of ``rate - lam * outage`` for a fixed multiplier."""
    if lam < 0:
        raise ValueError("multiplier must be >= 0")
    prob = _DualProblem(_as_fading(fp), b, gg, pg, refine)
    idx, eo, er = prob.solve(lam)
    return prob.policy(lam, idx, eo, er, 1.0, "fixed")


def solve_cg_constrained(
    fp,
    P_out: float,
    b: LinkBudget,
    gg: GammaGrid,
    pg: PowerGrid,
    refine: int = QUAD_REFINE,
    tol: float = DUAL_TOL,
) -> PowerPolicy:
    """Maximize the expected secondary rate subject to an expected primary outage cap.

    Bisects the multiplier until the expected outage is within ``tol`` of
    ``P_out`` and returns the feasible side. Raises :class:`InfeasibleError`
    when zero power everywhere already exceeds ``P_out``.
    """
    if not 0.0 < P_out <= 1.0:
        raise ValueError("P_out must lie in (0, 1]")
    fp = _as_fading(fp)
    prob = _DualProblem(fp, b, gg, pg, refine)
    idx, eo, er = prob.solve(0.0)
    if eo <= P_out:
        return prob.policy(0.0, idx, eo, er, P_out, "slack")
    if prob.natural_outage > P_out:
        raise InfeasibleError(
            f"outage target {P_out:g} is below the natural outage {prob.natural_outage:.6f}",
            prob.natural_outage,
        )
    lo, hi = 0.0, 1.0
    hi_sol = prob.solve(hi)
    while hi_sol[1] > P_out:
        lo, hi = hi, 2.0 * hi
        if hi > LAMBDA_CAP:
            raise InfeasibleError(
                f"outage target {P_out:g} not reachable (natural outage {prob.natural_outage:.6f})",
                prob.natural_outage,
            )
        hi_sol = prob.solve(hi)
    for _ in range(BISECTION_STEPS):
        if P_out - hi_sol[1] <= tol:
            break
        mid = 0.5 * (lo + hi)
        sol = prob.solve(mid)
        if sol[1] > P_out:
            lo = mid
        else:
            hi, hi_sol = mid, sol
    return prob.policy(hi, *hi_sol, P_out, "constrained")


@lru_cache(maxsize=8)
def default_power_grid(p_max: float = 20.0, n: int = POWER_NODES) -> PowerGrid:
    return PowerGrid.uniform(p_max, n)
