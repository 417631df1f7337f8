"""Outage threshold, conditional gain density and the weighted-sum objective.

All gains are squared magnitudes of the primary channel, ``gamma = |h11|**2``.
Throughput is in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats


@dataclass(frozen=True)
class LinkBudget:
    """Scalar radio parameters of the primary/secondary pair.

    Defaults are the desk setting: SINR 10 dB primary rate, unit noise.
    """

    p_p: float = 95.0
    p_max: float = 20.0
    g21: float = 1.0
    g22: float = 2.0
    sigma_p2: float = 1.0
    sigma_s2: float = 1.0
    R_o: float = math.log(11.0)

    def __post_init__(self):
        for name in ("p_p", "p_max", "sigma_p2", "sigma_s2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        for name in ("g21", "g22"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if not self.R_o >= 0:
            raise ValueError(f"R_o must be >= 0, got {self.R_o!r}")


@dataclass(frozen=True)
class FadingParams:
    """Correlation parameter of the AR(1) primary channel, ``0 < alpha <= 1``."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")

    @property
    def rho(self) -> float:
        """Lag-1 amplitude correlation ``1 - alpha``."""
        return 1.0 - self.alpha

    @property
    def innovation_var(self) -> float:
        """``2*alpha - alpha**2``, the innovation variance."""
        return self.alpha * (2.0 - self.alpha)


def _as_fading(fp) -> FadingParams:
    return fp if isinstance(fp, FadingParams) else FadingParams(float(fp))


def gamma_threshold(p_s, b: LinkBudget):
    """Primary gain below which the primary link is in outage.

    ``(exp(R_o) - 1) * (p_s*g21 + sigma_p2) / p_p``. Accepts scalars or arrays.
    """
    p = np.asarray(p_s, dtype=float)
    if np.any(p < 0) or np.any(p > b.p_max) or np.any(np.isnan(p)):
        raise ValueError(f"secondary power must lie in [0, {b.p_max}]")
    out = math.expm1(b.R_o) * (p * b.g21 + b.sigma_p2) / b.p_p
    return float(out) if out.ndim == 0 else out


def bessel_i0_scaled(x):
    """``exp(-x) * I0(x)`` for ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("bessel_i0_scaled requires x >= 0")
    out = special.i0e(x)
    return float(out) if out.ndim == 0 else out


def log_cond_pdf(gamma_t, gamma_prev, fp):
    """Natural log of :func:`cond_pdf`; ``-inf`` never occurs for finite gains.

    The Rician exponent and the Bessel growth are merged as
    ``-(sqrt(g) - rho*sqrt(g'))**2 / c + log(i0e(z))`` so nothing overflows.
    """
    fp = _as_fading(fp)
    g = np.asarray(gamma_t, dtype=float)
    gp = np.asarray(gamma_prev, dtype=float)
    if np.any(g < 0) or np.any(gp < 0):
        raise ValueError("gains must be nonnegative")
    c = fp.innovation_var
    rho = fp.rho
    sg = np.sqrt(g)
    sgp = np.sqrt(gp)
    z = 2.0 * rho * sg * sgp / c
    return -math.log(c) - (sg - rho * sgp) ** 2 / c + np.log(special.i0e(z))


def cond_pdf(gamma_t, gamma_prev, fp):
    """Density of the current gain given the previous one (Rician, noncentral chi-square 2 dof)."""
    out = np.exp(log_cond_pdf(gamma_t, gamma_prev, fp))
    return float(out) if np.ndim(out) == 0 else out


def marcum_q1(a, b):
    """First-order Marcum Q function ``Q1(a, b)``.

    Tail probability of a noncentral chi-square with two degrees of freedom
    and noncentrality ``a**2`` beyond ``b**2``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("marcum_q1 requires a, b >= 0")
    shape = np.broadcast_shapes(a.shape, b.shape)
    a, b = (np.broadcast_to(v, shape).ravel() for v in (a, b))
    cdf = special.chndtr(b * b, 2.0, a * a)
    out = 1.0 - cdf
    # survival function keeps relative precision in the far tail
    upper = cdf >= 0.5
    if np.any(upper):
        out[upper] = stats.ncx2.sf(b[upper] ** 2, 2.0, a[upper] ** 2)
    out = np.clip(np.where(b == 0, 1.0, out), 0.0, 1.0).reshape(shape)
    return float(out) if out.ndim == 0 else out


def outage_cdf(gamma_th, gamma_prev, fp):
    """Probability that the next gain falls below ``gamma_th`` given the previous gain.

    Equals ``1 - Q1(rho*sqrt(2 g'/c), sqrt(2 gamma_th/c))``; computed through the
    noncentral chi-square CDF directly so small outage values keep full precision.
    """
    fp = _as_fading(fp)
    gt = np.asarray(gamma_th, dtype=float)
    gp = np.asarray(gamma_prev, dtype=float)
    if np.any(gt < 0) or np.any(gp < 0):
        raise ValueError("gains must be nonnegative")
    c = fp.innovation_var
    out = special.chndtr(2.0 * gt / c, 2.0, fp.rho**2 * 2.0 * gp / c)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def secondary_rate(p_s, b: LinkBudget):
    """Shannon rate of the secondary link, ``log(1 + p_s*g22/sigma_s2)``."""
    out = np.log1p(np.asarray(p_s, dtype=float) * b.g22 / b.sigma_s2)
    return float(out) if out.ndim == 0 else out


def weighted_sum_throughput(p_s, outage_prob, beta, b: LinkBudget):
    """Instantaneous weighted sum of secondary rate and expected primary throughput."""
    q = np.asarray(outage_prob, dtype=float)
    beta_a = np.asarray(beta, dtype=float)
    if np.any(beta_a < 0) or np.any(beta_a > 1):
        raise ValueError("beta must lie in [0, 1]")
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("outage probability must lie in [0, 1]")
    p = np.asarray(p_s, dtype=float)
    if np.any(p < 0):
        raise ValueError("secondary power must be >= 0")
    out = (1.0 - beta_a) * secondary_rate(p, b) + beta_a * b.R_o * (1.0 - q)
    return float(out) if np.ndim(out) == 0 else out
