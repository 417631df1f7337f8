"""Correlated primary-channel traces: AR(1) Gauss-Markov and a Jakes comparator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize, signal, special

from cogpower.fading import FadingParams, _as_fading

MODELS = ("ar1", "jakes")
JAKES_RAYS = 64
_J0_FIRST_ZERO = special.jn_zeros(0, 1)[0]

# ComplexGain: the primary amplitude gain h11 is a plain Python/numpy complex.
ComplexGain = complex


@dataclass(frozen=True)
class ChannelTrace:
    """One primary-channel realization.

    ``h`` holds the complex amplitude per packet; ``gains`` are exactly
    ``h.real**2 + h.imag**2``.
    """

    h: np.ndarray
    alpha: FadingParams
    seed: int
    model: str = "ar1"
    gains: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        if h.ndim != 1 or h.size < 1:
            raise ValueError("trace needs at least one packet")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "gains", h.real**2 + h.imag**2)

    def __len__(self):
        return self.h.size


def _complex_normal(rng: np.random.Generator, size=None):
    # E|w|^2 = 1: each component has variance 1/2
    z = rng.standard_normal(size=(2,) if size is None else (*np.atleast_1d(size), 2))
    w = (z[..., 0] + 1j * z[..., 1]) * math.sqrt(0.5)
    return complex(w) if size is None else w


def ar1_step(h_prev, fp, rng: np.random.Generator):
    """Advance the AR(1) channel one packet.

    ``h_t = (1 - alpha) h_{t-1} + sqrt(2 alpha - alpha^2) w_t`` with ``w_t``
    circularly symmetric, ``E|w_t|^2 = 1``. ``h_prev`` may be a scalar or an
    array of independent chains.
    """
    fp = _as_fading(fp)
    h_prev = np.asarray(h_prev, dtype=complex)
    w = _complex_normal(rng, None if h_prev.ndim == 0 else h_prev.shape)
    out = fp.rho * h_prev + math.sqrt(fp.innovation_var) * w
    return complex(out) if np.ndim(out) == 0 else out


def packets_for_decorrelation(fp, target: float = 1e-5) -> int:
    """Packets needed for the first-to-last amplitude correlation to decay to ``target``."""
    fp = _as_fading(fp)
    if fp.alpha >= 1.0:
        raise ValueError("alpha = 1 is i.i.d.; supply the packet count explicitly")
    return int(math.ceil(math.log(target) / math.log1p(-fp.alpha)))


@lru_cache(maxsize=64)
def jakes_doppler(alpha: float) -> float:
    """Normalized Doppler ``f_d T`` with ``J0(2 pi f_d T) = 1 - alpha``."""
    target = 1.0 - alpha
    if target <= 0.0:
        return _J0_FIRST_ZERO / (2.0 * math.pi)
    if target >= 1.0:
        return 0.0
    x = optimize.brentq(lambda v: special.j0(v) - target, 0.0, _J0_FIRST_ZERO, xtol=1e-15, rtol=1e-15)
    return x / (2.0 * math.pi)


def _ar1_trace(fp: FadingParams, n: int, rng: np.random.Generator) -> np.ndarray:
    w = _complex_normal(rng, n)
    x = math.sqrt(fp.innovation_var) * w
    x[0] = w[0]  # stationary start, independent of later innovations
    return signal.lfilter([1.0], [1.0, -fp.rho], x)


def _jakes_trace(fp: FadingParams, n: int, rng: np.random.Generator, rays: int = JAKES_RAYS) -> np.ndarray:
    # sum of sinusoids with evenly spaced, randomly rotated arrival angles
    fd = jakes_doppler(fp.alpha)
    rot = rng.uniform(-math.pi, math.pi)
    phases = rng.uniform(-math.pi, math.pi, size=rays)
    theta = (2.0 * math.pi * np.arange(1, rays + 1) - math.pi + rot) / rays
    t = np.arange(n, dtype=float)
    arg = 2.0 * math.pi * fd * np.outer(t, np.cos(theta)) + phases
    return np.exp(1j * arg).sum(axis=1) / math.sqrt(rays)


def gen_trace(fp, n: int, seed: int, model: str = "ar1") -> ChannelTrace:
    """Generate a deterministic trace of ``n`` packets from an integer seed."""
    fp = _as_fading(fp)
    if int(n) < 1:
        raise ValueError("n must be >= 1")
    if model not in MODELS:
        raise ValueError(f"unknown channel model {model!r}; expected one of {MODELS}")
    rng = np.random.default_rng(seed)
    if model == "ar1":
        h = _ar1_trace(fp, int(n), rng)
    else:
        h = _jakes_trace(fp, int(n), rng)
    return ChannelTrace(h=h, alpha=fp, seed=seed, model=model)


def realization_seed(master_seed: int, index: int) -> int:
    """Independent per-realization seed hashed from ``(master_seed, index)``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
