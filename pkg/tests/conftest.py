import itertools
import math

import numpy as np
import pytest
from scipy import integrate

from cogpower.fading import FadingParams, LinkBudget

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def budget():
    return LinkBudget()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def i0_series(x: float, terms: int = 400) -> float:
    """Truncated power series sum (x^2/4)^k / (k!)^2."""
    s, t = 0.0, 1.0
    for k in range(terms):
        s += t
        t *= (x * x / 4.0) / ((k + 1) ** 2)
    return s


def rician_pdf_oracle(g: float, gp: float, alpha: float) -> float:
    """Transition density written out directly from its closed form, series Bessel."""
    c = 2 * alpha - alpha**2
    z = 2 * (1 - alpha) * math.sqrt(g * gp) / c
    return (1 / c) * math.exp(-(g + (1 - alpha) ** 2 * gp) / c) * i0_series(z)


def quad_cdf(gth: float, gp: float, alpha: float) -> float:
    """Quadrature of the transition density on [0, gth] (log-domain integrand)."""
    from cogpower.fading import cond_pdf

    if gth == 0:
        return 0.0
    fp = FadingParams(alpha)
    mode = (1 - alpha) ** 2 * gp
    pts = [p for p in (mode,) if 0 < p < gth]
    val, _ = integrate.quad(lambda g: cond_pdf(g, gp, fp), 0.0, gth, points=pts or None,
                            epsabs=1e-13, epsrel=1e-12, limit=400)
    return val


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def brute_posterior(prior_mass, trans, acks, thresholds, nodes):
    """Posterior over the last state by summing every state path explicitly."""
    n = len(nodes)
    T = len(acks)
    paths = np.array(list(itertools.product(range(n), repeat=T + 1)))
    w = prior_mass[paths[:, 0]].copy()
    for t in range(T):
        i, j = paths[:, t + 1], paths[:, t]
        w *= trans[i, j]
        w *= (nodes[i] >= thresholds[t]) == acks[t]
    return np.bincount(paths[:, -1], weights=w, minlength=n)
