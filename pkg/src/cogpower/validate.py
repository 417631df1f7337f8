"""Desk-scale self checks behind ``cogpower validate``.

Each check is a small function that raises ``AssertionError`` on failure. The
runner times every check and prints one line per check, so a broken install
shows up as a named failure rather than a bad plot.
"""

from __future__ import annotations

import itertools
import math
import sys
import time
from typing import Callable, TextIO

import numpy as np
from scipy import integrate, special

from cogpower.belief import (
    ArqObservation,
    GammaGrid,
    TransitionKernel,
    init_prior,
    kernel_for,
    likelihood_update,
    predict,
)
from cogpower.channel import gen_trace, packets_for_decorrelation, realization_seed
from cogpower.fading import (
    FadingParams,
    LinkBudget,
    bessel_i0_scaled,
    cond_pdf,
    gamma_threshold,
    marcum_q1,
    outage_cdf,
)
from cogpower.policy import InfeasibleError, PowerGrid, greedy_power_cg, solve_cg_constrained
from cogpower.sim import SimConfig, run_trace_logs, sweep

SOFT_BUDGET_S = 600.0
B = LinkBudget()


def _close(got, want, tol, what):
    assert abs(got - want) <= tol, f"{what}: got {got!r}, want {want!r} +/- {tol:g}"


def check_threshold():
    _close(gamma_threshold(0.0, B), 10 / 95, 1e-12, "threshold at p=0")
    _close(gamma_threshold(20.0, B), 2.2105263157894735, 1e-12, "threshold at p_max")


def check_bessel():
    for x in (0.0, 0.5, 3.0, 40.0):
        k = np.arange(200)
        series = math.exp(-x) * np.sum(np.exp(2 * k * math.log(x / 2) - 2 * special.gammaln(k + 1))) if x else 1.0
        _close(float(bessel_i0_scaled(x)), series, 1e-12 * max(1.0, series), f"i0e({x})")


def check_pdf_normalized():
    for a in (0.01, 0.1, 0.5, 1.0):
        for gp in (0.0, 1.0, 5.0):
            f = lambda g: cond_pdf(g, gp, a)
            tot = integrate.quad(f, 0, gp + 1, limit=200)[0] + integrate.quad(f, gp + 1, np.inf, limit=200)[0]
            _close(tot, 1.0, 1e-6, f"pdf mass alpha={a} g'={gp}")


def check_pdf_matches_cdf():
    for a, gp, th in [(0.05, 1.0, 0.9), (0.3, 2.0, 1.5), (1.0, 0.0, 0.7)]:
        num, _ = integrate.quad(lambda g: cond_pdf(g, gp, a), 0, th, limit=200)
        _close(float(outage_cdf(th, gp, a)), num, 1e-7, f"cdf alpha={a}")


def check_marcum():
    _close(float(marcum_q1(1.0, 1.0)), 0.7328798037968202, 1e-9, "Q1(1,1)")
    _close(float(marcum_q1(0.0, 2.0)), math.exp(-2.0), 1e-12, "Q1(0,2)")


def check_stationary_cdf():
    x = np.linspace(0, 6, 13)
    np.testing.assert_allclose(outage_cdf(x, 3.0, 1.0), -np.expm1(-x), atol=1e-12)


def check_ar1_power():
    g = gen_trace(FadingParams(0.05), 200_000, 1).gains
    _close(g.mean(), 1.0, 0.05, "AR(1) mean power")


def check_ar1_correlation():
    tr = gen_trace(FadingParams(0.1), 200_000, 2)
    h = tr.h
    r = np.real(np.vdot(h[:-1], h[1:])) / np.vdot(h, h).real
    _close(r, 0.9, 0.01, "AR(1) lag-1 correlation")


def check_jakes_correlation():
    rs = []
    for s in range(8):
        h = gen_trace(FadingParams(0.1), 4000, s, "jakes").h
        rs.append(np.real(np.vdot(h[:-1], h[1:])) / np.vdot(h, h).real)
    _close(float(np.mean(rs)), 0.9, 0.03, "Jakes lag-1 correlation")


def check_packet_counts():
    got = [packets_for_decorrelation(a) for a in (0.1, 0.5, 0.05, 0.01)]
    assert got == [110, 17, 225, 1146], got


def check_prior():
    b = init_prior(GammaGrid.uniform())
    _close(b.mass, 1.0, 1e-12, "prior mass")


def check_stationarity():
    grid = GammaGrid.uniform()
    b = init_prior(grid)
    for a in (0.01, 0.1, 1.0):
        d = predict(b, kernel_for(a)).density
        _close(float(np.max(np.abs(d - b.density))), 0.0, 1e-3, f"stationarity alpha={a}")


def check_ack_nack_mixture():
    grid = GammaGrid.uniform()
    b = predict(init_prior(grid), kernel_for(0.1))
    th = float(gamma_threshold(5.0, B))
    # the filter conditions on grid nodes, so weigh the branches by node mass
    q = float(grid.weights[grid.nodes < th] @ b.density[grid.nodes < th])
    ack = likelihood_update(b, ArqObservation(True, 5.0), B)
    nack = likelihood_update(b, ArqObservation(False, 5.0), B)
    mix = (1 - q) * ack.density + q * nack.density
    _close(float(np.max(np.abs(mix - b.density))), 0.0, 1e-9, "ACK/NACK mixture")


def check_filter_enumeration():
    grid = GammaGrid(np.array([0.0, 1.5, 3.0]))
    k = TransitionKernel.build(grid, FadingParams(0.3))
    bud = LinkBudget(p_p=10.0, p_max=3.0)
    powers = [0.0, 1.0, 0.3, 1.2, 0.0]
    trans = grid.weights[:, None] * k.values
    prior = init_prior(grid)
    for acks in itertools.product([False, True], repeat=len(powers)):
        mass = grid.weights * prior.density
        b = prior
        ok = True
        for ack, p in zip(acks, powers):
            b = predict(b, k)
            b = likelihood_update(b, ArqObservation(ack, p), bud)
            mass = (trans @ mass) * ((grid.nodes >= gamma_threshold(p, bud)) == ack)
            ok = ok and mass.sum() > 0
            if ok:
                mass = mass / mass.sum()
        if ok:
            np.testing.assert_allclose(b.density, mass / grid.weights, atol=1e-6)


def check_greedy_full_power():
    p, _ = greedy_power_cg(1.0, 0.0, 0.05, B, PowerGrid.uniform())
    assert p == 20.0, p


def check_constrained_policy():
    pol = solve_cg_constrained(0.1, 0.25, B, GammaGrid.uniform(), PowerGrid.uniform())
    assert pol.power[0] == 20.0 and pol.power[-1] == 20.0 and pol.power.min() < 20.0
    _close(pol.achieved_outage, 0.25, 5e-4, "constrained outage")


def check_infeasible():
    try:
        solve_cg_constrained(0.1, 0.05, B, GammaGrid.uniform(), PowerGrid.uniform())
    except InfeasibleError as exc:
        _close(exc.natural_outage, -math.expm1(-10 / 95), 2e-4, "natural outage")
    else:
        raise AssertionError("P_out = 0.05 should be infeasible")


def check_bookkeeping():
    cfg = SimConfig(fading=FadingParams(0.05), realizations=1)
    tr = gen_trace(cfg.fading, cfg.n_packets, realization_seed(0, 0))
    for policy in ("cg", "arq", "nocsi"):
        logs, stats = run_trace_logs(cfg, [0.3, 0.9], tr, policy)
        for log, st in zip(logs, stats):
            assert st.weighted_tp == float(np.mean(log.weighted_tp))
            _close(st.primary_tp + B.R_o * st.outage_frac, B.R_o, 1e-12, "primary bookkeeping")
            assert np.array_equal(log.outage, log.gamma < log.gamma_th)


def check_dominance():
    base = dict(fading=FadingParams(0.1), betas=(0.3, 0.7, 0.95), realizations=8, seed=4)
    cg = sweep(SimConfig(policy="cg", **base), workers=1)
    arq = sweep(SimConfig(policy="arq", **base), workers=1)
    for a, b in zip(cg, arq):
        d = a.samples[:, 0] - b.samples[:, 0]
        se = d.std(ddof=1) / math.sqrt(d.size)
        assert d.mean() >= -2 * se, f"CG below ARQ at beta={a.beta}"


def check_worker_independence():
    cfg = SimConfig(fading=FadingParams(0.1), betas=(0.5,), realizations=3, packets=40, seed=7)
    a, b = sweep(cfg, workers=1), sweep(cfg, workers=2)
    assert np.array_equal(a[0].samples, b[0].samples)


CHECKS: list[tuple[str, Callable[[], None]]] = [
    ("threshold-anchors", check_threshold),
    ("bessel-i0e-series", check_bessel),
    ("transition-pdf-mass", check_pdf_normalized),
    ("transition-pdf-vs-cdf", check_pdf_matches_cdf),
    ("marcum-q1-values", check_marcum),
    ("stationary-outage-law", check_stationary_cdf),
    ("ar1-power", check_ar1_power),
    ("ar1-correlation", check_ar1_correlation),
    ("jakes-correlation", check_jakes_correlation),
    ("decorrelation-packets", check_packet_counts),
    ("prior-mass", check_prior),
    ("predict-stationarity", check_stationarity),
    ("ack-nack-mixture", check_ack_nack_mixture),
    ("filter-vs-enumeration", check_filter_enumeration),
    ("greedy-full-power", check_greedy_full_power),
    ("constrained-policy", check_constrained_policy),
    ("infeasible-target", check_infeasible),
    ("throughput-bookkeeping", check_bookkeeping),
    ("cg-dominates-arq", check_dominance),
    ("worker-independence", check_worker_independence),
]


def run_checks(out: TextIO = sys.stdout, checks=None) -> bool:
    """Run every check and print one timed line each. Returns overall success."""
    checks = CHECKS if checks is None else checks
    failures = 0
    start = time.perf_counter()
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            fn()
            status, detail = "PASS", ""
        except Exception as exc:  # a crash is a failed check, not a crashed runner
            failures += 1
            status, detail = "FAIL", f"  {type(exc).__name__}: {exc}"
        print(f"{status} {name:<26} {time.perf_counter() - t0:7.2f} s{detail}", file=out)
    total = time.perf_counter() - start
    print(f"{len(checks) - failures}/{len(checks)} checks passed in {total:.1f} s", file=out)
    if total > SOFT_BUDGET_S:
        print(f"warning: validation took longer than {SOFT_BUDGET_S:.0f} s", file=out)
    return failures == 0
