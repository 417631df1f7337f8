import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from cogpower.belief import (
    ArqObservation,
    Belief,
    GammaGrid,
    TransitionKernel,
    _likelihood_batch,
    init_prior,
    kernel_for,
    likelihood_update,
    outage_mass,
    predict,
)
from cogpower.channel import gen_trace, realization_seed
from cogpower.fading import FadingParams, LinkBudget, cond_pdf, gamma_threshold, outage_cdf
from cogpower.sim import SimConfig, run_trace_logs
from conftest import brute_posterior

ALPHAS = [0.01, 0.05, 0.1, 0.5, 1.0]


@pytest.fixture(scope="module")
def grid():
    return GammaGrid.uniform()


def test_grid_layout(grid):
    assert grid.nodes[0] == 0.0 and grid.nodes[-1] == 8.0 and len(grid) == 801
    assert np.all(grid.weights > 0)
    h = 0.01
    # trapezoid rule on exp(-x) has a closed form: (h/2) coth(h/2) (1 - e^-8)
    exact_trap = (h / 2) / math.tanh(h / 2) * (1 - math.exp(-8))
    assert grid.weights @ np.exp(-grid.nodes) == pytest.approx(exact_trap, abs=1e-12)
    assert grid.weights @ np.exp(-grid.nodes) == pytest.approx(1 - math.exp(-8), abs=1e-5)


def test_grid_rejects_bad_nodes():
    with pytest.raises(ValueError):
        GammaGrid(np.array([0.1, 1.0]))
    with pytest.raises(ValueError):
        GammaGrid(np.array([0.0, 1.0, 1.0]))


def test_grid_refine_keeps_nodes(grid):
    fine = grid.refine(4)
    assert len(fine) == 4 * 800 + 1
    np.testing.assert_array_equal(fine.nodes[::4], grid.nodes)
    assert fine.weights.sum() == pytest.approx(8.0)


@pytest.mark.parametrize("alpha", [0.5, 1.0])
def test_kernel_column_mass_resolved(grid, alpha):
    k = kernel_for(alpha)
    tail = 1 - outage_cdf(8.0, grid.nodes, alpha)
    cm = k.column_mass()
    assert np.all(cm >= 1 - tail - 1e-4)
    assert np.all(cm <= 1.0)


@pytest.mark.parametrize("alpha,bound", [(0.01, 2e-2), (0.05, 1e-3), (0.1, 1e-3)])
def test_kernel_column_mass_narrow(grid, alpha, bound):
    # target-side trapezoid error for kernels only a few cells wide
    k = kernel_for(alpha)
    tail = 1 - outage_cdf(8.0, grid.nodes, alpha)
    assert np.max(np.abs(k.column_mass() - (1 - tail))) <= bound


def test_kernel_matches_pointwise_density_when_smooth(grid):
    from cogpower.fading import cond_pdf

    k = kernel_for(0.5)
    pts = cond_pdf(grid.nodes[:, None], grid.nodes[None, :], 0.5)
    # end nodes carry one-sided hats, so only interior columns are second-order close
    assert np.max(np.abs(k.values[:, 1:-1] - pts[:, 1:-1])) < 1e-4


def test_kernel_shape_check(grid):
    with pytest.raises(ValueError):
        TransitionKernel(grid, np.ones((3, 3)))


# -- prior -------------------------------------------------------------------


def test_prior(grid):
    b = init_prior(grid)
    i1 = int(np.argmin(np.abs(grid.nodes - 1.0)))
    assert b.density[0] / b.density[i1] == pytest.approx(math.e, abs=1e-9)
    assert b.mass == pytest.approx(1.0, abs=1e-12)
    assert b.mean() == pytest.approx((1 - 9 * math.exp(-8)) / (1 - math.exp(-8)), abs=1e-4)


# -- likelihood --------------------------------------------------------------


def test_ack_at_zero_threshold_is_noop(grid):
    b = init_prior(grid)
    u = likelihood_update(b, ArqObservation(True, 5.0), LinkBudget(R_o=0.0))
    np.testing.assert_allclose(u.density, b.density, rtol=1e-14)
    assert u.resets == 0


def test_nack_above_grid_is_noop(grid):
    b = init_prior(grid)
    bud = LinkBudget(p_p=1.0)  # threshold 10 > gamma_max
    u = likelihood_update(b, ArqObservation(False, 0.0), bud)
    np.testing.assert_allclose(u.density, b.density, rtol=1e-14)


def test_ack_truncates_exponential(grid):
    bud = LinkBudget(p_p=10.0)  # threshold (e^R - 1)/10 = 1
    u = likelihood_update(init_prior(grid), ArqObservation(True, 0.0), bud)
    assert np.all(u.density[grid.nodes < 1.0 - 1e-9] == 0)
    assert u.mass == pytest.approx(1.0, abs=1e-12)
    first = int(np.argmax(u.density > 0))
    closed = math.exp(-1) / (math.exp(-1) - math.exp(-8))  # 1.000911 at the cut
    # the cut falls between nodes; the piecewise-linear belief is accurate to one cell
    assert u.density[first] * math.exp(grid.nodes[first] - 1) == pytest.approx(closed, rel=1e-2)


def test_impossible_observation_resets(grid):
    bud = LinkBudget(p_p=1.0)
    u = likelihood_update(init_prior(grid), ArqObservation(True, 0.0), bud)
    np.testing.assert_allclose(u.density, init_prior(grid).density)
    assert u.resets == 1


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 8.5), st.integers(0, 2**31))
def test_ack_nack_mixture_identity(th, seed):
    grid = GammaGrid.uniform(8.0, 101)
    d = np.random.default_rng(seed).random(101) + 1e-3
    d /= grid.weights @ d
    above = grid.nodes >= th
    p_ack = grid.weights[above] @ d[above]
    p_nack = grid.weights[~above] @ d[~above]
    D = np.stack([d, d], axis=1)
    out, _ = _likelihood_batch(grid, D, [th, th], [True, False])
    recon = np.zeros_like(d)
    if p_ack > 0:
        recon += out[:, 0] * p_ack
    if p_nack > 0:
        recon += out[:, 1] * p_nack
    np.testing.assert_allclose(recon, d, atol=1e-9)
    for j in range(2):
        assert grid.weights @ out[:, j] == pytest.approx(1.0, abs=1e-9)


# -- predict -----------------------------------------------------------------


def test_predict_iid_gives_prior(grid):
    rng = np.random.default_rng(1)
    b = Belief(grid, rng.random(801))
    out = predict(b, kernel_for(1.0))
    np.testing.assert_allclose(out.density, init_prior(grid).density, rtol=1e-12)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_predict_stationary_fixed_point(grid, alpha):
    b = init_prior(grid)
    out = predict(b, kernel_for(alpha))
    assert np.max(np.abs(out.density - b.density)) <= 1e-3
    assert out.mass == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.05, 0.1, 0.5])
@pytest.mark.parametrize("gp", [0.5, 2.0, 4.0])
def test_predict_point_mass_mean(grid, alpha, gp):
    j = int(np.argmin(np.abs(grid.nodes - gp)))
    d = np.zeros(801)
    d[j] = 1.0 / grid.weights[j]
    out = predict(Belief(grid, d), kernel_for(alpha))
    c = alpha * (2 - alpha)
    fp = FadingParams(alpha)
    # renormalization drops the mass above gamma_max, so compare with the truncated mean
    num = integrate.quad(lambda g: g * cond_pdf(g, gp, fp), 0, 8, limit=400, epsabs=1e-13)[0]
    den = integrate.quad(lambda g: cond_pdf(g, gp, fp), 0, 8, limit=400, epsabs=1e-13)[0]
    assert out.mean() == pytest.approx(num / den, abs=2e-3)
    if outage_cdf(8.0, gp, fp) > 1 - 1e-6:
        assert out.mean() == pytest.approx((1 - alpha) ** 2 * gp + c, abs=2e-3)


def test_predict_rejects_other_grid(grid):
    other = GammaGrid.uniform(8.0, 401)
    with pytest.raises(ValueError):
        predict(init_prior(other), kernel_for(0.1))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 5.0))
def test_predict_linear_and_monotone(seed, scale):
    grid = GammaGrid.uniform()
    k = kernel_for(0.1)
    rng = np.random.default_rng(seed)
    d1, d2 = rng.random(801), rng.random(801)
    raw = lambda d: k.values @ (grid.weights * d)
    np.testing.assert_allclose(raw(d1 + scale * d2), raw(d1) + scale * raw(d2), rtol=1e-12, atol=1e-14)
    assert np.all(raw(d1) >= 0)
    assert predict(Belief(grid, d1), k).mass == pytest.approx(1.0, abs=1e-9)


# -- outage mass -------------------------------------------------------------


def test_outage_mass_examples(grid):
    b = init_prior(grid)
    assert outage_mass(b, 0.0) == 0.0
    assert outage_mass(b, 8.0) == pytest.approx(1.0, abs=1e-9)
    assert outage_mass(b, 10 / 95) == pytest.approx((1 - math.exp(-10 / 95)) / (1 - math.exp(-8)), abs=1e-5)
    assert outage_mass(b, 12.0) == pytest.approx(1.0, abs=1e-9)


def test_outage_mass_continuous_in_threshold(grid):
    b = init_prior(grid)
    th = np.linspace(0, 8, 10_001)
    m = outage_mass(b, th)
    assert np.all(np.diff(m) >= 0)
    assert np.max(np.diff(m)) < 1e-3


def test_belief_csv(grid):
    buf = io.StringIO()
    init_prior(grid).to_csv(buf)
    lines = buf.getvalue().split("\n")
    assert lines[0] == "node,density"
    assert len(lines) == 803 and lines[-1] == ""
    assert float(lines[1].split(",")[1]) == pytest.approx(init_prior(grid).density[0])


# -- filter vs brute-force enumeration ---------------------------------------


@pytest.mark.parametrize("kernel_kind", ["rician", "random"])
def test_filter_matches_enumeration(kernel_kind):
    grid = GammaGrid(np.array([0.0, 1.5, 3.0]))
    if kernel_kind == "rician":
        k = TransitionKernel.build(grid, FadingParams(0.3))
    else:
        k = TransitionKernel(grid, np.random.default_rng(3).random((3, 3)))
    bud = LinkBudget(p_p=10.0, p_max=3.0)  # threshold = 1 + power, never on a node
    powers = [0.0, 1.0, 0.3, 1.2, 0.0, 1.0, 0.6, 1.0]
    trans = grid.weights[:, None] * k.values
    prior = init_prior(grid)
    prior_mass = grid.weights * prior.density
    checked = 0
    for T in range(1, 9):
        thresholds = [gamma_threshold(p, bud) for p in powers[:T]]
        for acks in itertools.product([False, True], repeat=T):
            b = prior
            for t in range(T):
                b = predict(b, k)
                b = likelihood_update(b, ArqObservation(acks[t], powers[t]), bud)
            want = brute_posterior(prior_mass, trans, acks, thresholds, grid.nodes)
            if want.sum() == 0:
                assert b.resets > 0
                continue
            want_density = want / want.sum() / grid.weights
            np.testing.assert_allclose(b.density, want_density, atol=1e-6)
            checked += 1
    assert checked > 100


def test_monte_carlo_calibration():
    cfg = SimConfig(fading=FadingParams(0.1), policy="arq", realizations=1)
    preds, outs = [], []
    for k in range(40):
        tr = gen_trace(cfg.fading, cfg.n_packets, realization_seed(5, k))
        logs, _ = run_trace_logs(cfg, [0.4, 0.55, 0.65, 0.75, 0.85], tr)
        for log in logs:
            preds.append(log.predicted_outage_prob)
            outs.append(log.outage)
    p, o = np.concatenate(preds), np.concatenate(outs)
    bins = 0
    for q in np.arange(0, 1, 0.05):
        m = (p >= q) & (p < q + 0.05)
        if m.sum() >= 200:
            assert q - 0.05 <= o[m].mean() <= q + 0.10
            bins += 1
    assert bins >= 3
