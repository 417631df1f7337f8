"""Monte Carlo harness: per-trace policy runs and beta sweeps.

Each realization draws one channel trace from a seed hashed out of the master
seed and its index, then plays every requested beta against that same trace
(matched seeds across betas, policies and alphas). Realizations may run in
worker processes; results are reduced in index order, so output does not
depend on the worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from cogpower.belief import (
    GammaGrid,
    _likelihood_batch,
    _outage_mass_batch,
    _predict_batch,
    _prior_density,
    kernel_for,
)
from cogpower.channel import ChannelTrace, gen_trace, packets_for_decorrelation, realization_seed
from cogpower.fading import FadingParams, LinkBudget, gamma_threshold, outage_cdf, secondary_rate
from cogpower.policy import PowerGrid, _argmax, _objective

POLICIES = ("cg", "arq", "nocsi")
STAT_FIELDS = ("weighted_tp", "primary_tp", "secondary_tp", "outage_frac")


def default_betas(n: int = 20, top: float = 0.99) -> tuple[float, ...]:
    return tuple(float(v) for v in np.linspace(0.0, top, n))


@dataclass(frozen=True)
class SimConfig:
    budget: LinkBudget = field(default_factory=LinkBudget)
    fading: FadingParams = field(default_factory=lambda: FadingParams(0.05))
    betas: tuple[float, ...] = field(default_factory=default_betas)
    realizations: int = 100
    packets: int | str = "auto"
    packets_iid: int = 500
    seed: int = 0
    policy: str = "arq"
    model: str = "ar1"
    gamma_max: float = 8.0
    gamma_nodes: int = 801
    power_nodes: int = 201

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if self.packets != "auto" and (not isinstance(self.packets, int) or self.packets < 1):
            raise ValueError("packets must be 'auto' or a positive integer")
        if self.packets_iid < 1:
            raise ValueError("packets_iid must be >= 1")
        if not self.betas or any(not 0.0 <= b <= 0.99 for b in self.betas):
            raise ValueError("beta values must lie in [0, 0.99]")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.model not in ("ar1", "jakes"):
            raise ValueError(f"unknown channel model {self.model!r}")

    @property
    def n_packets(self) -> int:
        if self.packets != "auto":
            return int(self.packets)
        if self.fading.alpha >= 1.0:
            return self.packets_iid
        return packets_for_decorrelation(self.fading)

    @property
    def grid(self) -> GammaGrid:
        return GammaGrid.uniform(self.gamma_max, self.gamma_nodes)

    @property
    def power_grid(self) -> PowerGrid:
        return PowerGrid.uniform(self.budget.p_max, self.power_nodes)


@dataclass(frozen=True)
class TraceStats:
    """Throughput accounting for one trace at one beta."""

    weighted_tp: float
    primary_tp: float
    secondary_tp: float
    outage_frac: float
    resets: int = 0
    packets: int = 0


@dataclass(frozen=True)
class ParetoPoint:
    """Across-realization mean and standard error of :class:`TraceStats` at one beta."""

    beta: float
    policy: str
    alpha: float
    model: str
    weighted_tp: float
    weighted_tp_se: float
    primary_tp: float
    primary_tp_se: float
    secondary_tp: float
    secondary_tp_se: float
    outage_frac: float
    outage_frac_se: float
    resets: float
    realizations: int
    samples: np.ndarray = field(repr=False, compare=False, default=None)


@dataclass
class PacketLog:
    """Per-packet record of one run (columns of the trace CSV)."""

    gamma: np.ndarray
    power: np.ndarray
    gamma_th: np.ndarray
    outage: np.ndarray
    predicted_outage_prob: np.ndarray
    weighted_tp: np.ndarray

    @property
    def ack(self) -> np.ndarray:
        return ~self.outage


def _stats(log: PacketLog, b: LinkBudget, resets: int) -> TraceStats:
    frac = float(np.mean(log.outage))
    return TraceStats(
        weighted_tp=float(np.mean(log.weighted_tp)),
        primary_tp=b.R_o - b.R_o * frac,
        secondary_tp=float(np.mean(secondary_rate(log.power, b))),
        outage_frac=frac,
        resets=resets,
        packets=int(log.gamma.size),
    )


def _split_logs(gains, powers, pidx, gth, outage, pred, vals) -> list[PacketLog]:
    # arrays are (packets, betas)
    return [
        PacketLog(gains, powers[pidx[:, j]], gth[pidx[:, j]], outage[:, j], pred[:, j], vals[:, j])
        for j in range(pidx.shape[1])
    ]


def _run_cg(cfg: SimConfig, betas, trace: ChannelTrace):
    b, pg = cfg.budget, cfg.power_grid
    g = trace.gains
    gth = gamma_threshold(pg.powers, b)
    rates = secondary_rate(pg.powers, b)
    out = np.empty((g.size, gth.size))
    # first packet: no delayed gain yet, so decide exactly as the no-CSI policy does
    out[0] = _outage_mass_batch(cfg.grid, _prior_density(cfg.grid)[:, None], gth)[:, 0]
    if g.size > 1:
        out[1:] = outage_cdf(gth[None, :], g[:-1, None], cfg.fading)
    betas = np.asarray(betas, dtype=float)
    obj = (1.0 - betas)[None, None, :] * rates[None, :, None] + (betas * b.R_o)[None, None, :] * (
        1.0 - out[:, :, None]
    )
    pidx = np.argmax(obj, axis=1)  # (packets, betas)
    vals = np.take_along_axis(obj, pidx[:, None, :], axis=1)[:, 0, :]
    pred = np.take_along_axis(out, pidx, axis=1)
    outage = g[:, None] < gth[pidx]
    return _split_logs(g, pg.powers, pidx, gth, outage, pred, vals), np.zeros(len(betas), int)


def _run_nocsi(cfg: SimConfig, betas, trace: ChannelTrace):
    b, pg = cfg.budget, cfg.power_grid
    g = trace.gains
    gth = gamma_threshold(pg.powers, b)
    rates = secondary_rate(pg.powers, b)
    prior = _prior_density(cfg.grid)[:, None]
    out = _outage_mass_batch(cfg.grid, prior, gth)
    idx, val = _argmax(_objective(out, betas, rates, b.R_o))
    n = g.size
    pidx = np.broadcast_to(idx, (n, idx.size))
    vals = np.broadcast_to(val, (n, idx.size))
    pred = np.broadcast_to(out[idx, 0], (n, idx.size))
    outage = g[:, None] < gth[pidx]
    return _split_logs(g, pg.powers, pidx, gth, outage, pred, vals), np.zeros(len(betas), int)


def _run_arq(cfg: SimConfig, betas, trace: ChannelTrace):
    b, pg, grid = cfg.budget, cfg.power_grid, cfg.grid
    kernel = kernel_for(cfg.fading.alpha, cfg.gamma_max, cfg.gamma_nodes)
    g = trace.gains
    gth = gamma_threshold(pg.powers, b)
    rates = secondary_rate(pg.powers, b)
    nb = len(betas)
    cols = np.arange(nb)
    D = np.repeat(_prior_density(grid)[:, None], nb, axis=1)
    pidx = np.empty((g.size, nb), dtype=np.intp)
    vals = np.empty((g.size, nb))
    pred = np.empty((g.size, nb))
    outage = np.empty((g.size, nb), dtype=bool)
    resets = np.zeros(nb, dtype=int)
    for t in range(g.size):
        D = _predict_batch(kernel, D)
        out = _outage_mass_batch(grid, D, gth)
        idx, val = _argmax(_objective(out, betas, rates, b.R_o))
        pidx[t], vals[t], pred[t] = idx, val, out[idx, cols]
        outage[t] = g[t] < gth[idx]
        D, reset = _likelihood_batch(grid, D, gth[idx], ~outage[t])
        resets += reset
    return _split_logs(g, pg.powers, pidx, gth, outage, pred, vals), resets


_RUNNERS = {"cg": _run_cg, "arq": _run_arq, "nocsi": _run_nocsi}


def run_trace_logs(cfg: SimConfig, betas: Sequence[float], trace: ChannelTrace, policy: str | None = None):
    """Play ``policy`` (default ``cfg.policy``) for every beta on one trace.

    Returns ``(logs, stats)``, one entry per beta.
    """
    policy = policy or cfg.policy
    logs, resets = _RUNNERS[policy](cfg, np.asarray(betas, dtype=float), trace)
    return logs, [_stats(log, cfg.budget, int(r)) for log, r in zip(logs, resets)]


def run_trace_cg(cfg: SimConfig, beta: float, trace: ChannelTrace) -> TraceStats:
    """Greedy weighted-sum play with one-packet-delayed exact gain."""
    return run_trace_logs(cfg, [beta], trace, "cg")[1][0]


def run_trace_arq(cfg: SimConfig, beta: float, trace: ChannelTrace) -> TraceStats:
    """Greedy weighted-sum play against the ARQ-filtered belief."""
    return run_trace_logs(cfg, [beta], trace, "arq")[1][0]


def run_trace_nocsi(cfg: SimConfig, beta: float, trace: ChannelTrace) -> TraceStats:
    """Greedy weighted-sum play against the stationary prior only."""
    return run_trace_logs(cfg, [beta], trace, "nocsi")[1][0]


def _realization(args) -> np.ndarray:
    cfg, k = args
    with threadpool_limits(limits=1):
        trace = gen_trace(cfg.fading, cfg.n_packets, realization_seed(cfg.seed, k), cfg.model)
        _, stats = run_trace_logs(cfg, cfg.betas, trace)
    return np.array([[getattr(s, f) for f in STAT_FIELDS] + [s.resets] for s in stats])


def worker_count() -> int:
    env = os.environ.get("COGPOWER_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"COGPOWER_THREADS must be an integer, got {env!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def sweep(cfg: SimConfig, workers: int | None = None) -> list[ParetoPoint]:
    """Run ``cfg.realizations`` traces and aggregate one :class:`ParetoPoint` per beta."""
    workers = worker_count() if workers is None else max(1, workers)
    jobs = [(cfg, k) for k in range(cfg.realizations)]
    if workers == 1 or cfg.realizations == 1:
        rows = [_realization(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.realizations)) as ex:
            rows = list(ex.map(_realization, jobs))
    data = np.stack(rows)  # (realizations, betas, fields)
    R = data.shape[0]
    mean = data.mean(axis=0)
    se = data.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.zeros_like(mean)
    order = np.argsort(cfg.betas, kind="stable")
    points = []
    for j in order:
        m, s = mean[j], se[j]
        points.append(
            ParetoPoint(
                beta=float(cfg.betas[j]),
                policy=cfg.policy,
                alpha=cfg.fading.alpha,
                model=cfg.model,
                weighted_tp=float(m[0]),
                weighted_tp_se=float(s[0]),
                primary_tp=float(m[1]),
                primary_tp_se=float(s[1]),
                secondary_tp=float(m[2]),
                secondary_tp_se=float(s[2]),
                outage_frac=float(m[3]),
                outage_frac_se=float(s[3]),
                resets=float(m[4]),
                realizations=R,
                samples=data[:, j, :4].copy(),
            )
        )
    return points
