"""Cognitive secondary power control over a correlated primary fading link."""

from cogpower.fading import (
    FadingParams,
    LinkBudget,
    bessel_i0_scaled,
    cond_pdf,
    gamma_threshold,
    marcum_q1,
    outage_cdf,
    weighted_sum_throughput,
)
from cogpower.channel import ChannelTrace, ar1_step, gen_trace, packets_for_decorrelation
from cogpower.belief import (
    ArqObservation,
    Belief,
    GammaGrid,
    TransitionKernel,
    init_prior,
    likelihood_update,
    outage_mass,
    predict,
)
from cogpower.policy import (
    InfeasibleError,
    PowerGrid,
    PowerPolicy,
    greedy_power_arq,
    greedy_power_cg,
    solve_cg_constrained,
)
from cogpower.sim import ParetoPoint, SimConfig, TraceStats, run_trace_arq, run_trace_cg, run_trace_nocsi, sweep

__version__ = "0.1.0"

__all__ = [
    "ar1_step",
    "ArqObservation",
    "Belief",
    "bessel_i0_scaled",
    "ChannelTrace",
    "cond_pdf",
    "FadingParams",
    "gamma_threshold",
    "GammaGrid",
    "gen_trace",
    "greedy_power_arq",
    "greedy_power_cg",
    "InfeasibleError",
    "init_prior",
    "likelihood_update",
    "LinkBudget",
    "marcum_q1",
    "outage_cdf",
    "outage_mass",
    "packets_for_decorrelation",
    "ParetoPoint",
    "PowerGrid",
    "PowerPolicy",
    "predict",
    "run_trace_arq",
    "run_trace_cg",
    "run_trace_nocsi",
    "SimConfig",
    "solve_cg_constrained",
    "sweep",
    "TraceStats",
    "TransitionKernel",
    "weighted_sum_throughput",
]
