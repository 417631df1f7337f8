"""``cogpower`` command line: policy tables, Pareto sweeps, packet traces, self checks.

Exit codes: 0 success, 1 configuration error, 2 numerical or infeasibility
error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

from cogpower import __version__
from cogpower.channel import gen_trace, realization_seed
from cogpower.config import ConfigError, RunConfig, load_config
from cogpower.policy import InfeasibleError, solve_cg_constrained
from cogpower.sim import run_trace_logs, sweep
from cogpower.svg import line_plot

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATE = 0, 1, 2, 3

SWEEP_HEADER = [
    "beta", "policy", "alpha", "model",
    "primary_tp", "primary_tp_se", "secondary_tp", "secondary_tp_se",
    "weighted_tp", "weighted_tp_se", "outage_frac",
]  # fmt: skip
TRACE_HEADER = ["t", "gamma", "power", "gamma_th", "outage", "ack", "predicted_outage_prob", "weighted_tp"]


def _f(x) -> str:
    # repr round-trips and never depends on locale
    return repr(float(x))


def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` next to ``path`` and rename over it, so readers never see a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def build_id() -> str:
    here = Path(__file__).resolve().parent
    try:
        res = subprocess.run(
            ["git", "-C", str(here), "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5, check=True,
        )  # fmt: skip
        return f"cogpower-{__version__}+{res.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        return f"cogpower-{__version__}"


def _manifest(command: str, cfg: RunConfig, out: Path, outputs: list[Path], started: float, **extra) -> Path:
    path = out.with_name(out.name + ".manifest.json")
    doc = {
        "command": command,
        "config": cfg.echo(),
        "build": build_id(),
        "seed": cfg.seed,
        "duration_s": round(time.perf_counter() - started, 3),
        "outputs": [str(p) for p in outputs],
        **extra,
    }
    write_atomic(path, json.dumps(doc, indent=2) + "\n")
    return path


def _single(cfg: RunConfig, *keys: str) -> None:
    many = [k for k in keys if len(getattr(cfg, k)) != 1]
    if many:
        raise ConfigError(f"this command needs exactly one value for: {', '.join(many)}")


def cmd_cg_policy(cfg: RunConfig, out: Path, svg: bool) -> int:
    started = time.perf_counter()
    _single(cfg, "alpha")
    if cfg.P_out is None:
        raise ConfigError("cg-policy needs P_out in the config")
    sc = cfg.sim_config(cfg.alpha[0], "cg", cfg.model[0])
    pol = solve_cg_constrained(sc.fading, cfg.P_out, cfg.budget, sc.grid, sc.power_grid)
    buf = io.StringIO()
    pol.to_csv(buf)
    write_atomic(out, buf.getvalue())
    outputs = [out]
    if svg:
        plot = line_plot([(f"P_out={cfg.P_out:g}", pol.grid.nodes, pol.power)], "delayed gain", "secondary power")
        outputs.append(out.with_suffix(".svg"))
        write_atomic(outputs[-1], plot)
    result = {
        "lambda": pol.lam,
        "beta_equivalent": pol.beta_equivalent,
        "achieved_outage": pol.achieved_outage,
        "achieved_rate": pol.achieved_rate,
        "status": pol.status,
    }
    _manifest("cg-policy", cfg, out, outputs, started, result=result)
    print(f"lambda={pol.lam:.6g} outage={pol.achieved_outage:.6f} rate={pol.achieved_rate:.6f} ({pol.status})")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path, svg: bool) -> int:
    started = time.perf_counter()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    curves = []
    for alpha in cfg.alpha:
        for model in cfg.model:
            for policy in cfg.policy:
                pts = sweep(cfg.sim_config(alpha, policy, model))
                for p in pts:
                    w.writerow(
                        [_f(p.beta), policy, _f(alpha), model]
                        + [_f(v) for v in (p.primary_tp, p.primary_tp_se, p.secondary_tp, p.secondary_tp_se)]
                        + [_f(p.weighted_tp), _f(p.weighted_tp_se), _f(p.outage_frac)]
                    )
                label = f"{policy} a={alpha:g} {model}"
                curves.append((label, [p.secondary_tp for p in pts], [p.primary_tp for p in pts]))
    write_atomic(out, buf.getvalue())
    outputs = [out]
    if svg:
        outputs.append(out.with_suffix(".svg"))
        write_atomic(outputs[-1], line_plot(curves, "secondary throughput", "primary throughput"))
    _manifest("sweep", cfg, out, outputs, started)
    print(f"wrote {len(curves)} curves x {len(cfg.beta)} betas to {out}")
    return EXIT_OK


def cmd_trace(cfg: RunConfig, out: Path, svg: bool) -> int:
    started = time.perf_counter()
    _single(cfg, "alpha", "beta", "policy", "model")
    sc = cfg.sim_config(cfg.alpha[0], cfg.policy[0], cfg.model[0])
    # the trace is realization 0 of the sweep with the same seed
    tr = gen_trace(sc.fading, sc.n_packets, realization_seed(cfg.seed, 0), sc.model)
    (log,), (stats,) = run_trace_logs(sc, sc.betas, tr)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for t in range(log.gamma.size):
        w.writerow(
            [t, _f(log.gamma[t]), _f(log.power[t]), _f(log.gamma_th[t]), int(log.outage[t]), int(log.ack[t]),
             _f(log.predicted_outage_prob[t]), _f(log.weighted_tp[t])]
        )  # fmt: skip
    write_atomic(out, buf.getvalue())
    outputs = [out]
    if svg:
        t = list(range(log.gamma.size))
        plot = line_plot([("gain", t, log.gamma), ("power / p_max", t, log.power / cfg.budget.p_max)], "packet", "value")
        outputs.append(out.with_suffix(".svg"))
        write_atomic(outputs[-1], plot)
    summary = {"weighted_tp": stats.weighted_tp, "outage_frac": stats.outage_frac, "resets": stats.resets}
    _manifest("trace", cfg, out, outputs, started, result=summary)
    print(f"{log.gamma.size} packets, outage fraction {stats.outage_frac:.4f}, belief resets {stats.resets}")
    return EXIT_OK


def cmd_validate() -> int:
    from cogpower.validate import run_checks

    return EXIT_OK if run_checks(sys.stdout) else EXIT_VALIDATE


COMMANDS = {
    "cg-policy": (cmd_cg_policy, "policy.csv", "constrained delayed-CSI power policy table"),
    "sweep": (cmd_sweep, "pareto.csv", "beta sweep of primary/secondary throughput"),
    "trace": (cmd_trace, "trace.csv", "per-packet log of one realization"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cogpower", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cogpower {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, default_out, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="JSON config; omitted keys take defaults")
        p.add_argument("--out", type=Path, default=Path(default_out), help=f"output CSV (default {default_out})")
        p.add_argument("--seed", type=int, help="master seed, overrides the config")
        p.add_argument("--svg", action="store_true", help="also write an SVG plot next to the CSV")
    sub.add_parser("validate", help="run the built-in desk-scale checks")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate()
    fn = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config, args.seed)
        return fn(cfg, args.out, args.svg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ArithmeticError, ValueError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
