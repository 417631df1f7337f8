"""JSON run configuration with embedded defaults.

A config file is a single JSON object. Every key is optional; anything left out
takes the default from :data:`DEFAULTS`. Unknown keys are rejected so that a
typo never silently falls back to a default. ``RunConfig.echo()`` returns the
fully resolved document, which reproduces the run when fed back in.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from cogpower.fading import FadingParams, LinkBudget
from cogpower.sim import POLICIES, SimConfig, default_betas

MODELS = ("ar1", "jakes")

BUDGET_DEFAULTS = {
    "p_p": 95.0,
    "p_max": 20.0,
    "g21": 1.0,
    "g22": 2.0,
    "sigma_p2": 1.0,
    "sigma_s2": 1.0,
    "R_o": math.log(11.0),
}

DEFAULTS: dict[str, Any] = {
    "budget": BUDGET_DEFAULTS,
    "alpha": [0.05],
    "beta": None,
    "policy": ["cg", "arq"],
    "model": ["ar1"],
    "realizations": 100,
    "packets": "auto",
    "packets_iid": 500,
    "seed": 0,
    "gamma_max": 8.0,
    "gamma_nodes": 801,
    "power_nodes": 201,
    "P_out": None,
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (CLI exit code 1)."""


def _number(key, v, *, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {v!r}")
    if integer:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
        return int(v)
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{key}: must be finite")
    return v


def _list(key, v, kind):
    if not isinstance(v, list):
        v = [v]
    if not v:
        raise ConfigError(f"{key}: list must not be empty")
    return [kind(f"{key}[{i}]", x) for i, x in enumerate(v)]


def _choice(options):
    def check(key, v):
        if v not in options:
            raise ConfigError(f"{key}: {v!r} is not one of {', '.join(options)}")
        return v

    return check


@dataclass(frozen=True)
class RunConfig:
    budget: LinkBudget
    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    policy: tuple[str, ...]
    model: tuple[str, ...]
    realizations: int
    packets: int | str
    packets_iid: int
    seed: int
    gamma_max: float
    gamma_nodes: int
    power_nodes: int
    P_out: float | None

    def sim_config(self, alpha: float, policy: str, model: str, betas=None) -> SimConfig:
        return SimConfig(
            budget=self.budget,
            fading=FadingParams(alpha),
            betas=tuple(self.beta if betas is None else betas),
            realizations=self.realizations,
            packets=self.packets,
            packets_iid=self.packets_iid,
            seed=self.seed,
            policy=policy,
            model=model,
            gamma_max=self.gamma_max,
            gamma_nodes=self.gamma_nodes,
            power_nodes=self.power_nodes,
        )

    def echo(self) -> dict[str, Any]:
        b = self.budget
        return {
            "budget": {k: getattr(b, k) for k in BUDGET_DEFAULTS},
            "alpha": list(self.alpha),
            "beta": list(self.beta),
            "policy": list(self.policy),
            "model": list(self.model),
            "realizations": self.realizations,
            "packets": self.packets,
            "packets_iid": self.packets_iid,
            "seed": self.seed,
            "gamma_max": self.gamma_max,
            "gamma_nodes": self.gamma_nodes,
            "power_nodes": self.power_nodes,
            "P_out": self.P_out,
        }


def parse_config(doc: dict[str, Any] | None = None, seed: int | None = None) -> RunConfig:
    """Merge ``doc`` over the defaults and validate. ``seed`` overrides the document."""
    doc = {} if doc is None else doc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    raw = {**DEFAULTS, **doc}

    bdoc = raw["budget"]
    if not isinstance(bdoc, dict):
        raise ConfigError("budget must be a JSON object")
    bad = sorted(set(bdoc) - set(BUDGET_DEFAULTS))
    if bad:
        raise ConfigError(f"unknown budget keys: {', '.join(bad)}")
    bvals = {k: _number(f"budget.{k}", bdoc.get(k, d)) for k, d in BUDGET_DEFAULTS.items()}

    packets = raw["packets"]
    if packets != "auto":
        packets = _number("packets", packets, integer=True)
    beta = raw["beta"]
    beta = list(default_betas()) if beta is None else _list("beta", beta, _number)
    P_out = raw["P_out"]
    if P_out is not None:
        P_out = _number("P_out", P_out)
        if not 0.0 < P_out <= 1.0:
            raise ConfigError("P_out must lie in (0, 1]")
    seed_v = _number("seed", raw["seed"] if seed is None else seed, integer=True)
    if not 0 <= seed_v < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")

    try:
        cfg = RunConfig(
            budget=LinkBudget(**bvals),
            alpha=tuple(_list("alpha", raw["alpha"], _number)),
            beta=tuple(beta),
            policy=tuple(_list("policy", raw["policy"], _choice(POLICIES))),
            model=tuple(_list("model", raw["model"], _choice(MODELS))),
            realizations=_number("realizations", raw["realizations"], integer=True),
            packets=packets,
            packets_iid=_number("packets_iid", raw["packets_iid"], integer=True),
            seed=seed_v,
            gamma_max=_number("gamma_max", raw["gamma_max"]),
            gamma_nodes=_number("gamma_nodes", raw["gamma_nodes"], integer=True),
            power_nodes=_number("power_nodes", raw["power_nodes"], integer=True),
            P_out=P_out,
        )
        # constructing one SimConfig per alpha runs the remaining range checks
        for a in cfg.alpha:
            cfg.sim_config(a, cfg.policy[0], cfg.model[0])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.gamma_max <= 0 or cfg.gamma_nodes < 3 or cfg.power_nodes < 2:
        raise ConfigError("grids need gamma_max > 0, gamma_nodes >= 3 and power_nodes >= 2")
    return cfg


def load_config(path: str | Path | None, seed: int | None = None) -> RunConfig:
    if path is None:
        return parse_config({}, seed)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return parse_config(doc, seed)
