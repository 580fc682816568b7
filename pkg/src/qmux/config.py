"""Experiment configuration: ``key = value`` files plus command-line overrides."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .analytics import APPROX_WAIT_FACTOR_3, CostModel
from .errors import ConfigurationError
from .noise import PhysicalParams

EXPERIMENTS = (
    "fidelity-vs-distance",
    "ratio-purification",
    "ratio-repeater",
    "ratio-ec",
    "cost-sweep",
    "waiting-time",
    "simulate",
)

PROTOCOLS = (
    "qmux-entangle",
    "traditional-entangle",
    "deutsch",
    "three-qubit-qmux",
    "four-qubit",
    "ec",
)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: PhysicalParams = field(default_factory=PhysicalParams)
    cost: CostModel = field(default_factory=CostModel)
    L_min: float = 0.0
    L_max: float = 70.0
    L_step: float = 1.0
    L: float = 30.0
    k: int = 1
    n_pairs: int = 2
    switches: str = "perfect"
    n_switches: float | None = None
    trials: int | None = None
    seed: int = 0
    output: str = "-"
    n: int = 3
    p0: float | None = None
    protocol: str = "qmux-entangle"
    noise: str = "none"
    wait_factor: float = APPROX_WAIT_FACTOR_3
    cost_ratio_min: float = 0.01
    cost_ratio_max: float = 100.0
    cost_points: int = 41
    format: str = "csv"
    workers: int = 1

    def L_grid(self) -> list[float]:
        count = int(math.floor((self.L_max - self.L_min) / self.L_step + 1e-9)) + 1
        return [round(self.L_min + i * self.L_step, 12) for i in range(count)]

    def mc_trials(self) -> int:
        if self.trials is not None:
            return self.trials
        return 1 if self.experiment == "simulate" else 100_000


def _optional(cast):
    def parse(text: str):
        if text.strip().lower() in ("", "none", "default"):
            return None
        return cast(text)

    return parse


def _choice(*options):
    def parse(text: str):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


def _int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError("expected an integer")
    return int(value)


# key -> (section, parser); section is "params", "cost" or "" for top level
KEYS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "L_att": ("params", float),
    "c": ("params", float),
    "T2": ("params", float),
    "eta_OS": ("params", float),
    "P_ES": ("params", float),
    "C_M": ("cost", float),
    "C_p": ("cost", float),
    "L_min": ("", float),
    "L_max": ("", float),
    "L_step": ("", float),
    "L": ("", float),
    "k": ("", _int),
    "n_pairs": ("", _int),
    "switches": ("", _choice("perfect", "imperfect")),
    "n_switches": ("", _optional(float)),
    "trials": ("", _optional(_int)),
    "seed": ("", _int),
    "output": ("", str),
    "n": ("", _int),
    "p0": ("", _optional(float)),
    "protocol": ("", _choice(*PROTOCOLS)),
    "noise": ("", _choice("none", "loss", "loss+dephasing", "dephasing")),
    "wait_factor": ("", float),
    "cost_ratio_min": ("", float),
    "cost_ratio_max": ("", float),
    "cost_points": ("", _int),
    "format": ("", _choice("csv", "text")),
    "workers": ("", _int),
}

_LOOKUP = {k.lower(): k for k in KEYS}


def canonical_key(key: str) -> str:
    k = _LOOKUP.get(key.strip().replace("-", "_").lower())
    if k is None:
        raise ConfigurationError(f"unknown config key {key.strip()!r}")
    return k


def read_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[canonical_key(key)] = value
    return values


def parse_config(
    experiment: str,
    text: str = "",
    overrides: Mapping[str, str] | None = None,
) -> ExperimentConfig:
    """Resolve defaults, then file values, then ``overrides`` (highest precedence)."""
    if experiment not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {experiment!r}")
    raw = read_config_text(text)
    for key, value in (overrides or {}).items():
        raw[canonical_key(key)] = str(value)

    sections: dict[str, dict[str, Any]] = {"params": {}, "cost": {}, "": {}}
    for key, value in raw.items():
        section, cast = KEYS[key]
        try:
            sections[section][key] = cast(value)
        except ValueError as exc:
            raise ConfigurationError(f"invalid value for {key}: {value!r} ({exc})") from None
    # ConfigurationError from the dataclasses already names the offending field
    params = PhysicalParams(**sections["params"])
    cost = CostModel(**sections["cost"])
    cfg = ExperimentConfig(experiment, params, cost, **sections[""])
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    def fail(key, why):
        raise ConfigurationError(f"invalid {key} = {getattr(cfg, key)!r}: {why}")

    for key in ("L_min", "L_max", "L_step", "L", "wait_factor", "cost_ratio_min", "cost_ratio_max"):
        if not math.isfinite(getattr(cfg, key)):
            fail(key, "must be finite")
    if cfg.L_step <= 0:
        fail("L_step", "must be > 0")
    if cfg.L_min < 0:
        fail("L_min", "must be >= 0")
    if cfg.L_min > cfg.L_max:
        fail("L_min", f"must not exceed L_max = {cfg.L_max!r}")
    if cfg.L < 0:
        fail("L", "must be >= 0")
    if cfg.k < 0 or (cfg.experiment == "ratio-purification" and cfg.k < 1):
        fail("k", "must be >= 1")
    if cfg.n_pairs < 1:
        fail("n_pairs", "must be >= 1")
    if cfg.n < 1:
        fail("n", "must be >= 1")
    if cfg.trials is not None and cfg.trials < 1:
        fail("trials", "must be >= 1")
    if cfg.p0 is not None and not 0 < cfg.p0 <= 1:
        fail("p0", "must lie in (0, 1]")
    if cfg.n_switches is not None and cfg.n_switches < 0:
        fail("n_switches", "must be >= 0")
    if cfg.wait_factor <= 0:
        fail("wait_factor", "must be > 0")
    if not 0 < cfg.cost_ratio_min <= cfg.cost_ratio_max:
        fail("cost_ratio_min", "need 0 < cost_ratio_min <= cost_ratio_max")
    if cfg.cost_points < 1:
        fail("cost_points", "must be >= 1")
    if cfg.workers < 1:
        fail("workers", "must be >= 1")


def _value_text(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def to_text(cfg: ExperimentConfig) -> str:
    """Canonical ``key = value`` rendering; parsing it back gives the same config."""
    lines = [f"# experiment: {cfg.experiment}"]
    for key, (section, _) in KEYS.items():
        owner = getattr(cfg, section) if section else cfg
        lines.append(f"{key} = {_value_text(getattr(owner, key))}")
    return "\n".join(lines) + "\n"
