"""Experiment configuration: plain-text key = value files plus presets.

Config files use one ``key = value`` pair per line, ``#`` comments, and
comma-separated lists.  Presets provide per-experiment defaults: ``full``
carries the acceptance-scale budgets, ``smoke`` runs in seconds with gate
windows widened by the ``gate_scale`` factor.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

from .errors import ConfigError

EXPERIMENTS = (
    "field-diagnostics",
    "identity-checks",
    "functional-convergence",
    "chaos-negligibility",
    "homogenization-rate",
    "fluctuation-clt",
    "msd-scaling",
)

PRESETS = ("smoke", "full")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    alpha: float = 0.5
    epsilon_list: tuple[float, ...] = (0.4, 0.2, 0.1, 0.05)
    t_list: tuple[float, ...] = (1.0,)
    x: float = 0.0
    phi: str = "gauss:1"
    model: str = "fgn-increment"
    transform: str = "identity"
    n_env: int = 1000
    n_paths: int = 1024
    n_steps: int = 1024
    bins: int = 256
    master_seed: int = 0
    out: str | None = None
    preset: str = "full"
    threads: int = 0
    gate_scale: float = 1.0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not self.epsilon_list or not self.t_list:
            raise ConfigError("epsilon_list and t_list must be nonempty")
        if min(self.epsilon_list) <= 0 or min(self.t_list) <= 0:
            raise ConfigError("epsilons and times must be positive")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError("alpha must lie in (0, 1)")
        if self.n_env < 2 or self.n_paths < 1 or self.n_steps < 1:
            raise ConfigError("ensemble sizes must be positive")
        if self.bins < 8:
            raise ConfigError("bins must be >= 8")

    def resolved_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        env = os.environ.get("LRDH_THREADS", "")
        if env.strip():
            return max(1, int(env))
        return min(8, os.cpu_count() or 1)


# per-experiment preset overrides applied on top of the dataclass defaults
_PRESET_TABLE: dict[str, dict[str, dict]] = {
    "field-diagnostics": {
        "full": dict(n_env=10000),
        "smoke": dict(n_env=1500),
    },
    "functional-convergence": {
        "full": dict(n_env=3000),
        "smoke": dict(n_env=400),
    },
    "chaos-negligibility": {
        "full": dict(n_env=2000, transform="poly:-1,0,1"),
        "smoke": dict(n_env=400, transform="poly:-1,0,1"),
    },
    # first epsilon drives the representation cross-check (0.2 per contract);
    # the probe sweeps the whole list in decreasing order
    "identity-checks": {
        "full": dict(n_env=500, n_steps=10000, bins=256,
                     epsilon_list=(0.2, 0.4, 0.1, 0.05), n_paths=64),
        "smoke": dict(n_env=60, n_steps=2500, bins=128,
                      epsilon_list=(0.2, 0.4, 0.1, 0.05), n_paths=32),
    },
    # t = 0.5 keeps the solution law light-tailed enough for the empirical
    # Wasserstein distance to resolve the shrinking gap at desk scale
    "homogenization-rate": {
        "full": dict(n_env=32768, n_paths=1024, n_steps=512, t_list=(0.5,)),
        "smoke": dict(n_env=2048, n_paths=256, n_steps=256, t_list=(0.5,)),
    },
    "fluctuation-clt": {
        "full": dict(n_env=4000, n_paths=1024, n_steps=512, phi="one"),
        "smoke": dict(n_env=300, n_paths=128, n_steps=128, phi="one"),
    },
    # narrow initial bump keeps the heat-flow control in its t >> w^2 regime
    "msd-scaling": {
        "full": dict(n_env=256, n_paths=1024, n_steps=2048,
                     t_list=(1.0, 2.0, 4.0, 8.0), phi="gauss:0.25"),
        "smoke": dict(n_env=24, n_paths=192, n_steps=384,
                      t_list=(1.0, 2.0, 4.0, 8.0), phi="gauss:0.25"),
    },
}

_LIST_FIELDS = {"epsilon_list", "t_list"}
_INT_FIELDS = {"n_env", "n_paths", "n_steps", "bins", "master_seed", "threads"}
_FLOAT_FIELDS = {"alpha", "x", "gate_scale"}


def parse_config_file(path: str) -> dict:
    """Parse ``key = value`` lines into a raw override dict."""
    overrides: dict = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            overrides[key] = value
    return overrides


def _coerce(key: str, value):
    if not isinstance(value, str):
        return value
    if key in _LIST_FIELDS:
        return tuple(float(v) for v in value.split(",") if v.strip())
    if key in _INT_FIELDS:
        return int(value)
    if key in _FLOAT_FIELDS:
        return float(value)
    return value


def make_config(
    experiment: str,
    file_overrides: dict | None = None,
    preset: str = "full",
    seed: int | None = None,
    out: str | None = None,
    threads: int | None = None,
) -> ExperimentConfig:
    """Assemble a config: defaults < preset < config file < CLI flags."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    known = {f.name for f in fields(ExperimentConfig)}
    merged: dict = dict(_PRESET_TABLE.get(experiment, {}).get(preset, {}))
    if preset == "smoke":
        merged.setdefault("gate_scale", 2.0)
    for key, value in (file_overrides or {}).items():
        if key == "experiment":
            continue
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = _coerce(key, value)
    if seed is not None:
        merged["master_seed"] = int(seed)
    if out is not None:
        merged["out"] = out
    if threads is not None:
        merged["threads"] = int(threads)
    merged["preset"] = preset
    return ExperimentConfig(experiment=experiment, **merged)
