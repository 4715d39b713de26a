"""Experiment configuration: defaults, INI-style file parsing, CLI overrides.

A run is described by a flat ``section.key = value`` file; command-line
``--set section.key=value`` pairs win over the file, which wins over the
defaults below.  Types are coerced from the defaults, so a typo in a key
name or a malformed value fails fast as a configuration error.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError

DEFAULTS: dict[str, dict] = {
    "source": {
        "rho": 0.995,
        "var1": 1.0,
        "var2": 1.0,
    },
    "noise": {
        "var": 0.1,
    },
    "grids": {
        "n_source": 64,
        "n_noise": 9,
        "n_output": 96,
        "source_span": 5.0,
        "noise_span": 4.0,
        "output_margin": 0.05,
    },
    "weights": {
        # exactly one mode: individual | total | power_total | power_individual
        "mode": "total",
        "lambda": 0.01,
        "lambda1": 0.01,
        "lambda2": 0.01,
        "power_target": 7.0,
        "power_target1": 3.36,
        "power_target2": 5.57,
        "power_tol": 0.02,
        "power_tol_individual": 0.10,
        "bisect_iters": 20,
        "bisect_rounds": 3,
        "lambda_lo": 1e-4,
        "lambda_hi": 1.0,
    },
    "method": {
        "name": "da",  # da | greedy | ncr
    },
    "da": {
        "n_models_1": 4,
        "n_models_2": 4,
        "alpha": 0.95,
        "t_init": None,
        "t_min": None,
        "perturb_eps": 0.01,
        "inner_tol": 1e-5,
        "inner_max_iters": 50,
        "gd_step_init": 0.25,
        "gd_backtrack_factor": 0.5,
        "gd_max_iters": 30,
        "gd_steps": 25,
        "merge_tol": 0.01,
        "grid_guard": 0.9,
        "polish": True,
    },
    "greedy": {
        "tol": 1e-5,
        "max_sweeps": 200,
        "candidates": 33,
        "span_factor": 2.0,
        "golden_iters": 28,
        "init_slope": 1.0,
        "init_jitter": 0.0,
    },
    "ncr": {
        "sigma2_start": 1.0,
        "ncr_alpha": 0.7,
        "stages": 8,
    },
    "sweep": {
        "lambdas": "",          # comma-separated, total-power mode
        "power_targets": "",    # comma-separated, bisected per point
    },
    "run": {
        "seed": 0,
        "out_dir": "runs/out",
        "mc_samples": 1000000,
        "figures": True,
    },
}

_WEIGHT_MODES = ("individual", "total", "power_total", "power_individual")
_METHODS = ("da", "greedy", "ncr")

# Keys whose default is None are optional floats.
_OPTIONAL_FLOATS = {("da", "t_init"), ("da", "t_min")}


@dataclass
class ExperimentConfig:
    """Materialized configuration; ``values[section][key]`` holds coerced values."""

    values: dict[str, dict] = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def get(self, section: str, key: str):
        return self.values[section][key]

    def as_flat_dict(self) -> dict[str, object]:
        return {f"{s}.{k}": v for s, items in sorted(self.values.items()) for k, v in sorted(items.items())}

    def validate(self):
        mode = self.get("weights", "mode")
        if mode not in _WEIGHT_MODES:
            raise ConfigurationError(f"weights.mode must be one of {_WEIGHT_MODES}, got {mode!r}")
        method = self.get("method", "name")
        if method not in _METHODS:
            raise ConfigurationError(f"method.name must be one of {_METHODS}, got {method!r}")
        if not abs(self.get("source", "rho")) < 1:
            raise ConfigurationError("source.rho must satisfy |rho| < 1")
        if self.get("noise", "var") <= 0:
            raise ConfigurationError("noise.var must be positive")
        for key in ("n_source", "n_noise", "n_output"):
            if self.get("grids", key) < 2:
                raise ConfigurationError(f"grids.{key} is too small")
        if self.get("run", "mc_samples") < 0:
            raise ConfigurationError("run.mc_samples must be nonnegative")


def _coerce(section: str, key: str, raw, default):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if (section, key) in _OPTIONAL_FLOATS:
        return None if text == "" else float(text)
    if isinstance(default, bool):
        lowered = text.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigurationError(f"{section}.{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(text)
        except ValueError as exc:
            raise ConfigurationError(f"{section}.{key}: expected an integer, got {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigurationError(f"{section}.{key}: expected a number, got {raw!r}") from exc
    return text


def default_config() -> ExperimentConfig:
    return ExperimentConfig(values={s: dict(items) for s, items in DEFAULTS.items()})


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Defaults, then the file at ``path``, then ``section.key=value`` overrides."""
    config = default_config()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(path) as handle:
                parser.read_file(handle)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed config file {path}: {exc}") from exc
        for section in parser.sections():
            if section not in config.values:
                raise ConfigurationError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                _apply(config, section, key, raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form section.key=value")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigurationError(f"override key {dotted!r} is not of the form section.key")
        section, key = dotted.split(".", 1)
        if section not in config.values:
            raise ConfigurationError(f"unknown config section {section!r} in override {item!r}")
        _apply(config, section.strip(), key.strip(), raw)
    config.validate()
    return config


def _apply(config: ExperimentConfig, section: str, key: str, raw):
    defaults = DEFAULTS[section]
    if key not in defaults:
        raise ConfigurationError(f"unknown config key {section}.{key}")
    config.values[section][key] = _coerce(section, key, raw, defaults[key])


def parse_number_list(text: str, what: str) -> list[float]:
    if not text.strip():
        return []
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse {what}: {text!r}") from exc


def write_config(config: ExperimentConfig, path):
    """Write the materialized configuration back out as an INI file."""
    parser = configparser.ConfigParser()
    for section, items in config.values.items():
        parser[section] = {}
        for key, value in items.items():
            parser[section][key] = "" if value is None else str(value)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as handle:
        parser.write(handle)
