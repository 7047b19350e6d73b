"""INI experiment configs.

One file describes one experiment::

    [experiment]
    id = toy-bf
    seed = 1
    replicates = 100
    output = results/toy-bf

    [model]
    n = 100

    [mavis]
    P = 100
    K = 1000

Every section other than ``experiment`` and ``model`` configures one
estimator.  Keys are case-insensitive; values are parsed as int, float,
bool or string, in that order.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

EXPERIMENTS = (
    "toy-bf",
    "ising-evidence",
    "ising-smc",
    "precision-smc",
    "bias-accumulation",
    "prop1-sweep",
    "ergm-synthetic",
)

POSITIVE = {"p", "m", "r", "t", "replicates", "n", "d", "rows", "cols", "nodes", "instances", "pilot_steps"}
NONNEGATIVE = {"k", "b"}


class ConfigError(ValueError):
    pass


def _parse(value):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value.lower() in ("true", "yes", "on"):
        return True
    if value.lower() in ("false", "no", "off"):
        return False
    return value


@dataclass
class ExperimentConfig:
    id: str
    seed: int
    replicates: int
    output: Path
    model: dict = field(default_factory=dict)
    estimators: dict = field(default_factory=dict)
    digest: str = ""
    text: str = ""

    def estimator(self, name, **defaults):
        return {**defaults, **self.estimators.get(name, {})}

    def model_param(self, key, default=None):
        return self.model.get(key, default)


def _check_section(name, values):
    for key, val in values.items():
        if key in POSITIVE and not (isinstance(val, int) and val > 0):
            raise ConfigError(f"[{name}] {key} must be a positive integer, got {val!r}")
        if key in NONNEGATIVE and not (isinstance(val, int) and val >= 0):
            raise ConfigError(f"[{name}] {key} must be a nonnegative integer, got {val!r}")
        if key == "eps" and not (isinstance(val, (int, float)) and val > 0):
            raise ConfigError(f"[{name}] eps must be positive")


def parse_config(text, base_dir="."):
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(str(err)) from err
    if "experiment" not in parser:
        raise ConfigError("missing [experiment] section")
    exp = {k: _parse(v) for k, v in parser["experiment"].items()}
    exp_id = exp.get("id")
    if exp_id not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment id {exp_id!r}; expected one of {', '.join(EXPERIMENTS)}")
    seed = exp.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    replicates = exp.get("replicates", 1)
    if not isinstance(replicates, int) or replicates <= 0:
        raise ConfigError("replicates must be a positive integer")
    output = Path(os.path.normpath(Path(base_dir) / str(exp.get("output", f"results/{exp_id}"))))
    model = {k: _parse(v) for k, v in parser["model"].items()} if "model" in parser else {}
    _check_section("model", model)
    estimators = {}
    for name in parser.sections():
        if name in ("experiment", "model"):
            continue
        values = {k: _parse(v) for k, v in parser[name].items()}
        _check_section(name, values)
        estimators[name] = values
    digest = hashlib.sha256(text.encode()).hexdigest()[:12]
    return ExperimentConfig(exp_id, seed, replicates, output, model, estimators, digest, text)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config(text, base_dir=path.parent)
