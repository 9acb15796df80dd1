"""
Experiment configuration files.

An experiment file is an INI document with the sections model, targets, experiment and
output. Values are typed by the ExperimentConfig Avro schema, missing keys take the schema
defaults, and run parameters resolve as CLI flag > experiment file > environment default.
"""

import configparser
import copy
import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .app_logging import logger
from .closed_forms import ExampleConfig, example_spec, get_example
from .config import get_config
from .errors import ConfigurationError
from .model_core import Coefficient, ModelSpec, TargetSpec, TimeGrid, bridge_coefficient
from .schema_registry import field_defaults, validate_document

SCHEMA_NAME = "ExperimentConfig"

# Keys that change how a run executes but not what it computes.
_UNHASHED = (("experiment", "threads"), ("output", "directory"))

# CLI flag name to (section, key); `kind` is set by the validate subcommand.
OVERRIDE_KEYS = {
    "seed": ("experiment", "seed"),
    "paths": ("experiment", "n_paths"),
    "steps": ("experiment", "n_steps"),
    "threads": ("experiment", "threads"),
    "out": ("output", "directory"),
    "kind": ("experiment", "kind"),
}


def parse_coefficient(text: str, t0: float, T: float) -> Coefficient:
    """
    Coefficient from its configuration string:

        0.5                          constant
        bridge:<amplitude>:<clip>:<seed>   clipped Brownian bridge path
        sine:<amplitude>:<period>    amplitude·sin(2πt/period)
        linear:<start>:<end>         linear from t0 to T
    """
    kind, _, rest = text.strip().partition(":")
    arguments = rest.split(":") if rest else []
    try:
        match kind:
            case "bridge" if len(arguments) == 3:
                amplitude, clip, seed = float(arguments[0]), float(arguments[1]), int(arguments[2])
                return bridge_coefficient(T, amplitude, clip, seed, t0=t0)
            case "sine" if len(arguments) == 2:
                amplitude, period = float(arguments[0]), float(arguments[1])
                if period <= 0:
                    raise ConfigurationError(f"Sine period must be positive in '{text}'")
                return Coefficient.from_function(
                    lambda t: amplitude * np.sin(2.0 * math.pi * t / period)
                )
            case "linear" if len(arguments) == 2:
                return Coefficient.from_samples(
                    np.array([t0, T]), np.array([float(arguments[0]), float(arguments[1])])
                )
            case _ if not rest:
                value = float(kind)
                if not math.isfinite(value):
                    raise ConfigurationError(f"Coefficient '{text}' is not finite")
                return Coefficient.constant(value)
    except ValueError as e:
        raise ConfigurationError(f"Malformed coefficient '{text}'") from e
    raise ConfigurationError(f"Malformed coefficient '{text}'")


def _default_document() -> dict:
    """Schema defaults, with run parameters taken from the environment."""
    document = {
        section: {key: default for key, (_, default) in fields.items()}
        for section, fields in field_defaults(SCHEMA_NAME).items()
    }
    env = get_config()
    document["experiment"]["n_paths"] = env["default_n_paths"]
    document["experiment"]["n_steps"] = env["default_n_steps"]
    document["experiment"]["seed"] = env["default_seed"]
    document["experiment"]["threads"] = env["default_threads"]
    document["output"]["directory"] = env["output_dir"]
    return document


def _typed(value: str, avro_type: str, where: str):
    try:
        match avro_type:
            case "double":
                return float(value)
            case "int" | "long":
                return int(value)
            case "boolean":
                lowered = value.strip().lower()
                if lowered not in configparser.ConfigParser.BOOLEAN_STATES:
                    raise ValueError(value)
                return configparser.ConfigParser.BOOLEAN_STATES[lowered]
    except ValueError as e:
        raise ConfigurationError(f"{where}: cannot read '{value}' as {avro_type}") from e
    return value.strip()


def read_experiment_file(path: str) -> dict[str, dict]:
    """
    Sections of an INI experiment file with values typed by the schema.

    Unknown keys are passed through untyped; schema validation rejects them.
    """
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as experiment_file:
            parser.read_file(experiment_file)
    except OSError as e:
        raise ConfigurationError(f"Cannot read experiment file {path}: {e}") from e
    except configparser.Error as e:
        raise ConfigurationError(f"Malformed experiment file {path}: {e}") from e

    types = field_defaults(SCHEMA_NAME)
    sections = {}
    for section in parser.sections():
        if section not in types:
            raise ConfigurationError(f"Unknown section [{section}] in {path}")
        sections[section] = {
            key: _typed(value, types[section][key][0], f"[{section}] {key}")
            if key in types[section]
            else value
            for key, value in parser.items(section)
        }
    return sections


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """A validated experiment document."""

    document: dict

    @property
    def experiment_id(self) -> str:
        return self.document["experiment"]["id"]

    @property
    def kind(self) -> str:
        return self.document["experiment"]["kind"]

    @property
    def n_paths(self) -> int:
        return self.document["experiment"]["n_paths"]

    @property
    def n_steps(self) -> int:
        return self.document["experiment"]["n_steps"]

    @property
    def seed(self) -> int:
        return self.document["experiment"]["seed"]

    @property
    def threads(self) -> int:
        return self.document["experiment"]["threads"]

    @property
    def output_dir(self) -> str:
        return self.document["output"]["directory"]

    @property
    def experiment(self) -> dict:
        return self.document["experiment"]

    @cached_property
    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of everything that determines the results."""
        canonical = copy.deepcopy(self.document)
        for section, key in _UNHASHED:
            canonical[section].pop(key)
        text = json.dumps(canonical, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    @property
    def example(self) -> ExampleConfig | None:
        name = self.document["experiment"]["example"]
        return get_example(name) if name else None

    def model_spec(self) -> ModelSpec:
        """
        ModelSpec of the run. A named example replaces the model and targets sections.
        """
        example = self.example
        if example is not None:
            return example_spec(example, self.n_steps)

        model, targets = self.document["model"], self.document["targets"]
        t0, T = model["t0"], model["T"]
        grid = TimeGrid(t0, T, self.n_steps)
        zeta = (
            parse_coefficient(targets["zeta"], t0, T)
            if targets["zeta_kind"] == "function"
            else None
        )
        return ModelSpec(
            grid=grid,
            **{
                name: parse_coefficient(model[name], t0, T)
                for name in ("mu", "sigma", "rho", "eta", "rbar", "lam")
            },
            gamma0=model["gamma0"],
            targets=TargetSpec(
                xi_kind=targets["xi_kind"],
                xi_a=targets["xi_a"],
                xi_b=targets["xi_b"],
                zeta_kind=targets["zeta_kind"],
                zeta=zeta,
            ),
            x=model["x"],
            d=model["d"],
        )


def load_experiment_config(
    path: str | None = None, overrides: dict | None = None
) -> ExperimentConfig:
    """
    Build and validate an ExperimentConfig.

    Args:
        path: INI experiment file, or None for schema and environment defaults only.
        overrides: CLI flag values keyed by flag name (see OVERRIDE_KEYS); None entries are ignored.

    Raises:
        ConfigurationError: on unreadable files, unknown sections or keys, or invalid values.
    """
    document = _default_document()
    if path:
        for section, values in read_experiment_file(path).items():
            document[section].update(values)
    for flag, value in (overrides or {}).items():
        if value is None:
            continue
        if flag not in OVERRIDE_KEYS:
            raise ConfigurationError(f"Unknown override {flag}")
        section, key = OVERRIDE_KEYS[flag]
        document[section][key] = value

    validate_document(SCHEMA_NAME, document)
    experiment = document["experiment"]
    if experiment["kind"] == "example" and not experiment["example"]:
        raise ConfigurationError("Experiments of kind 'example' need an example name")
    if experiment["example"]:
        get_example(experiment["example"])
    if experiment["n_paths"] < 2:
        raise ConfigurationError(f"n_paths must be at least 2, got {experiment['n_paths']}")
    if experiment["n_steps"] < 1:
        raise ConfigurationError(f"n_steps must be positive, got {experiment['n_steps']}")
    if experiment["seed"] < 0:
        raise ConfigurationError(f"seed must be nonnegative, got {experiment['seed']}")
    if experiment["threads"] < 0:
        raise ConfigurationError(f"threads must be nonnegative, got {experiment['threads']}")
    if not 0 <= experiment["level_min"] <= experiment["level_max"]:
        raise ConfigurationError("Approximation levels need 0 <= level_min <= level_max")

    config = ExperimentConfig(document=document)
    logger.debug(f"Loaded experiment '{config.experiment_id}' with hash {config.config_hash}")
    return config
