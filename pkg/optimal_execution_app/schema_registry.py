"""
This module provides the Avro schemas of the documents that cross the process boundary:
experiment configurations read from disk and the result records written to results.csv.
"""

# Standard library imports
import json
from functools import cache

# Third-party imports
import avro.errors
import avro.io
import avro.schema

# Local application imports
from .app_logging import logger
from .errors import ConfigurationError

_COEFFICIENT_DOC = "A number, bridge:<amplitude>:<clip>:<seed>, sine:<amplitude>:<period> or linear:<start>:<end>"

SCHEMAS: dict[str, dict] = {
    "ExperimentConfig": {
        "type": "record",
        "name": "ExperimentConfig",
        "namespace": "optimal_execution_app",
        "fields": [
            {
                "name": "model",
                "type": {
                    "type": "record",
                    "name": "ModelSection",
                    "fields": [
                        {"name": "t0", "type": "double", "default": 0.0},
                        {"name": "T", "type": "double", "default": 1.0},
                        {"name": "gamma0", "type": "double", "default": 1.0},
                        {"name": "x", "type": "double", "default": 1.0},
                        {"name": "d", "type": "double", "default": 0.0},
                        {"name": "mu", "type": "string", "default": "0", "doc": _COEFFICIENT_DOC},
                        {"name": "sigma", "type": "string", "default": "0", "doc": _COEFFICIENT_DOC},
                        {"name": "rho", "type": "string", "default": "1", "doc": _COEFFICIENT_DOC},
                        {"name": "eta", "type": "string", "default": "0", "doc": _COEFFICIENT_DOC},
                        {"name": "rbar", "type": "string", "default": "0", "doc": _COEFFICIENT_DOC},
                        {"name": "lam", "type": "string", "default": "0", "doc": _COEFFICIENT_DOC},
                    ],
                },
            },
            {
                "name": "targets",
                "type": {
                    "type": "record",
                    "name": "TargetsSection",
                    "fields": [
                        {
                            "name": "xi_kind",
                            "type": {"type": "enum", "name": "XiKind", "symbols": ["constant", "linear_w3"]},
                            "default": "constant",
                        },
                        {"name": "xi_a", "type": "double", "default": 0.0},
                        {"name": "xi_b", "type": "double", "default": 0.0},
                        {
                            "name": "zeta_kind",
                            "type": {
                                "type": "enum",
                                "name": "ZetaKind",
                                "symbols": ["zero", "function", "conditional_xi"],
                            },
                            "default": "zero",
                        },
                        {"name": "zeta", "type": "string", "default": "0", "doc": _COEFFICIENT_DOC},
                    ],
                },
            },
            {
                "name": "experiment",
                "type": {
                    "type": "record",
                    "name": "ExperimentSection",
                    "fields": [
                        {"name": "id", "type": "string", "default": "experiment"},
                        {
                            "name": "kind",
                            "type": {
                                "type": "enum",
                                "name": "ExperimentKind",
                                "symbols": ["solve", "compare", "approximate", "validate", "example"],
                            },
                            "default": "solve",
                        },
                        {"name": "example", "type": "string", "default": ""},
                        {"name": "n_paths", "type": "int", "default": 10000},
                        {"name": "n_steps", "type": "int", "default": 1000},
                        {"name": "seed", "type": "long", "default": 0},
                        {"name": "threads", "type": "int", "default": 1},
                        {
                            "name": "strategy",
                            "type": {
                                "type": "enum",
                                "name": "StrategyName",
                                "symbols": ["optimal", "no_trade", "twap", "block_sell", "immediate_close", "terminal_block"],
                            },
                            "default": "optimal",
                        },
                        {"name": "perturbation_eps", "type": "double", "default": 0.25},
                        {"name": "level_min", "type": "int", "default": 2},
                        {"name": "level_max", "type": "int", "default": 8},
                    ],
                },
            },
            {
                "name": "output",
                "type": {
                    "type": "record",
                    "name": "OutputSection",
                    "fields": [
                        {"name": "directory", "type": "string", "default": ""},
                        {"name": "strategy_csv", "type": "boolean", "default": True},
                    ],
                },
            },
        ],
    },
    "ResultRecord": {
        "type": "record",
        "name": "ResultRecord",
        "namespace": "optimal_execution_app",
        "fields": [
            {"name": "experiment_id", "type": "string"},
            {"name": "config_hash", "type": "string"},
            {"name": "metric", "type": "string"},
            {"name": "value", "type": "double"},
            {"name": "std_error", "type": "double"},
            {"name": "n_paths", "type": "int"},
            {"name": "seed", "type": "long"},
        ],
    },
}


@cache
def get_schema(schema_name: str) -> avro.schema.RecordSchema:
    """
    Parse and cache the Avro schema registered under `schema_name`.

    Raises:
        ConfigurationError: if no schema has that name.
    """
    try:
        return avro.schema.parse(json.dumps(SCHEMAS[schema_name]))
    except KeyError as e:
        raise ConfigurationError(f"No schema named {schema_name}") from e


def _check_known_fields(schema: avro.schema.Schema, datum, path: str) -> None:
    """Avro record validation ignores extra keys, so reject them here."""
    if not isinstance(schema, avro.schema.RecordSchema) or not isinstance(datum, dict):
        return
    known = {field.name: field for field in schema.fields}
    unknown = sorted(set(datum) - set(known))
    if unknown:
        raise ConfigurationError(f"Unknown keys in {path or 'document'}: {', '.join(unknown)}")
    for name, value in datum.items():
        _check_known_fields(known[name].type, value, f"{path}.{name}" if path else name)


def validate_document(schema_name: str, datum: dict) -> dict:
    """
    Validate `datum` against the named schema and return it unchanged.

    Raises:
        ConfigurationError: on unknown keys, missing fields or type mismatches.
    """
    schema = get_schema(schema_name)
    _check_known_fields(schema, datum, "")
    try:
        avro.io.validate(schema, datum, raise_on_error=True)
    except avro.errors.AvroTypeException as avro_type_err:
        logger.debug(f"Avro validation failed for {schema_name}: {avro_type_err}")
        raise ConfigurationError(f"{schema_name} does not match its schema: {avro_type_err}") from avro_type_err
    return datum


def field_defaults(schema_name: str) -> dict[str, dict]:
    """Section name to {field name: (Avro type name, default)} for a two-level record schema."""
    defaults = {}
    for section in get_schema(schema_name).fields:
        defaults[section.name] = {
            field.name: (field.type.type, field.default) for field in section.type.fields
        }
    return defaults
