"""Tests which cover environment-driven configuration"""

import os

from optimal_execution_app.config import get_config, validate_type


def test_config_reads_environment(config):
    """Run defaults come from the environment populated for the tests"""
    assert config["service_name"] == "optimal-execution-app"
    assert config["output_dir"] == "./results"
    assert config["default_n_paths"] == 200
    assert config["default_n_steps"] == 50
    assert config["default_seed"] == 11
    assert config["default_threads"] == 1


def test_malformed_integer_falls_back_to_default():
    """A value that is not an integer leaves the default in place"""
    os.environ["DEFAULT_N_PATHS"] = "many"
    try:
        assert get_config()["default_n_paths"] == 10_000
    finally:
        os.environ["DEFAULT_N_PATHS"] = "200"


def test_validate_type_reads_floats():
    os.environ["SOME_RATE"] = " 0.25 "
    try:
        assert validate_type("SOME_RATE", float, 1.0) == 0.25
        assert validate_type("SOME_RATE", str, "fallback") == "fallback"
    finally:
        del os.environ["SOME_RATE"]
