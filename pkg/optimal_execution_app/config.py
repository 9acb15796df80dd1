"""This module handles environment variables"""

import os


def get_config() -> dict[str, str | int]:
    """Extract configuration from environment variables."""
    output_dir = get_os_env_string("EXECUTION_APP_OUTPUT_DIR", "./results")
    log_ctrl_file = get_os_env_string("LOG_CTRL_FILE", "")
    service_name = get_os_env_string("SERVICE_NAME", "optimal-execution-app")
    default_n_paths = validate_type("DEFAULT_N_PATHS", int, 10_000)
    default_n_steps = validate_type("DEFAULT_N_STEPS", int, 1_000)
    default_seed = validate_type("DEFAULT_SEED", int, 0)
    default_threads = validate_type("DEFAULT_THREADS", int, 1)

    config = {
        "service_name": service_name,
        "version": "1.0.0",
        "output_dir": output_dir,
        "log_ctrl_file": log_ctrl_file,
        "default_n_paths": default_n_paths,
        "default_n_steps": default_n_steps,
        "default_seed": default_seed,
        "default_threads": default_threads,
    }
    return config


def validate_type(env_variable: str, expected_type: type, default):
    """
    Read `env_variable` as an int or a float.
    Unset, malformed or unsupported values give `default`.
    """
    if expected_type not in (int, float):
        return default
    try:
        return expected_type(get_os_env_string(env_variable, ""))
    except ValueError:
        return default


def get_os_env_string(env_name: str, default_value: str) -> str:
    """Return the value for a given environment variable."""
    return os.getenv(env_name, default_value).strip()
