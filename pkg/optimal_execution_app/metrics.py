"""
This module provides a Prometheus Metrics Registry with run counters.
"""

from prometheus_client import (
    CollectorRegistry,
    Counter,
    disable_created_metrics,
    generate_latest,
    write_to_textfile,
)
from .app_logging import logger

SERVICE_PREFIX = "optimal_execution_app"

RUN_COUNTERS = {
    "paths_simulated": "Total number of Monte-Carlo paths simulated",
    "riccati_solves": "Total number of backward Riccati integrations",
    "riccati_failures": "Total number of Riccati integrations aborted on a non-positive denominator",
    "experiments_completed": "Total number of experiments that wrote their results",
    "experiments_failed": "Total number of experiments that ended with an error record",
}


class MetricsRegistry(CollectorRegistry):
    """
    Implementation of Prometheus Client's CollectorRegistry.
    Counters live for the whole process; a CLI run dumps them with `write`.
    """

    def __init__(self):
        super().__init__()
        disable_created_metrics()
        self.counters = {
            name: Counter(namespace=SERVICE_PREFIX, name=name, documentation=documentation, registry=self)
            for name, documentation in RUN_COUNTERS.items()
        }
        logger.debug(f"Created metrics registry in format:\n{generate_latest(self).decode('utf-8')}")

    def write(self, path: str) -> None:
        """Write the current counter values in the Prometheus text format."""
        write_to_textfile(path, self)


metrics_registry = MetricsRegistry()
