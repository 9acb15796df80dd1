"""This module handles console and structured run logging"""

import json
import logging
import sys
import threading
from datetime import datetime, timezone
from enum import IntEnum
from functools import partialmethod
from typing import TextIO

from optimal_execution_app.config import get_config


class Severity(IntEnum):
    """Mapping of logging library severities to log-control level names"""

    DEBUG = 10
    INFO = 20
    WARNING = 30
    ERROR = 40
    CRITICAL = 50


class _RunLogger:
    """Logger object capable of logging to the console and to a JSON-lines run log."""

    def __init__(self, console_logger: "_ConsoleLogger", run_log_level=Severity.INFO) -> None:
        self.console_logger = console_logger
        self.config = get_config()
        self._run_log: TextIO | None = None
        self._lock = threading.Lock()
        self.run_log_level = run_log_level
        if self.config.get("log_ctrl_file"):
            self.run_log_level = self.__severity_from_log_control(self.config["log_ctrl_file"])

    def __severity_from_log_control(self, log_ctrl_path: str) -> Severity:
        """Severity of the log-control entry whose container is this service."""
        service_name = self.config.get("service_name")
        with open(log_ctrl_path, "r", encoding="utf-8") as log_ctrl_file:
            entries = json.load(log_ctrl_file)
        severity = next(
            (entry.get("severity", "info") for entry in entries if entry.get("container") == service_name),
            None,
        )
        if severity is None:
            self.console_logger.warning(
                f"Unable to set logging severity from Log Control file. No severity specified for service name '{service_name}'. "
                f"Defaulting to {self.run_log_level.name}."
            )
            return self.run_log_level
        return Severity[severity.upper()]

    def attach_run_log(self, path: str) -> None:
        """Start mirroring records into a JSON-lines file at `path`."""
        self.detach_run_log()
        with self._lock:
            self._run_log = open(path, "w", encoding="utf-8")

    def detach_run_log(self) -> None:
        """Close the JSON-lines file if one is attached."""
        with self._lock:
            if self._run_log is not None:
                self._run_log.close()
                self._run_log = None

    def log(self, severity: Severity, message: Exception | str, **kwargs) -> None:
        """Log to the console and, at or above the run-log level, to the attached run log.

        Args:
            severity (Severity): severity of the message
            message (Exception | str): log message, exceptions are logged by their text
            **kwargs: passed to the console logger, e.g. exc_info
        """
        self.console_logger.log(severity, message, **kwargs)
        if severity >= self.run_log_level:
            self.__write_record(str(message), severity)

    debug = partialmethod(log, Severity.DEBUG)
    info = partialmethod(log, Severity.INFO)
    warning = partialmethod(log, Severity.WARNING)
    error = partialmethod(log, Severity.ERROR)
    critical = partialmethod(log, Severity.CRITICAL)

    def __write_record(self, message: str, severity: Severity) -> None:
        record = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "severity": severity.name.lower(),
            "service_id": self.config.get("service_name"),
            "message": message,
            "version": self.config.get("version"),
        }
        with self._lock:
            if self._run_log is not None:
                self._run_log.write(json.dumps(record) + "\n")
                self._run_log.flush()


class _ConsoleLogger:
    """stdout handler on a named standard-library logger"""

    FORMAT = "[%(asctime)s.%(msecs)03d] %(name)s [%(levelname)s] %(message)s"
    DATE_FORMAT = "%d-%m-%Y %H:%M:%S"

    def __init__(self, name: str, console_log_level=Severity.INFO) -> None:
        self.__logger = logging.getLogger(name)
        if not self.__logger.hasHandlers():
            handler = logging.StreamHandler(stream=sys.stdout)
            handler.setFormatter(logging.Formatter(fmt=self.FORMAT, datefmt=self.DATE_FORMAT))
            self.__logger.addHandler(handler)
        self.set_level(console_log_level)

    def set_level(self, level: Severity) -> None:
        """Change the console threshold, e.g. when the CLI is asked for verbose output."""
        self.__logger.setLevel(level)
        for handler in self.__logger.handlers:
            handler.setLevel(level)

    def log(self, severity: Severity, record: Exception | str, **kwargs) -> None:
        self.__logger.log(severity, record, **kwargs)

    debug = partialmethod(log, Severity.DEBUG)
    info = partialmethod(log, Severity.INFO)
    warning = partialmethod(log, Severity.WARNING)
    error = partialmethod(log, Severity.ERROR)
    critical = partialmethod(log, Severity.CRITICAL)


logger = _RunLogger(
    console_logger=_ConsoleLogger(name="optimal-execution-app", console_log_level=Severity.INFO)
)
