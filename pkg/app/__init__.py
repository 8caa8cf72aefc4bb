"""
Fog-node slicing simulator with a deep Q-network edge controller.

This package provides:
- The fog-node cluster and request environment
- DQN, rule-based and tabular controllers
- KPI accounting and a value-iteration oracle
- An experiment harness with CSV output
- Logging with trace correlation and OpenTelemetry spans per run
"""

from __future__ import annotations

from dataclasses import dataclass

from app.config import Config
from app.telemetry import configure_logging, configure_opentelemetry

__all__ = ["Config", "Runtime", "create_runtime"]


@dataclass(frozen=True)
class Runtime:
    """Configured process-wide services."""

    config: Config


def create_runtime(config: Config | None = None) -> Runtime:
    """Runtime factory: telemetry first, then logging.

    Args:
        config: Optional configuration object. If not provided,
                configuration is loaded from environment variables.
    """
    if config is None:
        config = Config.from_env()

    configure_opentelemetry(config)
    configure_logging(config.log_level)
    return Runtime(config=config)
