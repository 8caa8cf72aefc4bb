"""
Pytest configuration and fixtures.

Provides small clusters, load distributions and experiment configurations,
plus a fixture that keeps OpenTelemetry from exporting during tests.
"""

from __future__ import annotations

from collections.abc import Generator
from pathlib import Path
from unittest.mock import MagicMock, patch

import numpy as np
import pytest

from app.config import Config, ExperimentConfig, TopologySpec
from app.services.cluster import ClusterTopology
from app.services.environment import (
    DEFAULT_LOAD,
    EnvironmentProfile,
    LoadDistribution,
    UtilityDistribution,
)
from app.services.mdp import Scenario, builtin_scenario


def two_class_utility(low: int = 3, high: int = 9, p_high: float = 0.4) -> UtilityDistribution:
    probs = [0.0] * 10
    probs[low - 1] = 1.0 - p_high
    probs[high - 1] = p_high
    return UtilityDistribution(tuple(probs))


@pytest.fixture
def test_config(tmp_path: Path) -> Config:
    """Create a test runtime configuration."""
    return Config(
        otel_endpoint="",
        service_name="fog-slicing-test",
        service_namespace="test",
        environment="test",
        app_version="1.0.0-test",
        build_number="0",
        log_level="DEBUG",
        results_dir=tmp_path / "results",
        strict=True,
    )


@pytest.fixture
def mock_otel() -> Generator[MagicMock, None, None]:
    """Mock the OTLP exporter to avoid network export during tests."""
    with (
        patch("app.telemetry.OTLPSpanExporter") as mock_exporter,
        patch("app.telemetry.BatchSpanProcessor") as mock_processor,
    ):
        mock_exporter.return_value = MagicMock()
        mock_processor.return_value = MagicMock()
        yield mock_exporter


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def hex_topology() -> ClusterTopology:
    return ClusterTopology.hexagonal(capacity=7)


@pytest.fixture
def scenario1() -> Scenario:
    return builtin_scenario(1)


@pytest.fixture
def tiny_load() -> LoadDistribution:
    """C = {1, 2}, H = {1, 2}."""
    return LoadDistribution(
        c_values=(1, 2), c_probs=(0.5, 0.5), h_values=(1, 2), h_probs=(0.5, 0.5)
    )


@pytest.fixture
def tiny_topology() -> ClusterTopology:
    """Two fully connected FNs with two blocks each."""
    return ClusterTopology.uniform(k=2, capacity=2)


@pytest.fixture
def tiny_config(tmp_path: Path, tiny_load: LoadDistribution) -> ExperimentConfig:
    """Two FNs, two blocks, two utility classes: small enough for the oracle."""
    profile = EnvironmentProfile(id="T2", utility=two_class_utility(), load=tiny_load)
    return ExperimentConfig(
        seed=3,
        horizon=200,
        window_size=50,
        environment="T2",
        output_dir=tmp_path / "out",
        schedule=(("T2", 1),),
        topology=TopologySpec(kind="uniform", k=2, capacity=2),
        load=tiny_load,
        profiles=(profile,),
        strict=True,
    )


@pytest.fixture
def small_config(tmp_path: Path) -> ExperimentConfig:
    """Hexagonal cluster with the builtin traffic, short horizon."""
    return ExperimentConfig(
        seed=11,
        horizon=300,
        window_size=100,
        environment="E3",
        output_dir=tmp_path / "out",
        load=DEFAULT_LOAD,
        strict=True,
    )
