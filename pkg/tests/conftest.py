"""Pytest configuration and shared fixtures."""

from collections.abc import Callable
from pathlib import Path
from typing import Any

import pytest
import yaml

from snap_prep.utils.device_config import CoherenceParams, PulseConstraints, SystemParams
from snap_prep.utils.fock_core import GateSequence

FOCK2_ALPHAS = [1.390, -0.494, 0.622]
FOCK2_THETAS = [
    [2.049, -0.654, 1.130, -1.106],
    [0.003, 1.592, 0.0, -0.869, 0.0, -0.234, 0.067],
]


@pytest.fixture
def small_system():
    """Device parameters in an 8-level cavity for fast propagation."""
    return SystemParams(cavity_dim=8)


@pytest.fixture
def lossless():
    """Coherence parameters without any decay."""
    return CoherenceParams.lossless()


@pytest.fixture
def short_constraints():
    """Hardware limits with a short pulse to keep optimizer tests quick."""
    return PulseConstraints(duration=300e-9)


@pytest.fixture
def fock2_sequence():
    """Published two-SNAP gate parameters preparing |2>."""
    return GateSequence.from_parameters(FOCK2_ALPHAS, FOCK2_THETAS)


@pytest.fixture
def write_yaml(tmp_path: Path) -> Callable[[dict[str, Any]], Path]:
    """Write a run configuration into the test directory and return its path."""

    def _write(data: dict[str, Any], name: str = "run.yaml") -> Path:
        path = tmp_path / name
        with path.open("w") as handle:
            yaml.safe_dump(data, handle)
        return path

    return _write


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line("markers", "slow: long reproduction runs")
