"""
src/Tests/conftest.py

Root conftest.py — shared pytest fixtures available to all test modules.
"""
from __future__ import annotations

import json
import logging
from collections.abc import Callable, Iterator
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from src.domain.ensemble import ParticleEnsemble
from src.domain.geometry import CellGrid
from src.Tests.fixtures.sample_ensembles import make_config_dict, make_equilibrium_ensemble


@pytest.fixture
def rng() -> np.random.Generator:
    """A fixed-seed random stream."""
    return np.random.default_rng(20240601)


@pytest.fixture
def grid4() -> CellGrid:
    """The 4×4×4 cell grid (|Δ| = 1/64)."""
    return CellGrid(4)


@pytest.fixture
def equilibrium_ensemble() -> ParticleEnsemble:
    """2000 particles, uniform in space, unit-temperature Maxwellian velocities."""
    return make_equilibrium_ensemble(2000, seed=3)


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[..., Path]:
    """Write a JSON config built from :func:`make_config_dict` and return its path."""

    def _write(name: str = "run.json", **overrides: Any) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(make_config_dict(**overrides)), encoding="utf-8")
        return path

    return _write


@pytest.fixture(autouse=True)
def _reset_package_loggers() -> Iterator[None]:
    """Drop handlers and levels installed by ``setup_logging`` during a test."""
    yield
    for name in ("kinetic_bgk", "src"):
        target = logging.getLogger(name)
        target.setLevel(logging.NOTSET)
        for handler in list(target.handlers):
            target.removeHandler(handler)
            handler.close()
