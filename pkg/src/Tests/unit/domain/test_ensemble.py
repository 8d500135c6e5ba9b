"""
test_ensemble.py — Unit tests for src/domain/ensemble.py
"""
from __future__ import annotations

import numpy as np
import pytest

from src.domain.ensemble import EnsembleError, ParticleEnsemble


class TestConstruction:
    """Shape, finiteness and wrapping checks."""

    def test_arrays_are_copied_and_frozen(self) -> None:
        pos = np.array([[0.1, 0.2, 0.3]])
        vel = np.array([[1.0, 0.0, 0.0]])
        ensemble = ParticleEnsemble(positions=pos, velocities=vel)
        pos[0, 0] = 0.9
        assert ensemble.positions[0, 0] == 0.1
        with pytest.raises(ValueError):
            ensemble.velocities[0, 0] = 5.0

    @pytest.mark.parametrize(
        ("positions", "velocities"),
        [
            ([[0.1, 0.2]], [[0.0, 0.0]]),
            ([[0.1, 0.2, 0.3]], [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
            ([[1.0, 0.2, 0.3]], [[0.0, 0.0, 0.0]]),
            ([[-0.1, 0.2, 0.3]], [[0.0, 0.0, 0.0]]),
            ([[0.1, 0.2, 0.3]], [[np.nan, 0.0, 0.0]]),
        ],
        ids=["two-d", "count-mismatch", "unwrapped-high", "unwrapped-low", "nan-velocity"],
    )
    def test_rejects_invalid(self, positions: list, velocities: list) -> None:
        with pytest.raises(EnsembleError):
            ParticleEnsemble(positions=positions, velocities=velocities)

    def test_empty_ensemble_allowed(self) -> None:
        ensemble = ParticleEnsemble(positions=np.empty((0, 3)), velocities=np.empty((0, 3)))
        assert ensemble.n == 0
        assert ensemble.total_energy() == 0.0


class TestConservedQuantities:
    """Total momentum and energy."""

    def test_totals(self) -> None:
        ensemble = ParticleEnsemble(
            positions=[[0.1, 0.1, 0.1], [0.5, 0.5, 0.5]],
            velocities=[[1.0, 2.0, 0.0], [-1.0, 0.0, 2.0]],
        )
        np.testing.assert_allclose(ensemble.total_momentum(), [0.0, 2.0, 2.0])
        assert ensemble.total_energy() == pytest.approx(5.0)


class TestEvolve:
    """evolve returns a new ensemble and accumulates collisions."""

    def test_replaces_fields(self, equilibrium_ensemble: ParticleEnsemble) -> None:
        new_v = np.zeros_like(equilibrium_ensemble.velocities)
        moved = equilibrium_ensemble.evolve(velocities=new_v, time=0.5, collisions=3)
        assert moved is not equilibrium_ensemble
        assert moved.time == 0.5
        assert moved.collision_count == 3
        np.testing.assert_array_equal(moved.positions, equilibrium_ensemble.positions)
        assert equilibrium_ensemble.collision_count == 0

    def test_collisions_accumulate(self, equilibrium_ensemble: ParticleEnsemble) -> None:
        once = equilibrium_ensemble.evolve(collisions=2)
        assert once.evolve(collisions=5).collision_count == 7
