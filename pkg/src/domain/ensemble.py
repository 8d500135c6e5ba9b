"""
src/domain/ensemble.py

Immutable snapshot Z_n = (X_n, V_n) of the particle system.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray


class EnsembleError(Exception):
    """Raised when positions or velocities violate the ensemble invariants."""


def _frozen(values: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise EnsembleError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise EnsembleError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Positions on the unit torus and velocities in R³ of n particles.

    Arrays are copied on construction and made read-only; every dynamics
    step returns a new ensemble.

    Invariants:
    - positions and velocities share the shape ``(n, 3)``;
    - every position coordinate lies in [0, 1).
    """

    positions: NDArray[np.float64]
    velocities: NDArray[np.float64]
    time: float = 0.0
    collision_count: int = 0

    def __post_init__(self) -> None:
        pos = _frozen(self.positions, "positions")
        vel = _frozen(self.velocities, "velocities")
        if pos.shape != vel.shape:
            raise EnsembleError(
                f"positions {pos.shape} and velocities {vel.shape} differ in shape"
            )
        if pos.size and (pos.min() < 0.0 or pos.max() >= 1.0):
            raise EnsembleError("positions must be wrapped into [0, 1)")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)

    @property
    def n(self) -> int:
        """Number of particles."""
        return int(self.positions.shape[0])

    def total_momentum(self) -> NDArray[np.float64]:
        """Σ v_j."""
        return np.asarray(self.velocities.sum(axis=0), dtype=np.float64)

    def total_energy(self) -> float:
        """Σ |v_j|²/2."""
        return 0.5 * float(np.sum(self.velocities * self.velocities))

    def evolve(
        self,
        *,
        positions: ArrayLike | None = None,
        velocities: ArrayLike | None = None,
        time: float | None = None,
        collisions: int = 0,
    ) -> ParticleEnsemble:
        """Return a copy with the given fields replaced and *collisions* added."""
        return replace(
            self,
            positions=self.positions if positions is None else positions,
            velocities=self.velocities if velocities is None else velocities,
            time=self.time if time is None else time,
            collision_count=self.collision_count + collisions,
        )
