"""
src/domain/phase_space.py

The solver's phase space: a periodic spatial grid (a slab varying along one
axis, or the full 3D torus) times a cubic velocity lattice, and the
distribution values f[x-node, v-node] stored on it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from src.domain.enums import SpatialMode
from src.domain.geometry import CellGrid

#: Default cap on the number of stored f values (n_space · m_v³).
DEFAULT_MAX_VALUES = 200_000_000

#: Minimum ratio v_max / √T_max accepted by :meth:`PhaseSpaceGrid.check_velocity_range`.
MIN_VELOCITY_SPAN = 5.0


class SolverError(Exception):
    """Raised for an invalid grid, a non-positive temperature or end time, or a
    field above the memory cap."""


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Spatial nodes × velocity lattice.

    Attributes:
        spatial: Slab (variation along ``axis`` only) or the full torus.
        m_x: Spatial nodes per varying direction.
        m_v: Velocity nodes per direction; odd so that v = 0 is a node.
        v_max: Half-width of the velocity box [−v_max, v_max]³.
        axis: Varying direction of a slab.
        max_values: Memory cap on ``n_space · m_v³``.
    """

    spatial: SpatialMode
    m_x: int
    m_v: int
    v_max: float
    axis: int = 0
    max_values: int = DEFAULT_MAX_VALUES

    def __post_init__(self) -> None:
        if self.m_x < 1:
            raise SolverError(f"m_x must be positive, got {self.m_x}")
        if self.m_v < 3 or self.m_v % 2 == 0:
            raise SolverError(f"m_v must be odd and at least 3, got {self.m_v}")
        if not self.v_max > 0.0:
            raise SolverError(f"v_max must be positive, got {self.v_max}")
        if self.axis not in (0, 1, 2):
            raise SolverError(f"slab axis must be 0, 1 or 2, got {self.axis}")
        if self.n_space * self.n_velocity > self.max_values:
            raise SolverError(
                f"{self.spatial.value} grid needs {self.n_space * self.n_velocity:,} values, "
                f"above the cap of {self.max_values:,}"
            )

    @property
    def n_space(self) -> int:
        """Number of spatial nodes."""
        return self.m_x if self.spatial is SpatialMode.SLAB else self.m_x**3

    @property
    def n_velocity(self) -> int:
        """Number of velocity nodes m_v³."""
        return self.m_v**3

    @property
    def dx(self) -> float:
        """Spatial spacing 1/m_x."""
        return 1.0 / self.m_x

    @property
    def dv(self) -> float:
        """Velocity spacing."""
        return 2.0 * self.v_max / (self.m_v - 1)

    @property
    def dv3(self) -> float:
        """Velocity cell volume Δv³."""
        return self.dv**3

    @property
    def node_volume(self) -> float:
        """Spatial measure carried by one node."""
        return self.dx if self.spatial is SpatialMode.SLAB else self.dx**3

    def velocity_ticks(self) -> NDArray[np.float64]:
        """The m_v lattice values along one direction."""
        return np.linspace(-self.v_max, self.v_max, self.m_v)

    def velocities(self) -> NDArray[np.float64]:
        """All velocity nodes, shape ``(m_v³, 3)``, row-major."""
        t = self.velocity_ticks()
        vx, vy, vz = np.meshgrid(t, t, t, indexing="ij")
        return np.stack([vx.ravel(), vy.ravel(), vz.ravel()], axis=1)

    def node_positions(self) -> NDArray[np.float64]:
        """Spatial node midpoints, shape ``(n_space, 3)``.

        Slab nodes carry 0.5 in the two uniform directions.
        """
        ticks = (np.arange(self.m_x) + 0.5) / self.m_x
        if self.spatial is SpatialMode.SLAB:
            pos = np.full((self.m_x, 3), 0.5)
            pos[:, self.axis] = ticks
            return pos
        return CellGrid(self.m_x).centers()

    def check_velocity_range(self, T_max: float) -> None:
        """Raise if the box is narrower than 5·√T_max."""
        if T_max > 0.0 and self.v_max < MIN_VELOCITY_SPAN * math.sqrt(T_max):
            raise SolverError(
                f"v_max={self.v_max} is below {MIN_VELOCITY_SPAN:g}*sqrt(T_max)"
                f" = {MIN_VELOCITY_SPAN * math.sqrt(T_max):.4f}"
            )


def default_v_max(T_ref: float) -> float:
    """Default velocity half-width 6·√T_ref."""
    return 6.0 * math.sqrt(T_ref)


@dataclass(frozen=True, eq=False)
class DistributionField:
    """f[x-node, v-node] on a :class:`PhaseSpaceGrid` at time ``time``."""

    grid: PhaseSpaceGrid
    values: NDArray[np.float64]
    time: float = 0.0

    def __post_init__(self) -> None:
        expected = (self.grid.n_space, self.grid.n_velocity)
        if self.values.shape != expected:
            raise SolverError(f"field shape {self.values.shape} does not match grid {expected}")

    def with_values(
        self, values: NDArray[np.float64], time: float | None = None
    ) -> DistributionField:
        """Same grid, new values (and optionally a new time)."""
        return DistributionField(self.grid, values, self.time if time is None else time)

    def total_mass(self) -> float:
        """Σ f Δv³ Δx."""
        return float(np.sum(self.values)) * self.grid.dv3 * self.grid.node_volume

    def conserved_totals(self) -> tuple[float, NDArray[np.float64], float]:
        """Total mass, momentum and Σ f|v|² over the whole field."""
        weight = self.grid.dv3 * self.grid.node_volume
        v = self.grid.velocities()
        per_v = self.values.sum(axis=0) * weight
        return float(per_v.sum()), per_v @ v, float(per_v @ np.sum(v * v, axis=1))
