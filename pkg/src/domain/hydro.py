"""
src/domain/hydro.py

Hydrodynamic moment fields (ϱ, u, T) and the trajectories that carry them.

Moments follow the usual definitions

    ϱ = ∫ f dv,   ϱu = ∫ f v dv,   ϱ(|u|² + 3T) = ∫ f |v|² dv,

evaluated either by quadrature (solver nodes) or by empirical averages over
the particles of a cell.  Nodes whose density falls below the vacuum floor
carry ``NaN`` velocity and temperature and are flagged in ``vacuum``.
"""
from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from src.domain.enums import SnapshotKind
from src.domain.ensemble import ParticleEnsemble
from src.domain.geometry import CellGrid, occupancy

#: Density below which a node counts as vacuum.
VACUUM_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class HydroMoments:
    """Per-node (ϱ, u, T) with vacuum flags and optional particle counts."""

    rho: NDArray[np.float64]
    u: NDArray[np.float64]
    T: NDArray[np.float64]
    vacuum: NDArray[np.bool_]
    counts: NDArray[np.int64] | None = None

    @property
    def n_nodes(self) -> int:
        """Number of cells or nodes."""
        return int(self.rho.shape[0])

    @classmethod
    def from_sums(
        cls,
        mass: NDArray[np.float64],
        momentum: NDArray[np.float64],
        second: NDArray[np.float64],
        *,
        counts: NDArray[np.int64] | None = None,
        floor: float = VACUUM_FLOOR,
    ) -> HydroMoments:
        """Build moments from the conserved sums ∫f, ∫fv and ∫f|v|²."""
        vacuum = mass < floor
        safe = np.where(vacuum, 1.0, mass)
        u = momentum / safe[:, None]
        T = (second / safe - np.sum(u * u, axis=1)) / 3.0
        # Rounding can push a cold node a hair below zero.
        T = np.where(np.abs(T) < 1e-14 * np.maximum(1.0, second / safe), 0.0, T)
        u = np.where(vacuum[:, None], np.nan, u)
        T = np.where(vacuum, np.nan, T)
        return cls(rho=np.asarray(mass, dtype=np.float64), u=u, T=T, vacuum=vacuum, counts=counts)

    def conserved(self) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Inverse of :meth:`from_sums` (vacuum nodes contribute zero)."""
        u = np.where(self.vacuum[:, None], 0.0, self.u)
        T = np.where(self.vacuum, 0.0, self.T)
        momentum = self.rho[:, None] * u
        second = self.rho * (np.sum(u * u, axis=1) + 3.0 * T)
        return self.rho.copy(), momentum, second


def cell_moments(ensemble: ParticleEnsemble, grid: CellGrid) -> HydroMoments:
    """Empirical per-cell moments of *ensemble*.

    ϱ_Δ = N_Δ/(n|Δ|) so that Σ_Δ ϱ_Δ|Δ| = 1; P_Δ = Σv/N_Δ; E_Δ = Σ|v|²/(2N_Δ);
    T_Δ = (2E_Δ − |P_Δ|²)/3.  Empty cells are flagged as vacuum.
    """
    occ = occupancy(ensemble.positions, grid)
    v = ensemble.velocities[occ.order]
    counts = occ.counts
    n_cells = grid.n_cells
    ids = np.repeat(np.arange(n_cells), counts)
    momentum = np.zeros((n_cells, 3))
    np.add.at(momentum, ids, v)
    second = np.bincount(ids, weights=np.sum(v * v, axis=1), minlength=n_cells)

    empty = counts == 0
    safe = np.where(empty, 1, counts).astype(np.float64)
    P = momentum / safe[:, None]
    T = (second / safe - np.sum(P * P, axis=1)) / 3.0
    rho = counts / (ensemble.n * grid.cell_volume)
    return HydroMoments(
        rho=rho.astype(np.float64),
        u=np.where(empty[:, None], np.nan, P),
        T=np.where(empty, np.nan, T),
        vacuum=empty,
        counts=counts,
    )


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VelocityHistogram:
    """Histogram of one velocity coordinate over all particles."""

    axis: int
    edges: NDArray[np.float64]
    counts: NDArray[np.int64]


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Moments observed at one time."""

    time: float
    moments: HydroMoments
    kind: SnapshotKind = SnapshotKind.CELL
    histogram: VelocityHistogram | None = None


class TrajectoryError(Exception):
    """Raised when snapshots are appended out of order or change node count."""


@dataclass(eq=False)
class MomentTrajectory:
    """Ordered snapshots with strictly increasing times and a fixed node count.

    Instances are callable so they can be passed directly as an observer.
    """

    snapshots: list[Snapshot] = field(default_factory=list)

    def __call__(self, snapshot: Snapshot) -> None:
        self.append(snapshot)

    def append(self, snapshot: Snapshot) -> None:
        """Append *snapshot*, enforcing the ordering and size invariants."""
        if self.snapshots:
            last = self.snapshots[-1]
            if snapshot.time <= last.time:
                raise TrajectoryError(
                    f"snapshot time {snapshot.time} does not follow {last.time}"
                )
            if snapshot.moments.n_nodes != last.moments.n_nodes:
                raise TrajectoryError("node count changed within a trajectory")
        self.snapshots.append(snapshot)

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self) -> Iterator[Snapshot]:
        return iter(self.snapshots)

    @property
    def times(self) -> list[float]:
        """Snapshot times in order."""
        return [s.time for s in self.snapshots]

    def nearest(self, t: float) -> Snapshot:
        """Snapshot whose time is closest to *t* (earliest on ties)."""
        if not self.snapshots:
            raise TrajectoryError("trajectory is empty")
        return min(self.snapshots, key=lambda s: (abs(s.time - t), s.time))

    def final(self) -> Snapshot:
        """Last snapshot."""
        if not self.snapshots:
            raise TrajectoryError("trajectory is empty")
        return self.snapshots[-1]


def velocity_histogram(
    ensemble: ParticleEnsemble, axis: int = 0, bins: int = 41, half_width: float | None = None
) -> VelocityHistogram:
    """Histogram of velocity coordinate *axis* over a symmetric range."""
    v = ensemble.velocities[:, axis]
    if half_width is None:
        spread = float(np.std(v)) if v.size else 1.0
        half_width = 5.0 * max(spread, math.ulp(1.0))
    counts, edges = np.histogram(v, bins=bins, range=(-half_width, half_width))
    return VelocityHistogram(axis=axis, edges=edges, counts=counts.astype(np.int64))
