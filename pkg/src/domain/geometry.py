"""
src/domain/geometry.py

Periodic arithmetic on the unit 3-torus, free-flight advection, and the
cubic-cell partition shared by every simulator.

Coordinates are stored wrapped into [0, 1) at all times.  Cells are the
half-open boxes [i/m, (i+1)/m) × [j/m, (j+1)/m) × [k/m, (k+1)/m), so
:func:`cell_of` is a pure floor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

#: A point (shape ``(3,)``) or a batch of points (shape ``(n, 3)``) on the torus.
TorusPoint = NDArray[np.float64]

#: Integer triple (i, j, k) with each entry in [0, m).
CellIndex = tuple[int, int, int]


class GeometryError(Exception):
    """Raised for non-finite coordinates or an invalid cell grid."""


@dataclass(frozen=True)
class CellGrid:
    """Partition of the unit torus into ``m³`` equal cubic cells."""

    m: int

    def __post_init__(self) -> None:
        if int(self.m) != self.m or self.m < 1:
            raise GeometryError(f"cells per side must be a positive integer, got {self.m!r}")

    @property
    def cell_volume(self) -> float:
        """Volume |Δ| = m⁻³ of one cell."""
        return 1.0 / float(self.m) ** 3

    @property
    def n_cells(self) -> int:
        """Total number of cells m³."""
        return self.m**3

    @property
    def cell_width(self) -> float:
        """Side length 1/m of one cell."""
        return 1.0 / self.m

    def flat_id(self, index: CellIndex) -> int:
        """Row-major flat id of *index* (i varies slowest)."""
        i, j, k = index
        return (i * self.m + j) * self.m + k

    def index_of(self, flat_id: int) -> CellIndex:
        """Inverse of :meth:`flat_id`."""
        i, rest = divmod(int(flat_id), self.m * self.m)
        j, k = divmod(rest, self.m)
        return (i, j, k)

    def centers(self) -> NDArray[np.float64]:
        """Cell centres in flat-id order, shape ``(m³, 3)``."""
        ticks = (np.arange(self.m) + 0.5) / self.m
        ii, jj, kk = np.meshgrid(ticks, ticks, ticks, indexing="ij")
        return np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)


# ---------------------------------------------------------------------------
# Point operations
# ---------------------------------------------------------------------------


def _as_finite(x: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"{name} contains non-finite values")
    return arr


def wrap(x: ArrayLike) -> TorusPoint:
    """Reduce coordinates modulo 1 into [0, 1).

    Raises:
        GeometryError: If any coordinate is NaN or infinite.
    """
    arr = _as_finite(x, "coordinates")
    wrapped = np.mod(arr, 1.0)
    # np.mod(-1e-18, 1.0) rounds to exactly 1.0.
    return np.where(wrapped >= 1.0, 0.0, wrapped)


def advect(x: ArrayLike, v: ArrayLike, t: float) -> TorusPoint:
    """Free flight: ``wrap(x + v·t)``.  Negative *t* traces characteristics back."""
    if not np.isfinite(t):
        raise GeometryError(f"flight time must be finite, got {t!r}")
    pos = _as_finite(x, "positions")
    vel = _as_finite(v, "velocities")
    return wrap(pos + vel * t)


def cell_of(x: ArrayLike, grid: CellGrid) -> CellIndex:
    """Return the index triple of the cell containing the single point *x*."""
    idx = cell_indices(np.asarray(x, dtype=np.float64).reshape(1, 3), grid)[0]
    return (int(idx[0]), int(idx[1]), int(idx[2]))


def cell_indices(positions: TorusPoint, grid: CellGrid) -> NDArray[np.int64]:
    """Vectorised :func:`cell_of` for an ``(n, 3)`` batch of wrapped points."""
    idx = np.floor(np.asarray(positions, dtype=np.float64) * grid.m).astype(np.int64)
    # Guards points that round up to exactly m after the multiplication.
    return np.clip(idx, 0, grid.m - 1)


def flat_cell_ids(positions: TorusPoint, grid: CellGrid) -> NDArray[np.int64]:
    """Row-major flat cell id of every point in an ``(n, 3)`` batch."""
    idx = cell_indices(positions, grid)
    m = grid.m
    return (idx[:, 0] * m + idx[:, 1]) * m + idx[:, 2]


def min_image_displacement(x: ArrayLike, y: ArrayLike) -> NDArray[np.float64]:
    """Displacement ``x − y`` reduced to the nearest periodic image."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return d - np.rint(d)


def min_image_distance(x: ArrayLike, y: ArrayLike) -> NDArray[np.float64] | float:
    """Euclidean distance under the minimum-image convention (at most √3/2)."""
    dist = np.sqrt(np.sum(min_image_displacement(x, y) ** 2, axis=-1))
    if np.ndim(dist) == 0:
        return float(dist)
    return dist


# ---------------------------------------------------------------------------
# Cell bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CellOccupancy:
    """Particles grouped by cell.

    ``order`` lists particle indices sorted by cell; the members of cell ``c``
    are ``order[starts[c]:starts[c] + counts[c]]``.
    """

    order: NDArray[np.int64]
    starts: NDArray[np.int64]
    counts: NDArray[np.int64]

    def members(self, cell: int) -> NDArray[np.int64]:
        """Indices of the particles in flat cell *cell*, ascending."""
        start = int(self.starts[cell])
        return self.order[start : start + int(self.counts[cell])]


def occupancy(positions: TorusPoint, grid: CellGrid) -> CellOccupancy:
    """Group the particles at *positions* by cell (stable, deterministic)."""
    ids = flat_cell_ids(positions, grid)
    order = np.argsort(ids, kind="stable").astype(np.int64)
    counts = np.bincount(ids, minlength=grid.n_cells).astype(np.int64)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.int64)
    return CellOccupancy(order=order, starts=starts, counts=counts)
