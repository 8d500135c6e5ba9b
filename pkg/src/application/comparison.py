"""
src/application/comparison.py

Statistics linking particle runs to solver runs.

Particle trajectories carry per-cell moments; solver trajectories carry
per-node moments and are averaged onto the particle cells before any
distance is taken.  Densities follow the probability convention: both sides
integrate to one over the torus.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from src.domain.enums import SnapshotKind, SpatialMode
from src.domain.ensemble import ParticleEnsemble
from src.domain.geometry import CellGrid, occupancy
from src.domain.hydro import HydroMoments, MomentTrajectory, Snapshot, cell_moments
from src.domain.microcanonical import EnsembleParams, coordinate_marginal_cdf
from src.domain.phase_space import DistributionField, PhaseSpaceGrid

logger = logging.getLogger(__name__)

#: Fewest in-cell particles accepted by :func:`marginal_ks`.
MIN_KS_SAMPLES = 10


class InsufficientSampleError(Exception):
    """Raised when a cell holds too few particles for a KS test."""


class IncompatibleGridError(Exception):
    """Raised when two trajectories or grids cannot be compared cell by cell."""


class EmptySweepError(Exception):
    """Raised when a convergence study is given no sweep points."""


# ---------------------------------------------------------------------------
# Moments on particle cells
# ---------------------------------------------------------------------------


def empirical_moments(ensemble: ParticleEnsemble, grid: CellGrid) -> HydroMoments:
    """Per-cell ϱ = N_Δ/(n|Δ|), P_Δ and T_Δ; empty cells flagged."""
    return cell_moments(ensemble, grid)


def _node_blocks(grid: PhaseSpaceGrid, cell_grid: CellGrid) -> NDArray[np.int64]:
    """Particle-cell id of every solver node (slab nodes map to a cell layer)."""
    if grid.m_x % cell_grid.m:
        raise IncompatibleGridError(
            f"solver nodes per side ({grid.m_x}) are not a multiple of cells per side "
            f"({cell_grid.m})"
        )
    block = grid.m_x // cell_grid.m
    if grid.spatial is SpatialMode.SLAB:
        return np.arange(grid.m_x) // block
    i, j, k = np.meshgrid(*(np.arange(grid.m_x) // block,) * 3, indexing="ij")
    return ((i * cell_grid.m + j) * cell_grid.m + k).ravel()


def solver_cell_moments(
    mom: HydroMoments, grid: PhaseSpaceGrid, cell_grid: CellGrid
) -> HydroMoments:
    """Average solver node moments onto particle cells.

    Conserved sums (ϱ, ϱu, ϱ(|u|²+3T)) of the midpoint nodes inside a cell are
    averaged, then converted back to (ϱ, u, T).  A slab node layer is copied to
    every cell of the matching layer.
    """
    ids = _node_blocks(grid, cell_grid)
    mass, momentum, second = mom.conserved()
    if grid.spatial is SpatialMode.SLAB:
        layers = cell_grid.m
        per_layer = np.bincount(ids, minlength=layers).astype(np.float64)
        m_layer = np.bincount(ids, weights=mass, minlength=layers) / per_layer
        p_layer = np.column_stack(
            [np.bincount(ids, weights=momentum[:, a], minlength=layers) for a in range(3)]
        ) / per_layer[:, None]
        s_layer = np.bincount(ids, weights=second, minlength=layers) / per_layer
        centers = cell_grid.centers()
        layer = np.minimum((centers[:, grid.axis] * layers).astype(np.int64), layers - 1)
        return HydroMoments.from_sums(m_layer[layer], p_layer[layer], s_layer[layer])
    n_cells = cell_grid.n_cells
    per_cell = np.bincount(ids, minlength=n_cells).astype(np.float64)
    m_cell = np.bincount(ids, weights=mass, minlength=n_cells) / per_cell
    p_cell = np.column_stack(
        [np.bincount(ids, weights=momentum[:, a], minlength=n_cells) for a in range(3)]
    ) / per_cell[:, None]
    s_cell = np.bincount(ids, weights=second, minlength=n_cells) / per_cell
    return HydroMoments.from_sums(m_cell, p_cell, s_cell)


def coarsen_trajectory(
    trajectory: MomentTrajectory, grid: PhaseSpaceGrid, cell_grid: CellGrid
) -> MomentTrajectory:
    """Map a node trajectory onto particle cells snapshot by snapshot."""
    out = MomentTrajectory()
    for snap in trajectory:
        out.append(
            Snapshot(
                time=snap.time,
                moments=solver_cell_moments(snap.moments, grid, cell_grid),
                kind=SnapshotKind.CELL,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentDistance:
    """Cell-averaged L¹ distances at one time; ``excluded`` counts vacuum cells."""

    t: float
    d_rho: float
    d_u: float
    d_T: float
    excluded: int


def moment_distance(a: MomentTrajectory, b: MomentTrajectory, t: float) -> MomentDistance:
    """Distances between the snapshots of *a* and *b* nearest to *t*.

    The velocity distance is the cell average of the Euclidean norm |u_a − u_b|.
    Cells that are vacuum in either snapshot are left out and counted.

    Raises:
        IncompatibleGridError: If the snapshots have different cell counts.
    """
    sa, sb = a.nearest(t), b.nearest(t)
    ma, mb = sa.moments, sb.moments
    if ma.n_nodes != mb.n_nodes:
        raise IncompatibleGridError(
            f"cannot compare {ma.n_nodes} cells with {mb.n_nodes} cells"
        )
    keep = ~(ma.vacuum | mb.vacuum)
    excluded = int(np.sum(~keep))
    if not np.any(keep):
        return MomentDistance(t, math.nan, math.nan, math.nan, excluded)
    d_rho = float(np.mean(np.abs(ma.rho[keep] - mb.rho[keep])))
    d_u = float(np.mean(np.linalg.norm(ma.u[keep] - mb.u[keep], axis=1)))
    d_T = float(np.mean(np.abs(ma.T[keep] - mb.T[keep])))
    return MomentDistance(t, d_rho, d_u, d_T, excluded)


# ---------------------------------------------------------------------------
# Velocity marginals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaxwellianReference:
    """Gaussian marginal N(u_axis, T)."""

    u: tuple[float, float, float]
    T: float

    def cdf(self, axis: int) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
        dist = stats.norm(loc=self.u[axis], scale=math.sqrt(self.T))
        return lambda s: np.asarray(dist.cdf(s), dtype=np.float64)


@dataclass(frozen=True)
class MicrocanonicalReference:
    """Single-coordinate marginal of the microcanonical measure."""

    params: EnsembleParams

    def cdf(self, axis: int) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
        return lambda s: coordinate_marginal_cdf(s, self.params, axis)


@dataclass(frozen=True, eq=False)
class SolverSliceReference:
    """Marginal of the discrete solver distribution at one spatial node.

    The lattice mass of each velocity tick is spread uniformly over its
    Δv-wide bin, giving a piecewise-linear CDF.
    """

    distribution: DistributionField
    node: int

    def cdf(self, axis: int) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
        grid = self.distribution.grid
        m_v = grid.m_v
        cube = self.distribution.values[self.node].reshape(m_v, m_v, m_v)
        other = tuple(a for a in range(3) if a != axis)
        weights = np.clip(cube.sum(axis=other), 0.0, None)
        total = float(weights.sum())
        if not total > 0.0:
            raise InsufficientSampleError(f"solver node {self.node} carries no mass")
        edges = np.concatenate(
            ([-grid.v_max - grid.dv / 2.0], grid.velocity_ticks() + grid.dv / 2.0)
        )
        levels = np.concatenate(([0.0], np.cumsum(weights) / total))
        return lambda s: np.interp(s, edges, levels)


MarginalReference = MaxwellianReference | MicrocanonicalReference | SolverSliceReference


@dataclass(frozen=True)
class KSResult:
    """One-dimensional Kolmogorov–Smirnov outcome for one cell."""

    cell: int
    statistic: float
    pvalue: float
    n_samples: int


def ks_critical_value(n_samples: int, level: float = 0.01) -> float:
    """Exact two-sided KS critical value for *n_samples* at significance *level*."""
    return float(stats.kstwo.ppf(1.0 - level, n_samples))


def marginal_ks(
    ensemble: ParticleEnsemble,
    cell: int,
    reference: MarginalReference,
    *,
    grid: CellGrid,
    axis: int = 0,
) -> KSResult:
    """KS statistic of velocity coordinate *axis* over the particles of *cell*.

    Raises:
        InsufficientSampleError: If the cell holds fewer than 10 particles.
    """
    members = occupancy(ensemble.positions, grid).members(cell)
    if members.size < MIN_KS_SAMPLES:
        raise InsufficientSampleError(
            f"cell {cell} holds {members.size} particles, need at least {MIN_KS_SAMPLES}"
        )
    samples = ensemble.velocities[members, axis]
    result = stats.kstest(samples, reference.cdf(axis))
    return KSResult(
        cell=cell,
        statistic=float(result.statistic),
        pvalue=float(result.pvalue),
        n_samples=int(members.size),
    )


def pair_correlation(
    ensemble: ParticleEnsemble, grid: CellGrid, axis: int = 0
) -> NDArray[np.float64]:
    """Per-cell two-particle velocity correlation, a chaos diagnostic.

    For cell Δ with N ≥ 2 particles returns
    Σ_{i≠j} (v_i − μ)(v_j − μ) / (N(N−1)σ²) over coordinate *axis*, with μ
    and σ² the global mean and variance; ``NaN`` for cells with N < 2.
    """
    v = ensemble.velocities[:, axis]
    mu = float(v.mean())
    var = float(v.var())
    occ = occupancy(ensemble.positions, grid)
    out = np.full(grid.n_cells, np.nan)
    if var == 0.0:
        return out
    w = v - mu
    for cell in np.flatnonzero(occ.counts >= 2).tolist():
        block = w[occ.members(cell)]
        n = block.size
        cross = float(block.sum()) ** 2 - float(np.dot(block, block))
        out[cell] = cross / (n * (n - 1) * var)
    return out


# ---------------------------------------------------------------------------
# Reports and sweeps
# ---------------------------------------------------------------------------


@dataclass
class ComparisonReport:
    """Distances per snapshot and KS statistics per probed cell, plus run metadata."""

    metadata: dict[str, Any]
    distances: list[MomentDistance] = field(default_factory=list)
    ks: list[KSResult] = field(default_factory=list)
    correlation: list[float] = field(default_factory=list)

    def to_record(self) -> dict[str, Any]:
        """JSON-ready dict (NaN is mapped to ``None``)."""

        def clean(value: Any) -> Any:
            if isinstance(value, float) and not math.isfinite(value):
                return None
            return value

        return {
            "kind": "comparison",
            "metadata": {k: clean(v) for k, v in self.metadata.items()},
            "distances": [{k: clean(v) for k, v in asdict(d).items()} for d in self.distances],
            "ks": [{k: clean(v) for k, v in asdict(r).items()} for r in self.ks],
            "pair_correlation": [clean(c) for c in self.correlation],
        }


def compare_trajectories(
    particles: MomentTrajectory, reference: MomentTrajectory
) -> list[MomentDistance]:
    """Distances at every particle snapshot time."""
    return [moment_distance(particles, reference, t) for t in particles.times]


@dataclass(frozen=True)
class SweepPoint:
    """One (n, ε, τ, m) combination of a convergence study."""

    n: int
    tau: float
    m: int
    epsilon: float | None = None


@dataclass(frozen=True)
class TrendFlag:
    """Ratio of a distance between two points differing along one sweep axis."""

    axis: str
    metric: str
    before: SweepPoint
    after: SweepPoint
    ratio: float
    monotone: bool


CSV_HEADER = ("n", "epsilon", "tau", "m", "t", "d_rho", "d_u", "d_T", "excluded")


@dataclass
class ConvergenceTable:
    """Rows of distances per sweep point and snapshot, with trend flags."""

    results: list[tuple[SweepPoint, list[MomentDistance]]] = field(default_factory=list)
    trends: list[TrendFlag] = field(default_factory=list)

    @property
    def header(self) -> tuple[str, ...]:
        return CSV_HEADER

    def rows(self) -> list[tuple[Any, ...]]:
        """One row per sweep point per snapshot."""
        out: list[tuple[Any, ...]] = []
        for point, distances in self.results:
            for d in distances:
                eps = "" if point.epsilon is None else point.epsilon
                out.append(
                    (point.n, eps, point.tau, point.m, d.t, d.d_rho, d.d_u, d.d_T, d.excluded)
                )
        return out


def _final(distances: list[MomentDistance]) -> MomentDistance | None:
    return distances[-1] if distances else None


def _trend_flags(results: list[tuple[SweepPoint, list[MomentDistance]]]) -> list[TrendFlag]:
    flags: list[TrendFlag] = []
    for before, d_before in results:
        for after, d_after in results:
            first, last = _final(d_before), _final(d_after)
            if first is None or last is None:
                continue
            same_rest = before.epsilon == after.epsilon and before.m == after.m
            if same_rest and before.tau == after.tau and after.n == 2 * before.n:
                axis, metric, old, new = "n", "d_rho", first.d_rho, last.d_rho
                monotone_if = "decrease"
            elif same_rest and before.n == after.n and math.isclose(after.tau, before.tau / 2):
                axis, metric, old, new = "tau", "d_T", first.d_T, last.d_T
                monotone_if = "non-increase"
            else:
                continue
            ratio = new / old if old > 0.0 else math.inf
            monotone = ratio < 1.0 if monotone_if == "decrease" else ratio <= 1.0
            flags.append(TrendFlag(axis, metric, before, after, ratio, monotone))
    return flags


def convergence_study(
    points: Sequence[SweepPoint],
    runner: Callable[[SweepPoint], list[MomentDistance]],
) -> ConvergenceTable:
    """Run every sweep point through *runner* and flag trends along n and τ.

    *runner* simulates one point and returns its distances to the solver
    reference.  Doubling n is flagged monotone when the final d_rho drops;
    halving τ when the final d_T does not grow.

    Raises:
        EmptySweepError: If *points* is empty.
    """
    if not points:
        raise EmptySweepError("convergence study needs at least one sweep point")
    table = ConvergenceTable()
    for point in points:
        logger.info(
            "sweep point n=%d tau=%g m=%d epsilon=%s", point.n, point.tau, point.m, point.epsilon
        )
        table.results.append((point, runner(point)))
    table.trends = _trend_flags(table.results)
    return table
