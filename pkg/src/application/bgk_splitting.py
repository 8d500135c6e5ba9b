"""
src/application/bgk_splitting.py

Splitting dynamics whose formal limit is the BGK equation.

One period is a free-flight interval of length τ followed by a
thermalization interval with frozen positions.  During thermalization each
cell fires independently with probability τN_Δ/n; a fired cell has its
velocities replaced by a draw that preserves the cell's momentum and energy,
either

* exactly (``microcanonical_limit``: a fresh uniform sample on the cell's
  constraint sphere), or
* approximately (``kac``: the homogeneous in-cell Kac process run for the
  accelerated duration τ/ε).

Snapshot times carry the kinetic clock: after period k the time is k·τ.
"""
from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from src.application.kac_process import expected_attempts, kac_collisions, observe
from src.application.parallel import map_ordered
from src.domain.enums import ThermalizationKind
from src.domain.ensemble import ParticleEnsemble
from src.domain.geometry import advect, occupancy
from src.domain.hydro import MomentTrajectory, Snapshot
from src.domain.microcanonical import resample_like
from src.domain.splitting import SplittingConfig, SplittingConfigError
from src.infrastructure.streams import SubstreamFactory

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PeriodDiagnostics:
    """Counters for one thermalization phase."""

    period: int
    fired_cells: int
    nonempty_cells: int
    collisions: int

    @property
    def fired_fraction(self) -> float:
        """Fraction of nonempty cells that fired."""
        return self.fired_cells / self.nonempty_cells if self.nonempty_cells else 0.0


@dataclass(frozen=True)
class _CellResult:
    velocities: NDArray[np.float64]
    fired: bool
    collisions: int


def free_phase(ensemble: ParticleEnsemble, tau: float) -> ParticleEnsemble:
    """Advect every particle by τ; velocities untouched, clock advanced by τ."""
    if tau == 0.0:
        return ensemble
    return ensemble.evolve(
        positions=advect(ensemble.positions, ensemble.velocities, tau),
        time=ensemble.time + tau,
    )


def thermalize_phase(
    ensemble: ParticleEnsemble,
    config: SplittingConfig,
    streams: SubstreamFactory,
    *,
    period: int = 0,
    workers: int = 1,
) -> tuple[ParticleEnsemble, PeriodDiagnostics]:
    """Fire each cell with probability τN_Δ/n and thermalize the fired ones.

    Cell ``c`` of period ``period`` draws its Bernoulli trial and its
    thermalization from ``streams.stream(period, c)``.

    Raises:
        SplittingConfigError: If some cell has τN_Δ/n > 1.
    """
    grid = config.grid
    n = ensemble.n
    occ = occupancy(ensemble.positions, grid)
    config.check_occupancy(occ.counts, n)
    velocities = ensemble.velocities
    nonempty = [c for c in range(grid.n_cells) if occ.counts[c] > 0]

    def work(cell: int) -> _CellResult:
        members = occ.members(cell)
        block = velocities[members]
        rng = streams.stream(period, cell)
        fired = bool(rng.random() < config.tau * members.size / n)
        if not fired or members.size < 2:
            return _CellResult(block, fired, 0)
        if config.thermalization is ThermalizationKind.MICROCANONICAL_LIMIT:
            return _CellResult(resample_like(block, rng), True, 0)
        mean = expected_attempts(members.size, n, grid.cell_volume, config.kac_duration)
        outcome = kac_collisions(block, mean, rng)
        return _CellResult(outcome.velocities, True, outcome.attempts)

    results = map_ordered(work, nonempty, workers)
    new_v = np.array(velocities, copy=True)
    fired = 0
    collisions = 0
    for cell, result in zip(nonempty, results, strict=True):
        if result.fired:
            fired += 1
            new_v[occ.members(cell)] = result.velocities
            collisions += result.collisions

    diagnostics = PeriodDiagnostics(
        period=period, fired_cells=fired, nonempty_cells=len(nonempty), collisions=collisions
    )
    return ensemble.evolve(velocities=new_v, collisions=collisions), diagnostics


def expected_fired_fraction(ensemble: ParticleEnsemble, config: SplittingConfig) -> float:
    """Mean firing probability over the nonempty cells, Σ τN_Δ/n ÷ #nonempty."""
    counts = occupancy(ensemble.positions, config.grid).counts
    nonempty = counts[counts > 0]
    if nonempty.size == 0:
        return 0.0
    return float(np.sum(config.tau * nonempty / ensemble.n)) / nonempty.size


@dataclass
class SplittingRun:
    """Outcome of :func:`run_splitting`."""

    trajectory: MomentTrajectory
    final: ParticleEnsemble
    diagnostics: list[PeriodDiagnostics] = field(default_factory=list)


def run_splitting(
    ensemble: ParticleEnsemble,
    config: SplittingConfig,
    n_periods: int,
    observer: Callable[[Snapshot], None] | None = None,
    *,
    streams: SubstreamFactory,
    workers: int = 1,
    histogram_bins: int = 0,
    histogram_axis: int = 0,
) -> SplittingRun:
    """Apply ``n_periods`` repetitions of free flight then thermalization.

    The observer sees the initial state and the state after every period.
    """
    if n_periods < 0:
        raise SplittingConfigError(f"number of periods must be non-negative, got {n_periods}")
    result = SplittingRun(trajectory=MomentTrajectory(), final=ensemble)

    def record(state: ParticleEnsemble) -> None:
        snapshot = observe(state, config.grid, histogram_bins, histogram_axis)
        result.trajectory.append(snapshot)
        if observer is not None:
            observer(snapshot)

    state = ensemble
    record(state)
    for period in range(1, n_periods + 1):
        state = free_phase(state, config.tau)
        state, diagnostics = thermalize_phase(
            state, config, streams, period=period, workers=workers
        )
        # Kinetic clock: k·τ rather than an accumulated sum.
        state = state.evolve(time=ensemble.time + period * config.tau)
        result.diagnostics.append(diagnostics)
        record(state)
    result.final = state
    logger.debug(
        "splitting run finished: %d periods, %d collisions", n_periods, state.collision_count
    )
    return result
