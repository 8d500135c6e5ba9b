"""
src/application/orchestrator.py

Orchestrator — owns every simulation of one harness run.

The orchestrator builds the simulators from a :class:`RunConfig`, derives
their random streams from the master seed, routes snapshots through the
:class:`EventBus` to the :class:`OutputRepository` and writes the run's
tables and reports.  Worker pools stay inside the simulators; output files
are written from this thread only.
"""
from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Callable
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
from scipy import stats

from src.application.bgk_solver import SolverOptions, SolverRun, solve
from src.application.bgk_splitting import SplittingRun, run_splitting
from src.application.comparison import (
    ComparisonReport,
    ConvergenceTable,
    InsufficientSampleError,
    KSResult,
    MaxwellianReference,
    MomentDistance,
    SolverSliceReference,
    SweepPoint,
    coarsen_trajectory,
    convergence_study,
    empirical_moments,
    marginal_ks,
    moment_distance,
    pair_correlation,
)
from src.application.event_bus import EventBus
from src.application.events import AttemptsClamped, RunFinished, RunStarted, SnapshotTaken
from src.application.initial_conditions import discretize_initial, sample_initial
from src.application.kac_process import BallMode, CellMode, ProcessMode, ScalingPreset, run
from src.domain.enums import RelaxationRate, RunMode, SpatialMode, ThermalizationKind
from src.domain.ensemble import ParticleEnsemble
from src.domain.geometry import CellGrid
from src.domain.hydro import MomentTrajectory, Snapshot
from src.domain.microcanonical import (
    EnsembleParams,
    coordinate_marginal_cdf,
    domination_constant,
    domination_rate,
    sample_microcanonical,
    sphere_ratio_asymptotic_check,
    sup_distance_to_maxwellian,
)
from src.domain.phase_space import DistributionField, PhaseSpaceGrid
from src.domain.schedule import n_steps_for
from src.domain.splitting import SplittingConfig
from src.infrastructure.config import PARTICLE_MODES, ConfigLoadError, RunConfig
from src.infrastructure.repository import OutputRepository
from src.infrastructure.streams import SubstreamFactory, seed_substream

logger = logging.getLogger(__name__)

# Tolerance when snapping snapshot times onto the configured horizon.
_TIME_SLACK = 1e-9


@dataclass(frozen=True)
class ConservationSummary:
    """Totals before and after a particle run, with relative drifts."""

    initial_momentum: tuple[float, float, float]
    final_momentum: tuple[float, float, float]
    initial_energy: float
    final_energy: float
    momentum_drift: float
    energy_drift: float

    @classmethod
    def between(cls, before: ParticleEnsemble, after: ParticleEnsemble) -> ConservationSummary:
        """Compare the conserved totals of *before* and *after*.

        Momentum drift is scaled by √(2E₀), the natural momentum unit, so that
        a zero initial momentum still yields a relative figure.
        """
        p0, p1 = before.total_momentum(), after.total_momentum()
        e0, e1 = before.total_energy(), after.total_energy()
        p_scale = max(float(np.linalg.norm(p0)), math.sqrt(2.0 * e0), math.ulp(1.0))
        e_scale = max(abs(e0), math.ulp(1.0))
        return cls(
            initial_momentum=_triple(p0),
            final_momentum=_triple(p1),
            initial_energy=e0,
            final_energy=e1,
            momentum_drift=float(np.linalg.norm(p1 - p0)) / p_scale,
            energy_drift=abs(e1 - e0) / e_scale,
        )


def _triple(values: np.ndarray) -> tuple[float, float, float]:
    return float(values[0]), float(values[1]), float(values[2])


def _finite_or_none(value: float) -> float | None:
    return value if math.isfinite(value) else None


class Orchestrator:
    """Runs the simulators a config asks for and writes their outputs.

    Every random stream is addressed by the master seed plus a domain tag,
    so outputs depend on (config, seed) only.
    """

    def __init__(
        self,
        config: RunConfig,
        repository: OutputRepository,
        *,
        workers: int = 1,
        bus: EventBus | None = None,
    ) -> None:
        """Initialise the orchestrator and subscribe the output writers.

        Args:
            config: Validated run configuration.
            repository: Destination of every output file.
            workers: Threads handed to the per-cell simulators.
            bus: Event bus to publish on; a strict bus is created when ``None``
                so that a failing writer aborts the run.
        """
        self._config = config
        self._repository = repository
        self._workers = max(1, workers)
        self._bus = bus if bus is not None else EventBus(strict=True)
        self._clamped = 0
        self._bus.subscribe(SnapshotTaken, self._on_snapshot)
        self._bus.subscribe(AttemptsClamped, self._on_clamp)
        self._bus.subscribe(RunStarted, self._on_started)
        self._bus.subscribe(RunFinished, self._on_finished)

    @property
    def clamped_cells(self) -> int:
        """Number of AttemptsClamped events seen so far."""
        return self._clamped

    # ------------------------------------------------------------------
    # Subscribers
    # ------------------------------------------------------------------

    def _on_snapshot(self, event: SnapshotTaken) -> None:
        self._repository.append_snapshot(event.label, event.snapshot)

    def _on_clamp(self, event: AttemptsClamped) -> None:
        self._clamped += 1

    def _on_started(self, event: RunStarted) -> None:
        logger.info(
            "run %s started (n=%s, seed=%d)", event.label, event.n_particles, event.seed
        )

    def _on_finished(self, event: RunFinished) -> None:
        logger.info(
            "run %s finished at t=%.6g after %d collisions",
            event.label,
            event.final_time,
            event.collisions,
        )

    # ------------------------------------------------------------------
    # Shared helpers
    # ------------------------------------------------------------------

    def _publisher(
        self, label: str, schedule: list[float] | None = None
    ) -> Callable[[Snapshot], None]:
        """Observer publishing SnapshotTaken, limited to *schedule* when given."""
        wanted = None if schedule is None else np.asarray(schedule)

        def publish(snapshot: Snapshot) -> None:
            if wanted is not None and not np.any(np.abs(wanted - snapshot.time) < _TIME_SLACK):
                return
            self._bus.publish(SnapshotTaken(label, snapshot))

        return publish

    def _snapshot_times(self, t_end: float) -> list[float]:
        interval = self._config.output.snapshot_interval
        count = int(math.floor(t_end / interval + _TIME_SLACK))
        return [k * interval for k in range(count + 1)]

    def _sample(self, n: int, tag: str = "initial") -> ParticleEnsemble:
        rng = seed_substream(self._config.seed, tag)
        return sample_initial(self._config.initial, n, rng)

    def _splitting_config(
        self, tau: float, m: int, epsilon: float | None = None
    ) -> SplittingConfig:
        s = self._config.splitting
        if epsilon is not None:
            return SplittingConfig(tau, CellGrid(m), ThermalizationKind.KAC, epsilon)
        return SplittingConfig(tau, CellGrid(m), s.thermalization, s.epsilon)

    def _run_splitting(
        self,
        ensemble: ParticleEnsemble,
        config: SplittingConfig,
        n_periods: int,
        *,
        label: str,
        streams: SubstreamFactory,
        publish: bool = True,
    ) -> SplittingRun:
        out = self._config.output
        schedule = self._snapshot_times(ensemble.time + n_periods * config.tau)
        self._bus.publish(RunStarted(label, ensemble.n, self._config.seed))
        result = run_splitting(
            ensemble,
            config,
            n_periods,
            self._publisher(label, schedule) if publish else None,
            streams=streams,
            workers=self._workers,
            histogram_bins=out.histogram_bins,
            histogram_axis=out.histogram_axis,
        )
        self._bus.publish(
            RunFinished(label, result.final.time, result.final.collision_count)
        )
        return result

    def _solve(
        self,
        grid: PhaseSpaceGrid,
        rate: RelaxationRate,
        cell_grid: CellGrid | None,
        *,
        label: str | None,
    ) -> SolverRun:
        v = self._config.solver
        t_end = self._config.solver_t_end
        f0 = discretize_initial(self._config.initial, grid)
        options = SolverOptions(rate=rate, interpolation=v.interpolation, cell_grid=cell_grid)
        if label is not None:
            self._bus.publish(RunStarted(label, None, self._config.seed))
        result = solve(
            f0,
            t_end,
            v.dt,
            self._publisher(label) if label is not None else None,
            options=options,
            snapshot_times=self._snapshot_times(t_end),
        )
        if label is not None:
            self._bus.publish(RunFinished(label, result.final.time, 0))
        return result

    # ------------------------------------------------------------------
    # simulate
    # ------------------------------------------------------------------

    def simulate(self) -> dict[str, Any]:
        """Run the configured particle system and write ``particles.ndjson``.

        Returns:
            The summary written to ``summary.json``.

        Raises:
            ConfigLoadError: If the config mode is not a particle mode.
        """
        config = self._config
        if config.mode not in PARTICLE_MODES:
            raise ConfigLoadError(
                f"mode: 'simulate' runs {sorted(m.value for m in PARTICLE_MODES)}, "
                f"got {config.mode.value!r}"
            )
        p = config.particles
        initial = self._sample(p.n)
        label = "particles"
        grid = CellGrid(p.m)

        if config.mode is RunMode.SPLITTING:
            result = self._run_splitting(
                initial,
                self._splitting_config(config.splitting.tau, p.m),
                config.n_periods,
                label=label,
                streams=SubstreamFactory(config.seed, "splitting"),
            )
            final = result.final
            extra: dict[str, Any] = {
                "periods": len(result.diagnostics),
                "fired_cells": sum(d.fired_cells for d in result.diagnostics),
            }
        else:
            mode = self._process_mode(p.n, grid)
            self._bus.publish(RunStarted(label, p.n, config.seed))
            _, final = run(
                initial,
                mode,
                p.t_end,
                p.dt,
                self._publisher(label),
                streams=SubstreamFactory(config.seed, "kac"),
                grid=grid,
                snapshot_times=self._snapshot_times(p.t_end),
                histogram_bins=config.output.histogram_bins,
                histogram_axis=config.output.histogram_axis,
                workers=self._workers,
                on_clamp=self._bus.publish,
            )
            self._bus.publish(RunFinished(label, final.time, final.collision_count))
            extra = {"clamped_cells": self._clamped}
            if isinstance(mode, BallMode):
                extra["epsilon"] = mode.epsilon

        summary: dict[str, Any] = {
            "mode": config.mode.value,
            "n": p.n,
            "final_time": final.time,
            "collisions": final.collision_count,
            "conservation": asdict(ConservationSummary.between(initial, final)),
            **extra,
        }
        self._repository.write_json("summary", summary)
        return summary

    def _process_mode(self, n: int, grid: CellGrid) -> ProcessMode:
        p = self._config.particles
        if self._config.mode is RunMode.KAC_CELL:
            return CellMode(grid)
        if p.epsilon is not None:
            return BallMode(p.epsilon)
        assert p.alpha is not None
        _, mode = ScalingPreset.from_alpha(p.alpha, n)
        return mode

    # ------------------------------------------------------------------
    # solve
    # ------------------------------------------------------------------

    def solve(self) -> SolverRun:
        """Run the reference solver; write ``solver.ndjson`` and field dumps."""
        config = self._config
        grid = config.phase_space_grid()
        rate = config.relaxation_rate
        cell_grid = None
        if rate is RelaxationRate.CELL_INTEGRATED:
            cell_grid = CellGrid(config.particles.m)
        result = self._solve(grid, rate, cell_grid, label="solver")
        if config.output.dump_fields:
            initial = discretize_initial(config.initial, grid)
            self._repository.dump_field("field_initial", initial)
            self._repository.dump_field("field_final", result.final)
        return result

    # ------------------------------------------------------------------
    # compare
    # ------------------------------------------------------------------

    def compare(self) -> ComparisonReport:
        """Splitting particles against the solver on the particle cells.

        Writes ``particles.ndjson``, ``solver.ndjson`` and one record in
        ``report.ndjson``.
        """
        config = self._config
        p, s, out = config.particles, config.splitting, config.output
        cell_grid = CellGrid(p.m)
        initial = self._sample(p.n)
        particles = self._run_splitting(
            initial,
            self._splitting_config(s.tau, p.m),
            config.n_periods,
            label="particles",
            streams=SubstreamFactory(config.seed, "splitting"),
        )
        grid = config.phase_space_grid()
        reference = self._solve(grid, config.relaxation_rate, cell_grid, label="solver")
        coarse = coarsen_trajectory(reference.trajectory, grid, cell_grid)
        distances = self._distances(particles.trajectory, coarse)

        final = particles.final
        ks = self._ks_results(final, cell_grid, reference.final)
        correlation = pair_correlation(final, cell_grid, out.histogram_axis)
        report = ComparisonReport(
            metadata={
                "n": p.n,
                "m": p.m,
                "tau": s.tau,
                "thermalization": s.thermalization.value,
                "epsilon": s.epsilon,
                "seed": config.seed,
                "solver_m_x": grid.m_x,
                "solver_m_v": grid.m_v,
                "rate": config.relaxation_rate.value,
                "final_time": final.time,
            },
            distances=distances,
            ks=ks,
            correlation=[float(c) for c in correlation],
        )
        self._repository.append_record("report", report.to_record())
        return report

    def _distances(
        self, particles: MomentTrajectory, coarse: MomentTrajectory
    ) -> list[MomentDistance]:
        horizon = particles.final().time + _TIME_SLACK
        return [moment_distance(particles, coarse, t) for t in coarse.times if t <= horizon]

    def _ks_results(
        self, ensemble: ParticleEnsemble, cell_grid: CellGrid, solved: DistributionField
    ) -> list[KSResult]:
        axis = self._config.output.histogram_axis
        moments = None
        results: list[KSResult] = []
        for cell in self._config.output.ks_cells:
            if not 0 <= cell < cell_grid.n_cells:
                logger.warning(
                    "ks cell %d is outside the %d particle cells", cell, cell_grid.n_cells
                )
                continue
            if moments is None:
                moments = empirical_moments(ensemble, cell_grid)
            try:
                if moments.vacuum[cell] or not moments.T[cell] > 0.0:
                    raise InsufficientSampleError(f"cell {cell} has no temperature")
                gaussian = MaxwellianReference(_triple(moments.u[cell]), float(moments.T[cell]))
                results.append(marginal_ks(ensemble, cell, gaussian, grid=cell_grid, axis=axis))
                node = _node_of_cell(solved.grid, cell_grid, cell)
                sliced = SolverSliceReference(solved, node)
                results.append(marginal_ks(ensemble, cell, sliced, grid=cell_grid, axis=axis))
            except InsufficientSampleError as exc:
                logger.warning("skipping KS test: %s", exc)
        return results

    # ------------------------------------------------------------------
    # sweep
    # ------------------------------------------------------------------

    def sweep(self) -> ConvergenceTable:
        """Convergence study over the product of the sweep axes.

        Writes ``convergence.csv`` and ``trends.json``.
        """
        config = self._config
        w = config.sweep
        epsilons: tuple[float | None, ...] = w.epsilon_values or (None,)
        axes = itertools.product(w.n_values, epsilons, w.tau_values, w.m_values)
        points = [SweepPoint(n=n, tau=tau, m=m, epsilon=eps) for n, eps, tau, m in axes]
        index = {point: i for i, point in enumerate(points)}
        grid = config.phase_space_grid()
        references: dict[int, MomentTrajectory] = {}

        def reference_for(m: int) -> MomentTrajectory:
            if m not in references:
                cell_grid = CellGrid(m)
                solved = self._solve(grid, config.relaxation_rate, cell_grid, label=None)
                references[m] = coarsen_trajectory(solved.trajectory, grid, cell_grid)
            return references[m]

        def runner(point: SweepPoint) -> list[MomentDistance]:
            tag = f"sweep-{index[point]}"
            ensemble = self._sample(point.n, f"{tag}/initial")
            split = self._splitting_config(point.tau, point.m, point.epsilon)
            periods = config.splitting.n_periods
            if periods is None:
                periods = n_steps_for(config.particles.t_end, point.tau)
            result = self._run_splitting(
                ensemble,
                split,
                periods,
                label=tag,
                streams=SubstreamFactory(config.seed, f"{tag}/splitting"),
                publish=False,
            )
            return self._distances(result.trajectory, reference_for(point.m))

        table = convergence_study(points, runner)
        self._repository.write_csv("convergence", table.header, table.rows())
        self._repository.write_json(
            "trends",
            {
                "trends": [
                    {
                        "axis": flag.axis,
                        "metric": flag.metric,
                        "before": asdict(flag.before),
                        "after": asdict(flag.after),
                        "ratio": _finite_or_none(flag.ratio),
                        "monotone": flag.monotone,
                    }
                    for flag in table.trends
                ]
            },
        )
        return table

    # ------------------------------------------------------------------
    # microcanonical-test
    # ------------------------------------------------------------------

    def microcanonical_test(self) -> dict[str, Any]:
        """Sampler and equivalence-of-ensembles report per configured n.

        Writes ``microcanonical_report.json``.
        """
        mc = self._config.microcanonical
        entries = [self._microcanonical_entry(n) for n in mc.n_values]
        large = [n for n in mc.n_values if n >= 3]
        report: dict[str, Any] = {
            "T": mc.T,
            "samples": mc.samples,
            "seed": self._config.seed,
            "entries": entries,
            "domination_rate": domination_rate(mc.T),
            "domination_constant": domination_constant(mc.T, large) if large else None,
        }
        self._repository.write_json("microcanonical_report", report)
        return report

    def _microcanonical_entry(self, n: int) -> dict[str, Any]:
        mc = self._config.microcanonical
        params = EnsembleParams.from_temperature(n, mc.T)
        rng = seed_substream(self._config.seed, "microcanonical", n)
        first = np.empty(mc.samples)
        momentum_error = 0.0
        energy_error = 0.0
        for k in range(mc.samples):
            block = sample_microcanonical(params, rng)
            first[k] = block[0, 0]
            momentum_error = max(
                momentum_error, float(np.max(np.abs(block.mean(axis=0) - params.momentum)))
            )
            energy = float(np.sum(block * block)) / (2.0 * n)
            energy_error = max(energy_error, abs(energy - params.E))
        ks = stats.kstest(first, lambda s: coordinate_marginal_cdf(s, params, 0))
        entry: dict[str, Any] = {
            "n": n,
            "max_momentum_error": momentum_error,
            "max_energy_error": energy_error,
            "ks_statistic": float(ks.statistic),
            "ks_pvalue": float(ks.pvalue),
            "sphere_ratio": None,
            "sphere_ratio_asymptotic": None,
            "sphere_ratio_relative_error": None,
            "sup_distance": None,
        }
        if n >= 3:
            exact, asymptotic = sphere_ratio_asymptotic_check(n)
            entry["sphere_ratio"] = exact
            entry["sphere_ratio_asymptotic"] = asymptotic
            entry["sphere_ratio_relative_error"] = abs(exact / asymptotic - 1.0)
            entry["sup_distance"] = sup_distance_to_maxwellian(params)
        logger.info("microcanonical n=%d: KS D=%.4f p=%.3f", n, entry["ks_statistic"], ks.pvalue)
        return entry

    # ------------------------------------------------------------------
    # Dispatch
    # ------------------------------------------------------------------

    def execute(self) -> Any:
        """Run whatever the config mode names."""
        mode = self._config.mode
        if mode in PARTICLE_MODES:
            return self.simulate()
        if mode is RunMode.BGK_SOLVE:
            return self.solve()
        if mode is RunMode.COMPARE:
            return self.compare()
        if mode is RunMode.SWEEP:
            return self.sweep()
        return self.microcanonical_test()


def _node_of_cell(grid: PhaseSpaceGrid, cell_grid: CellGrid, cell: int) -> int:
    """Solver node containing the centre of particle cell *cell*."""
    center = cell_grid.centers()[cell]
    idx = np.minimum((center * grid.m_x).astype(np.int64), grid.m_x - 1)
    if grid.spatial is SpatialMode.SLAB:
        return int(idx[grid.axis])
    return int((idx[0] * grid.m_x + idx[1]) * grid.m_x + idx[2])
