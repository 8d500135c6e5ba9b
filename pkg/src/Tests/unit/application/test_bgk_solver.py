"""
test_bgk_solver.py — Unit tests for src/application/bgk_solver.py
                     and src/domain/phase_space.py
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from src.application.bgk_solver import (
    SolverOptions,
    cell_integrated_rate,
    discrete_maxwellian,
    gaussian_tail_mass,
    maxwellian_field,
    moments,
    relax_step,
    solve,
    step,
    transport_step,
)
from src.domain.enums import Interpolation, RelaxationRate, SnapshotKind, SpatialMode
from src.domain.geometry import CellGrid
from src.domain.hydro import HydroMoments
from src.domain.phase_space import DistributionField, PhaseSpaceGrid, SolverError, default_v_max
from src.Tests.fixtures.sample_ensembles import make_slab_grid

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _integer_lattice(spatial: SpatialMode = SpatialMode.SLAB, m_x: int = 16) -> PhaseSpaceGrid:
    """Velocity nodes on the integers −6 … 6."""
    return PhaseSpaceGrid(spatial=spatial, m_x=m_x, m_v=13, v_max=6.0)


def _wave_field(grid: PhaseSpaceGrid, amplitude: float = 0.3) -> DistributionField:
    """Density and temperature waves along x with a small drift."""
    x = grid.node_positions()[:, 0]
    n = grid.n_space
    rho = 1.0 + amplitude * np.sin(2.0 * math.pi * x)
    T = 1.0 + 0.5 * amplitude * np.cos(2.0 * math.pi * x)
    u = np.zeros((n, 3))
    u[:, 0] = 0.1 * np.sin(2.0 * math.pi * x)
    mom = HydroMoments(rho=rho, u=u, T=T, vacuum=np.zeros(n, dtype=bool))
    return DistributionField(grid, maxwellian_field(mom, grid))


def _node_totals(f: DistributionField) -> np.ndarray:
    v = f.grid.velocities()
    basis = np.column_stack([np.ones(len(v)), v, np.sum(v * v, axis=1)])
    return f.values @ basis * f.grid.dv3


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


class TestPhaseSpaceGrid:
    """Grid validation and geometry."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"m_x": 0},
            {"m_v": 10},
            {"m_v": 1},
            {"v_max": 0.0},
            {"axis": 3},
            {"max_values": 100},
        ],
        ids=["no-nodes", "even-mv", "tiny-mv", "no-box", "bad-axis", "over-cap"],
    )
    def test_invalid(self, kwargs: dict) -> None:
        params = {"spatial": SpatialMode.SLAB, "m_x": 8, "m_v": 9, "v_max": 6.0} | kwargs
        with pytest.raises(SolverError):
            PhaseSpaceGrid(**params)

    def test_sizes(self) -> None:
        slab = PhaseSpaceGrid(SpatialMode.SLAB, m_x=8, m_v=9, v_max=4.0)
        full = PhaseSpaceGrid(SpatialMode.FULL, m_x=8, m_v=9, v_max=4.0)
        assert slab.n_space == 8
        assert full.n_space == 512
        assert slab.dv == pytest.approx(1.0)
        assert slab.node_volume == pytest.approx(1.0 / 8.0)
        assert full.node_volume == pytest.approx(1.0 / 512.0)

    def test_zero_velocity_is_a_node(self) -> None:
        assert 0.0 in make_slab_grid().velocity_ticks()

    def test_slab_node_positions(self) -> None:
        grid = PhaseSpaceGrid(SpatialMode.SLAB, m_x=4, m_v=3, v_max=1.0, axis=2)
        pos = grid.node_positions()
        np.testing.assert_allclose(pos[:, 2], [0.125, 0.375, 0.625, 0.875])
        np.testing.assert_allclose(pos[:, :2], 0.5)

    def test_velocity_range_check(self) -> None:
        grid = PhaseSpaceGrid(SpatialMode.SLAB, m_x=4, m_v=9, v_max=4.0)
        grid.check_velocity_range(0.5)
        with pytest.raises(SolverError):
            grid.check_velocity_range(1.0)

    def test_default_v_max(self) -> None:
        assert default_v_max(4.0) == pytest.approx(12.0)

    def test_field_shape_checked(self) -> None:
        grid = make_slab_grid(m_x=4, m_v=3)
        with pytest.raises(SolverError):
            DistributionField(grid, np.zeros((4, 26)))


# ---------------------------------------------------------------------------
# Maxwellians
# ---------------------------------------------------------------------------


class TestDiscreteMaxwellian:
    """Moment-matched Maxwellians on the lattice."""

    @pytest.mark.parametrize(
        ("rho", "u", "T"),
        [(1.0, (0.0, 0.0, 0.0), 1.0), (1.3, (0.4, -0.2, 0.1), 0.7), (0.2, (1.0, 0.0, 0.0), 2.0)],
        ids=["rest", "drifting", "hot"],
    )
    def test_moments_match_exactly(
        self, rho: float, u: tuple[float, float, float], T: float
    ) -> None:
        grid = PhaseSpaceGrid(SpatialMode.SLAB, m_x=1, m_v=17, v_max=9.0)
        values = discrete_maxwellian(rho, u, T, grid)
        mom = moments(DistributionField(grid, values[None, :]))
        assert mom.rho[0] == pytest.approx(rho, rel=1e-12)
        np.testing.assert_allclose(mom.u[0], u, atol=1e-12)
        assert mom.T[0] == pytest.approx(T, rel=1e-11)
        assert np.all(values >= 0.0)

    def test_uncorrected_is_close(self) -> None:
        grid = PhaseSpaceGrid(SpatialMode.SLAB, m_x=1, m_v=25, v_max=8.0)
        raw = discrete_maxwellian(1.0, (0.0, 0.0, 0.0), 1.0, grid, correct=False)
        matched = discrete_maxwellian(1.0, (0.0, 0.0, 0.0), 1.0, grid)
        np.testing.assert_allclose(raw, matched, rtol=1e-3, atol=1e-8)

    def test_vacuum_is_zero(self) -> None:
        values = discrete_maxwellian(0.0, (0.0, 0.0, 0.0), 1.0, make_slab_grid())
        assert not values.any()

    def test_cold_rejected(self) -> None:
        with pytest.raises(SolverError):
            discrete_maxwellian(1.0, (0.0, 0.0, 0.0), 0.0, make_slab_grid())

    def test_field_skips_vacuum_nodes(self) -> None:
        grid = make_slab_grid(m_x=2)
        mom = HydroMoments(
            rho=np.array([0.0, 1.0]),
            u=np.array([[np.nan] * 3, [0.0, 0.0, 0.0]]),
            T=np.array([np.nan, 1.0]),
            vacuum=np.array([True, False]),
        )
        out = maxwellian_field(mom, grid)
        assert not out[0].any()
        assert out[1].sum() > 0.0

    def test_tail_mass(self) -> None:
        expected = 1.0 - math.erf(1.0 / math.sqrt(2.0)) ** 3
        assert gaussian_tail_mass(1.0, 1.0) == pytest.approx(expected)
        assert gaussian_tail_mass(1.0, 12.0) < 1e-30


# ---------------------------------------------------------------------------
# Sub-steps
# ---------------------------------------------------------------------------


class TestTransport:
    """Semi-Lagrangian free flight."""

    @pytest.mark.parametrize("interpolation", list(Interpolation), ids=lambda i: i.value)
    def test_whole_node_shift_is_a_roll(
        self, interpolation: Interpolation, rng: np.random.Generator
    ) -> None:
        grid = _integer_lattice()
        f = DistributionField(grid, rng.random((grid.n_space, grid.n_velocity)))
        moved = transport_step(f, 1.0 / 16.0, interpolation)
        shifts = grid.velocities()[:, 0].astype(int)
        for j in (0, grid.n_velocity // 2, grid.n_velocity - 1):
            np.testing.assert_allclose(
                moved.values[:, j], np.roll(f.values[:, j], shifts[j]), atol=1e-12
            )
        assert moved.time == pytest.approx(1.0 / 16.0)

    @pytest.mark.parametrize("interpolation", list(Interpolation), ids=lambda i: i.value)
    def test_conserves_velocity_sums(
        self, interpolation: Interpolation, rng: np.random.Generator
    ) -> None:
        grid = make_slab_grid()
        f = DistributionField(grid, rng.random((grid.n_space, grid.n_velocity)))
        moved = transport_step(f, 0.013, interpolation)
        np.testing.assert_allclose(moved.values.sum(axis=0), f.values.sum(axis=0), rtol=1e-12)

    def test_slab_ignores_transverse_velocity(self, rng: np.random.Generator) -> None:
        grid = PhaseSpaceGrid(SpatialMode.SLAB, m_x=8, m_v=3, v_max=1.0)
        f = DistributionField(grid, rng.random((grid.n_space, grid.n_velocity)))
        moved = transport_step(f, 0.05)
        zero_vx = np.flatnonzero(grid.velocities()[:, 0] == 0.0)
        np.testing.assert_array_equal(moved.values[:, zero_vx], f.values[:, zero_vx])

    def test_full_torus_roll(self, rng: np.random.Generator) -> None:
        grid = _integer_lattice(SpatialMode.FULL, m_x=4)
        f = DistributionField(grid, rng.random((grid.n_space, grid.n_velocity)))
        moved = transport_step(f, 0.25)
        v = grid.velocities().astype(int)
        j = int(np.flatnonzero((v == [1, -2, 3]).all(axis=1))[0])
        cube = f.values[:, j].reshape(4, 4, 4)
        expected = np.roll(cube, shift=(1, -2, 3), axis=(0, 1, 2)).reshape(-1)
        np.testing.assert_allclose(moved.values[:, j], expected, atol=1e-12)

    def test_zero_dt_copies(self, rng: np.random.Generator) -> None:
        grid = make_slab_grid(m_x=4, m_v=3)
        f = DistributionField(grid, rng.random((4, 27)))
        moved = transport_step(f, 0.0)
        assert moved.values is not f.values
        np.testing.assert_array_equal(moved.values, f.values)


class TestRelaxation:
    """Exact BGK relaxation."""

    def test_conserves_node_moments(self) -> None:
        grid = make_slab_grid()
        f = _wave_field(grid)
        perturbed = f.with_values(f.values * (1.0 + 0.2 * np.cos(grid.velocities()[:, 1])))
        relaxed = relax_step(perturbed, 0.3)
        np.testing.assert_allclose(
            _node_totals(relaxed), _node_totals(perturbed), rtol=1e-11, atol=1e-13
        )

    def test_maxwellian_is_fixed_point(self) -> None:
        f = _wave_field(make_slab_grid())
        relaxed = relax_step(f, 0.5)
        np.testing.assert_allclose(relaxed.values, f.values, rtol=1e-10, atol=1e-14)

    def test_long_time_reaches_maxwellian(self) -> None:
        grid = make_slab_grid(m_x=2)
        values = np.zeros((2, grid.n_velocity))
        v = grid.velocities()
        values[:, np.argmin(np.sum((v - [1.2, 0.0, 0.0]) ** 2, axis=1))] = 0.5
        values[:, np.argmin(np.sum((v + [1.2, 0.0, 0.0]) ** 2, axis=1))] = 0.5
        values /= values.sum(axis=1, keepdims=True) * grid.dv3
        f = DistributionField(grid, values)
        relaxed = relax_step(f, 200.0)
        target = maxwellian_field(moments(f), grid)
        np.testing.assert_allclose(relaxed.values, target, atol=1e-12)

    def test_cell_integrated_rate_is_slower(self) -> None:
        grid = make_slab_grid(m_x=8)
        f = _wave_field(grid)
        perturbed = f.with_values(f.values * (1.0 + 0.3 * np.sin(grid.velocities()[:, 0])))
        target = maxwellian_field(moments(perturbed), grid)
        pointwise = relax_step(perturbed, 0.2)
        integrated = relax_step(
            perturbed,
            0.2,
            SolverOptions(rate=RelaxationRate.CELL_INTEGRATED, cell_grid=CellGrid(2)),
        )
        gap_pointwise = np.abs(pointwise.values - target).max()
        gap_integrated = np.abs(integrated.values - target).max()
        assert gap_integrated > gap_pointwise

    def test_vacuum_nodes_untouched(self) -> None:
        grid = make_slab_grid(m_x=2)
        values = np.zeros((2, grid.n_velocity))
        values[1] = discrete_maxwellian(1.0, (0.0, 0.0, 0.0), 1.0, grid)
        f = DistributionField(grid, values)
        relaxed = relax_step(f, 1.0)
        assert not relaxed.values[0].any()


class TestCellIntegratedRate:
    """Per-node rate ϱ_Δ|Δ|."""

    def test_slab(self) -> None:
        grid = make_slab_grid(m_x=4)
        rho = np.array([1.0, 3.0, 0.5, 1.5])
        rate = cell_integrated_rate(rho, grid, CellGrid(2))
        np.testing.assert_allclose(rate, np.array([2.0, 2.0, 1.0, 1.0]) / 8.0)

    def test_full(self) -> None:
        grid = PhaseSpaceGrid(SpatialMode.FULL, m_x=4, m_v=3, v_max=1.0)
        rho = np.arange(64, dtype=float)
        rate = cell_integrated_rate(rho, grid, CellGrid(2))
        cube = rho.reshape(2, 2, 2, 2, 2, 2).mean(axis=(1, 3, 5))
        assert rate[0] == pytest.approx(cube[0, 0, 0] / 8.0)
        assert rate[-1] == pytest.approx(cube[1, 1, 1] / 8.0)
        assert rate.shape == (64,)

    def test_misaligned_cells(self) -> None:
        with pytest.raises(SolverError):
            cell_integrated_rate(np.ones(6), make_slab_grid(m_x=6), CellGrid(4))

    def test_options_need_cells(self) -> None:
        with pytest.raises(SolverError):
            SolverOptions(rate=RelaxationRate.CELL_INTEGRATED)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


class TestSolve:
    """Full solver runs."""

    def test_global_conservation(self) -> None:
        f0 = _wave_field(make_slab_grid())
        run = solve(f0, 0.2, 0.02)
        mass0, p0, e0 = f0.conserved_totals()
        mass1, p1, e1 = run.final.conserved_totals()
        assert mass1 == pytest.approx(mass0, rel=1e-12)
        np.testing.assert_allclose(p1, p0, atol=1e-12)
        assert e1 == pytest.approx(e0, rel=1e-11)
        assert run.final.time == pytest.approx(0.2)

    def test_global_maxwellian_is_stationary(self) -> None:
        grid = make_slab_grid(m_x=8)
        values = np.tile(discrete_maxwellian(1.0, (0.0, 0.0, 0.0), 1.0, grid), (8, 1))
        run = solve(DistributionField(grid, values), 0.1, 0.05)
        np.testing.assert_allclose(run.final.values, values, rtol=1e-10, atol=1e-14)

    def test_snapshots(self) -> None:
        f0 = _wave_field(make_slab_grid())
        seen: list[float] = []
        run = solve(
            f0,
            0.1,
            0.02,
            lambda s: seen.append(s.time),
            snapshot_times=[0.04],
            keep_fields=True,
        )
        assert run.trajectory.times == pytest.approx([0.0, 0.04, 0.1])
        assert seen == run.trajectory.times
        assert set(run.fields) == set(run.trajectory.times)
        assert all(s.kind is SnapshotKind.NODE for s in run.trajectory)

    def test_spectral_cell_integrated_run(self) -> None:
        f0 = _wave_field(make_slab_grid(m_x=8))
        options = SolverOptions(
            rate=RelaxationRate.CELL_INTEGRATED,
            interpolation=Interpolation.SPECTRAL,
            cell_grid=CellGrid(2),
        )
        run = solve(f0, 0.06, 0.02, options=options)
        assert run.final.total_mass() == pytest.approx(f0.total_mass(), rel=1e-12)

    def test_step_keeps_clock(self) -> None:
        f0 = _wave_field(make_slab_grid(m_x=4))
        assert step(f0, 0.1).time == pytest.approx(0.1)

    @pytest.mark.parametrize(("t_end", "dt"), [(-1.0, 0.1), (1.0, 0.0)])
    def test_invalid_times(self, t_end: float, dt: float) -> None:
        with pytest.raises(SolverError):
            solve(_wave_field(make_slab_grid(m_x=4)), t_end, dt)

    def test_narrow_box_rejected(self) -> None:
        grid = PhaseSpaceGrid(SpatialMode.SLAB, m_x=4, m_v=9, v_max=3.0)
        f0 = DistributionField(
            grid, np.tile(discrete_maxwellian(1.0, (0.0, 0.0, 0.0), 1.0, grid), (4, 1))
        )
        with pytest.raises(SolverError):
            solve(f0, 0.1, 0.05)
