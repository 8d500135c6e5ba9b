"""
test_acceptance.py — Acceptance-scale runs of the particle systems, the
microcanonical sampler and the BGK solver.

These take minutes; they are deselected by default and run with ``-m slow``.
"""
from __future__ import annotations

import math
from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from src.application.bgk_solver import (
    SolverOptions,
    discrete_maxwellian,
    moments,
    solve,
)
from src.application.initial_conditions import discretize_initial
from src.application.kac_process import CellMode, apply_generator, run, run_exact, step_timestep
from src.application.orchestrator import Orchestrator
from src.domain.collision import collide, sample_impact
from src.domain.enums import InitialConditionKind, Interpolation, SpatialMode
from src.domain.ensemble import ParticleEnsemble
from src.domain.geometry import CellGrid
from src.domain.initial_condition import InitialCondition
from src.domain.microcanonical import (
    EnsembleParams,
    sphere_ratio_asymptotic_check,
    sup_distance_to_maxwellian,
)
from src.domain.phase_space import DistributionField, PhaseSpaceGrid
from src.infrastructure.config import RunConfig
from src.infrastructure.repository import OutputRepository
from src.infrastructure.streams import SubstreamFactory, seed_substream
from src.Tests.fixtures.sample_ensembles import make_config_dict

pytestmark = [pytest.mark.integration, pytest.mark.slow]


def _orchestrate(out_dir: Path, method: str, **overrides: Any) -> Any:
    config = RunConfig.from_dict(make_config_dict(**overrides))
    with OutputRepository(out_dir) as repository:
        return getattr(Orchestrator(config, repository, workers=4), method)()


def _anisotropic(n: int, seed: int) -> ParticleEnsemble:
    """Uniform positions, velocity variances (2, 1/2, 1/2)."""
    rng = np.random.default_rng(seed)
    scale = np.sqrt(np.array([2.0, 0.5, 0.5]))
    return ParticleEnsemble(
        positions=rng.random((n, 3)), velocities=rng.standard_normal((n, 3)) * scale
    )


def _mean_and_error(samples: list[float]) -> tuple[float, float]:
    arr = np.asarray(samples)
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


# ---------------------------------------------------------------------------
# Particle dynamics
# ---------------------------------------------------------------------------


class TestConservationAtScale:
    def test_million_collision_kac_cell_run(self, tmp_path: Path) -> None:
        """Momentum and energy drift stay below 1e-9 over 10⁶ collisions."""
        summary = _orchestrate(
            tmp_path,
            "simulate",
            mode="kac-cell",
            particles={"n": 100_000, "m": 8, "dt": 0.01, "t_end": 25.0},
            initial={"kind": "global-maxwellian"},
            output={"snapshot_interval": 25.0},
        )
        assert summary["collisions"] >= 1_000_000
        assert summary["conservation"]["momentum_drift"] <= 1e-9
        assert summary["conservation"]["energy_drift"] <= 1e-9

    def test_collision_involution_on_many_draws(self) -> None:
        """Applying one ω twice restores 10⁵ random pairs to 1e-12."""
        rng = np.random.default_rng(17)
        v_i = rng.standard_normal((100_000, 3))
        v_j = rng.standard_normal((100_000, 3))
        omega = sample_impact(rng, size=100_000)
        once_i, once_j = collide(v_i, v_j, omega)
        twice_i, twice_j = collide(once_i, once_j, omega)
        np.testing.assert_allclose(twice_i, v_i, atol=1e-12)
        np.testing.assert_allclose(twice_j, v_j, atol=1e-12)


class TestGeneratorConsistency:
    @pytest.mark.parametrize(
        "phi",
        [
            lambda x, v: v[:, 0],
            lambda x, v: np.sum(v * v, axis=1),
            lambda x, v: np.sin(2.0 * math.pi * x[:, 0]),
            lambda x, v: v[:, 0] ** 2,
        ],
        ids=["v1", "energy", "sin-x1", "v1-squared"],
    )
    def test_drift_matches_generator(self, phi: Callable[..., Any]) -> None:
        """The short-time expectation drift equals the empirical generator."""
        n, h, replicas = 10_000, 1e-3, 200
        ensemble = _anisotropic(n, seed=23)
        mode = CellMode(CellGrid(4))
        start = float(np.mean(phi(ensemble.positions, ensemble.velocities)))

        def difference_quotient(dt: float, tag: str) -> float:
            after = step_timestep(ensemble, mode, dt, SubstreamFactory(31, tag))
            return (float(np.mean(phi(after.positions, after.velocities))) - start) / dt

        # Richardson extrapolation removes the O(h) bias of the forward difference.
        drifts = [
            2.0 * difference_quotient(h / 2.0, f"replica-{r}/half")
            - difference_quotient(h, f"replica-{r}/full")
            for r in range(replicas)
        ]
        drift, drift_error = _mean_and_error(drifts)

        values = [
            apply_generator(phi, ensemble, mode, seed_substream(31, "generator", k), n_omega=2)
            for k in range(5)
        ]
        generator, generator_error = _mean_and_error(values)
        tolerance = 3.0 * math.hypot(drift_error, generator_error) + 1e-5
        assert abs(drift - generator) <= tolerance


class TestStepperOracle:
    def test_timestep_matches_exact_events(self) -> None:
        """Δt = 1e-3 stepping and exact event simulation agree in law at n = 50."""
        n, replicas, t_end = 50, 200, 1.0
        grid = CellGrid(2)
        mode = CellMode(grid)
        ensemble = _anisotropic(n, seed=5)

        def tracked(state: ParticleEnsemble) -> np.ndarray:
            v, x = state.velocities, state.positions
            left = x[:, 0] < 0.5
            return np.array([np.mean(v[:, 0] ** 2), np.mean(v[:, 1] ** 2), np.mean(left)])

        stepped, exact = [], []
        for r in range(replicas):
            _, final = run(ensemble, mode, t_end, 1e-3, streams=SubstreamFactory(r, "stepped"))
            stepped.append(tracked(final))
            _, final = run_exact(
                ensemble, mode, [t_end], seed_substream(r, "exact"), grid=grid
            )
            exact.append(tracked(final))
        a, b = np.asarray(stepped), np.asarray(exact)
        error = np.sqrt(a.var(axis=0, ddof=1) / replicas + b.var(axis=0, ddof=1) / replicas)
        assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) <= 3.0 * error + 1e-12)


class TestSplittingAgreement:
    def test_density_wave_against_solver(self, tmp_path: Path) -> None:
        """At n = 2·10⁵ the cell moments track the solver within tolerance."""
        report = _orchestrate(
            tmp_path,
            "compare",
            mode="compare",
            seed=11,
            particles={"n": 200_000, "m": 8, "t_end": 0.5},
            splitting={"tau": 0.02},
            solver={"m_x": 64, "m_v": 33, "dt": 0.01},
            output={"snapshot_interval": 0.1},
        )
        final = report.distances[-1]
        assert final.t == pytest.approx(0.5)
        assert final.d_rho <= 0.05
        assert final.d_T <= 0.08

    def test_distances_shrink_when_n_doubles(self, tmp_path: Path) -> None:
        table = _orchestrate(
            tmp_path,
            "sweep",
            mode="sweep",
            seed=11,
            particles={"n": 50_000, "m": 8, "t_end": 0.5},
            splitting={"tau": 0.02},
            solver={"m_x": 64, "m_v": 33, "dt": 0.01},
            output={"snapshot_interval": 0.1},
            sweep={"n_values": [50_000, 100_000], "tau_values": [0.02], "m_values": [8]},
        )
        means = [
            np.mean([d.d_rho + d.d_T for d in distances if d.t > 0.0])
            for _, distances in table.results
        ]
        assert means[1] < means[0]


# ---------------------------------------------------------------------------
# Microcanonical ensemble
# ---------------------------------------------------------------------------


class TestMicrocanonicalAtScale:
    def test_constraints_exact(self, tmp_path: Path) -> None:
        report = _orchestrate(
            tmp_path,
            "microcanonical_test",
            mode="microcanonical-test",
            microcanonical={"n_values": [2, 3, 10, 100], "samples": 2000, "T": 1.0},
        )
        for entry in report["entries"]:
            assert entry["max_momentum_error"] <= 1e-10
            assert entry["max_energy_error"] <= 1e-10

    def test_marginal_ks_passes(self, tmp_path: Path) -> None:
        """10⁵ samples per n pass the KS test against the exact marginal at 1%."""
        report = _orchestrate(
            tmp_path,
            "microcanonical_test",
            mode="microcanonical-test",
            microcanonical={"n_values": [5, 10, 50], "samples": 100_000, "T": 1.0},
        )
        assert all(entry["ks_pvalue"] > 0.01 for entry in report["entries"])

    def test_equivalence_of_ensembles_rate(self) -> None:
        """The sup distance to the Maxwellian decays like 1/n."""
        d50 = sup_distance_to_maxwellian(EnsembleParams.from_temperature(50, 1.0))
        d100 = sup_distance_to_maxwellian(EnsembleParams.from_temperature(100, 1.0))
        assert 0.35 <= d100 / d50 <= 0.65

    def test_sphere_ratio(self) -> None:
        exact, asymptotic = sphere_ratio_asymptotic_check(100)
        assert abs(exact / asymptotic - 1.0) <= 0.02
        exact3, _ = sphere_ratio_asymptotic_check(3)
        assert exact3 == pytest.approx(4.0 / math.pi**2, abs=1e-12)


# ---------------------------------------------------------------------------
# Reference solver
# ---------------------------------------------------------------------------


class TestSolverAtScale:
    def test_global_maxwellian_stationary(self) -> None:
        """100 Strang steps leave a global Maxwellian unchanged to 1e-10."""
        grid = PhaseSpaceGrid(spatial=SpatialMode.SLAB, m_x=16, m_v=17, v_max=6.0)
        f0 = discretize_initial(InitialCondition(), grid)
        result = solve(f0, 1.0, 0.01)
        np.testing.assert_allclose(result.final.values, f0.values, rtol=0.0, atol=1e-10)

    def test_homogeneous_relaxation_closed_form(self) -> None:
        """A homogeneous field relaxes as M + (f₀ − M)e^{−t}."""
        grid = PhaseSpaceGrid(spatial=SpatialMode.SLAB, m_x=4, m_v=25, v_max=8.0)
        mixture = 0.5 * (
            discrete_maxwellian(1.0, (0.5, 0.0, 0.0), 1.0, grid)
            + discrete_maxwellian(1.0, (-0.5, 0.0, 0.0), 1.0, grid)
        )
        f0 = DistributionField(grid, np.tile(mixture, (grid.n_space, 1)))
        # 3T = 3 + |u|² for the two halves
        target = discrete_maxwellian(1.0, (0.0, 0.0, 0.0), 13.0 / 12.0, grid)
        result = solve(f0, 1.0, 0.1)
        expected = target + (f0.values - target) * math.exp(-1.0)
        np.testing.assert_allclose(result.final.values, expected, rtol=0.0, atol=1e-8)

    def test_strang_order(self) -> None:
        """Halving Δt on a smooth slab problem cuts the error by ≥ 2^1.8."""
        grid = PhaseSpaceGrid(spatial=SpatialMode.SLAB, m_x=32, m_v=11, v_max=6.0)
        ic = InitialCondition(kind=InitialConditionKind.DENSITY_WAVE, amplitude=0.3)
        f0 = discretize_initial(ic, grid)
        options = SolverOptions(interpolation=Interpolation.SPECTRAL)
        t_end = 0.4

        def density(dt: float) -> np.ndarray:
            return moments(solve(f0, t_end, dt, options=options).final).rho

        reference = density(0.00625)
        errors = [float(np.max(np.abs(density(dt) - reference))) for dt in (0.1, 0.05, 0.025)]
        orders = [math.log2(errors[k] / errors[k + 1]) for k in range(2)]
        assert min(orders) >= 1.8


class TestEquilibriumPersistence:
    def test_equilibrium_splitting_run_stays_flat(self, tmp_path: Path) -> None:
        """A uniform Maxwellian stays uniform under splitting dynamics."""
        report = _orchestrate(
            tmp_path,
            "compare",
            mode="compare",
            particles={"n": 100_000, "m": 4, "t_end": 0.2},
            initial={"kind": "global-maxwellian"},
            solver={"m_x": 16, "m_v": 17, "dt": 0.02},
            output={"snapshot_interval": 0.1},
        )
        assert max(d.d_rho for d in report.distances) <= 0.05

