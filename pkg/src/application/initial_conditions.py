"""
src/application/initial_conditions.py

Particle sampler and solver discretizer for the initial data described by
:class:`~src.domain.initial_condition.InitialCondition`.

Particle initial data are i.i.d. draws from f₀ (chaotic data); the solver
field is the moment-matched discrete Maxwellian at every node.  Both are
normalised to unit total mass.
"""
from __future__ import annotations

import logging

import numpy as np
from numpy.typing import NDArray

from src.application.bgk_solver import maxwellian_field
from src.domain.enums import InitialConditionKind, SpatialMode
from src.domain.ensemble import ParticleEnsemble
from src.domain.hydro import HydroMoments
from src.domain.initial_condition import InitialCondition, InitialConditionError, Profile
from src.domain.phase_space import DistributionField, PhaseSpaceGrid

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Particle sampling
# ---------------------------------------------------------------------------


def _sample_axis(
    ic: InitialCondition, n: int, rng: np.random.Generator, profile: Profile | None
) -> NDArray[np.float64]:
    if ic.kind is InitialConditionKind.DENSITY_WAVE and ic.amplitude != 0.0:
        envelope = 1.0 + abs(ic.amplitude)
        accepted: list[NDArray[np.float64]] = []
        remaining = n
        while remaining > 0:
            batch = max(2 * remaining, 64)
            s = rng.random(batch)
            keep = s[rng.random(batch) * envelope < ic.fields_at(s)[0]]
            accepted.append(keep[:remaining])
            remaining -= min(keep.size, remaining)
        return np.concatenate(accepted)
    if profile is not None:
        weights = profile.rho / profile.rho.sum()
        node = rng.choice(profile.rho.size, size=n, p=weights)
        return (node + rng.random(n)) / profile.rho.size
    return rng.random(n)


def sample_initial(ic: InitialCondition, n: int, rng: np.random.Generator) -> ParticleEnsemble:
    """n i.i.d. draws (x, v) from f₀.

    The profile coordinate is drawn by rejection (density wave) or inversion
    (tabulated profile); the other two coordinates are uniform; velocities
    are Gaussian at the local (u₀, T₀).

    Raises:
        InitialConditionError: If ``n < 1`` or the descriptor is not normalisable.
    """
    if n < 1:
        raise InitialConditionError(f"particle number must be positive, got {n}")
    profile = ic.load_profile()
    positions = rng.random((n, 3))
    s = _sample_axis(ic, n, rng, profile)
    positions[:, ic.axis] = s
    _, u, T = ic.fields_at(s, profile)
    velocities = u + np.sqrt(T)[:, None] * rng.standard_normal((n, 3))
    return ParticleEnsemble(positions=positions, velocities=velocities)


# ---------------------------------------------------------------------------
# Solver discretization
# ---------------------------------------------------------------------------


def discretize_initial(ic: InitialCondition, grid: PhaseSpaceGrid) -> DistributionField:
    """Moment-matched discrete f₀ on *grid*, normalised to unit total mass.

    A slab grid must vary along the descriptor's axis.
    """
    if grid.spatial is SpatialMode.SLAB and grid.axis != ic.axis:
        raise InitialConditionError(
            f"slab grid varies along axis {grid.axis}, profile along axis {ic.axis}"
        )
    profile = ic.load_profile()
    s = grid.node_positions()[:, ic.axis]
    rho, u, T = ic.fields_at(s, profile)
    mass = float(np.mean(rho))
    if not mass > 0.0:
        raise InitialConditionError("initial density is not normalisable (zero mass)")
    rho = rho / mass
    vacuum = rho <= 0.0
    mom = HydroMoments(
        rho=rho,
        u=np.where(vacuum[:, None], np.nan, u),
        T=np.where(vacuum, np.nan, T),
        vacuum=vacuum,
    )
    values = maxwellian_field(mom, grid)
    logger.debug("discretized %s initial condition on %d nodes", ic.kind.value, grid.n_space)
    return DistributionField(grid=grid, values=values, time=0.0)
