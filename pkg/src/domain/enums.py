"""
src/domain/enums.py

All domain enumerations for the kinetic simulation toolkit.
"""
from __future__ import annotations

from enum import Enum


class ProcessModeKind(Enum):
    """Interaction geometry of the Kac particle process."""

    CELL = "cell"
    BALL = "ball"


class ThermalizationKind(Enum):
    """How a fired cell is thermalized during a splitting period."""

    KAC = "kac"
    MICROCANONICAL_LIMIT = "microcanonical_limit"


class RunMode(Enum):
    """Top-level run modes understood by the harness."""

    KAC_CELL = "kac-cell"
    KAC_BALL = "kac-ball"
    SPLITTING = "splitting"
    BGK_SOLVE = "bgk-solve"
    MICROCANONICAL_TEST = "microcanonical-test"
    COMPARE = "compare"
    SWEEP = "sweep"


class InitialConditionKind(Enum):
    """Families of initial one-particle distributions f₀."""

    GLOBAL_MAXWELLIAN = "global-maxwellian"
    TWO_TEMPERATURE_SLAB = "two-temperature-slab"
    DENSITY_WAVE = "density-wave"
    FILE = "file"


class SpatialMode(Enum):
    """Spatial layout of the solver's phase-space grid."""

    SLAB = "slab"
    FULL = "full"


class RelaxationRate(Enum):
    """Relaxation frequency used by the BGK solver's collision step.

    POINTWISE uses the local density ϱ(x).  CELL_INTEGRATED uses the mass
    ∫_Δ ϱ dx of the particle cell containing x, the frequency seen by the
    splitting particle system before the cell size is sent to zero.
    """

    POINTWISE = "pointwise"
    CELL_INTEGRATED = "cell_integrated"


class Interpolation(Enum):
    """Spatial reconstruction used by the semi-Lagrangian transport step."""

    LINEAR = "linear"
    SPECTRAL = "spectral"


class SnapshotKind(Enum):
    """Whether a moment record refers to a particle cell or a solver node."""

    CELL = "cell"
    NODE = "node"
