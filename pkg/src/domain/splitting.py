"""
src/domain/splitting.py

Parameters of the free-flight / thermalization splitting dynamics and the
scale-separation rules ε ≪ τ ≪ 1 they must satisfy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from src.domain.enums import ThermalizationKind
from src.domain.geometry import CellGrid

#: Upper bound on the half-period.
MAX_TAU = 0.1

#: Minimum separation ratio τ/ε in Kac thermalization.
MIN_SCALE_SEPARATION = 10.0


class SplittingConfigError(Exception):
    """Raised when τ, ε or the cell occupancy violate ε ≪ τ ≪ 1 or τN_Δ/n ≤ 1."""


@dataclass(frozen=True)
class SplittingConfig:
    """Parameters of the splitting dynamics.

    Attributes:
        tau: Length of the free-flight interval.
        grid: Cells inside which thermalization acts.
        thermalization: Exact microcanonical resampling or accelerated Kac.
        epsilon: Kac acceleration parameter; required for ``kac``.
    """

    tau: float
    grid: CellGrid
    thermalization: ThermalizationKind = ThermalizationKind.MICROCANONICAL_LIMIT
    epsilon: float | None = None

    def __post_init__(self) -> None:
        if self.thermalization is ThermalizationKind.KAC:
            if self.epsilon is None or not self.epsilon > 0.0:
                raise SplittingConfigError("kac thermalization needs a positive epsilon")
            if self.epsilon > self.tau / MIN_SCALE_SEPARATION:
                raise SplittingConfigError(
                    f"epsilon={self.epsilon} must not exceed tau/{MIN_SCALE_SEPARATION:g}"
                    f" = {self.tau / MIN_SCALE_SEPARATION}"
                )
        if not 0.0 < self.tau <= MAX_TAU:
            raise SplittingConfigError(f"tau must lie in (0, {MAX_TAU}], got {self.tau}")

    @property
    def kac_duration(self) -> float:
        """Accelerated in-cell Kac time τ/ε."""
        if self.epsilon is None:
            raise SplittingConfigError("kac duration is undefined without epsilon")
        return self.tau / self.epsilon

    def check_occupancy(self, counts: NDArray[np.int64], n: int) -> None:
        """Raise unless every firing probability τN_Δ/n is at most one."""
        worst = int(counts.max()) if counts.size else 0
        if self.tau * worst / n > 1.0:
            raise SplittingConfigError(
                f"firing probability tau*N/n = {self.tau * worst / n:.4f} exceeds 1 "
                f"(N = {worst}, n = {n})"
            )
