"""
src/domain/initial_condition.py

Descriptor of the initial data f₀(x, v) = ϱ₀(x) M_{u₀(x), T₀(x)}(v).

Profiles vary along one axis of the torus and are uniform in the other two.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from src.domain.enums import InitialConditionKind

_PROFILE_KEYS = ("rho", "ux", "uy", "uz", "T")


class InitialConditionError(Exception):
    """Raised for a descriptor that does not define a nonnegative, normalisable f₀."""


@dataclass(frozen=True)
class Profile:
    """Tabulated ϱ, u, T on equally spaced slab midpoints (for the ``file`` kind)."""

    rho: NDArray[np.float64]
    u: NDArray[np.float64]
    T: NDArray[np.float64]

    @classmethod
    def load(cls, path: Path) -> Profile:
        """Read an ``.npz`` archive with arrays rho, ux, uy, uz, T of equal length."""
        try:
            with np.load(path) as archive:
                arrays = {key: np.asarray(archive[key], dtype=np.float64) for key in _PROFILE_KEYS}
        except FileNotFoundError as exc:
            raise InitialConditionError(f"profile file not found: {path}") from exc
        except (KeyError, ValueError, OSError) as exc:
            raise InitialConditionError(f"cannot read profile {path}: {exc}") from exc
        lengths = {a.shape for a in arrays.values()}
        if len(lengths) != 1 or arrays["rho"].ndim != 1 or arrays["rho"].size == 0:
            raise InitialConditionError(f"profile arrays in {path} must be 1-D of equal length")
        u = np.column_stack([arrays["ux"], arrays["uy"], arrays["uz"]])
        return cls(rho=arrays["rho"], u=u, T=arrays["T"])


@dataclass(frozen=True)
class InitialCondition:
    """Descriptor of f₀.

    Attributes:
        kind: Which family of profiles.
        rho: Density level of ``global-maxwellian`` (normalised away).
        u: Bulk velocity of ``global-maxwellian`` and ``density-wave``.
        T: Temperature of ``global-maxwellian`` and ``density-wave``.
        T_left: Temperature on x_axis < 1/2 (``two-temperature-slab``).
        T_right: Temperature on x_axis ≥ 1/2 (``two-temperature-slab``).
        amplitude: ϱ₀ = 1 + amplitude·sin(2π·wavenumber·x_axis).
        wavenumber: Integer wavenumber of the density wave.
        path: ``.npz`` profile for the ``file`` kind.
        axis: Direction along which the profile varies.
    """

    kind: InitialConditionKind = InitialConditionKind.GLOBAL_MAXWELLIAN
    rho: float = 1.0
    u: tuple[float, float, float] = (0.0, 0.0, 0.0)
    T: float = 1.0
    T_left: float = 1.0
    T_right: float = 2.0
    amplitude: float = 0.0
    wavenumber: int = 1
    path: str | None = None
    axis: int = 0

    def __post_init__(self) -> None:
        if self.axis not in (0, 1, 2):
            raise InitialConditionError(f"axis must be 0, 1 or 2, got {self.axis}")
        if self.kind is InitialConditionKind.GLOBAL_MAXWELLIAN and not self.rho > 0.0:
            raise InitialConditionError(f"rho must be positive, got {self.rho}")
        if self.kind is InitialConditionKind.TWO_TEMPERATURE_SLAB:
            if not (self.T_left > 0.0 and self.T_right > 0.0):
                raise InitialConditionError("slab temperatures must be positive")
        elif self.kind is not InitialConditionKind.FILE and not self.T > 0.0:
            raise InitialConditionError(f"temperature must be positive, got {self.T}")
        if self.kind is InitialConditionKind.DENSITY_WAVE:
            if not -1.0 <= self.amplitude <= 1.0:
                raise InitialConditionError(
                    f"density-wave amplitude must lie in [-1, 1], got {self.amplitude}"
                )
            if self.wavenumber < 1:
                raise InitialConditionError(f"wavenumber must be positive, got {self.wavenumber}")
        if self.kind is InitialConditionKind.FILE and not self.path:
            raise InitialConditionError("file initial condition needs a path")

    def load_profile(self) -> Profile | None:
        """The tabulated profile for ``file`` descriptors, validated; else ``None``."""
        if self.kind is not InitialConditionKind.FILE:
            return None
        assert self.path is not None
        profile = Profile.load(Path(self.path))
        if not np.all(np.isfinite(profile.rho)) or np.any(profile.rho < 0.0):
            raise InitialConditionError("profile density must be finite and nonnegative")
        if not float(profile.rho.sum()) > 0.0:
            raise InitialConditionError("profile density is not normalisable (zero mass)")
        if np.any(~(profile.T[profile.rho > 0.0] > 0.0)):
            raise InitialConditionError("profile temperature must be positive where rho > 0")
        return profile

    def fields_at(
        self, s: NDArray[np.float64], profile: Profile | None = None
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Unnormalised (ϱ₀, u₀, T₀) at axis coordinates *s* in [0, 1)."""
        k = s.size
        u = np.tile(np.asarray(self.u, dtype=np.float64), (k, 1))
        if self.kind is InitialConditionKind.GLOBAL_MAXWELLIAN:
            return np.full(k, self.rho), u, np.full(k, self.T)
        if self.kind is InitialConditionKind.TWO_TEMPERATURE_SLAB:
            T = np.where(s < 0.5, self.T_left, self.T_right)
            return np.ones(k), np.zeros((k, 3)), T
        if self.kind is InitialConditionKind.DENSITY_WAVE:
            rho = 1.0 + self.amplitude * np.sin(2.0 * math.pi * self.wavenumber * s)
            return rho, u, np.full(k, self.T)
        table = profile if profile is not None else self.load_profile()
        assert table is not None
        idx = np.minimum((s * table.rho.size).astype(np.int64), table.rho.size - 1)
        return table.rho[idx], table.u[idx], table.T[idx]

    def max_temperature(self) -> float:
        """Largest temperature the profile takes."""
        if self.kind is InitialConditionKind.TWO_TEMPERATURE_SLAB:
            return max(self.T_left, self.T_right)
        if self.kind is InitialConditionKind.FILE:
            profile = self.load_profile()
            assert profile is not None
            return float(np.max(profile.T[profile.rho > 0.0]))
        return self.T
