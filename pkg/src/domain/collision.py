"""
src/domain/collision.py

Elastic pair collisions and the Maxwell-molecule cross-section with angular
cutoff.

The kernel is the uniform density B(ω; V) = 1/(4π) on the unit sphere: it
integrates to one and does not depend on the relative speed |V|.
:func:`kernel_density` and :func:`sample_impact` are the two places a
different cutoff kernel would plug in.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike, NDArray

#: Unit vector ω in R³ (or a batch of them, shape ``(k, 3)``).
ImpactVector = NDArray[np.float64]

#: Tolerance on |ω| − 1.
UNIT_TOLERANCE = 1e-12

_UNIFORM_DENSITY = 1.0 / (4.0 * math.pi)


class CollisionError(Exception):
    """Raised when an impact vector is not a unit vector."""


def _check_unit(omega: NDArray[np.float64]) -> None:
    norms = np.linalg.norm(omega, axis=-1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOLERANCE):
        raise CollisionError(f"impact vector must have unit norm, got |ω| = {norms}")


def collide(
    v_i: ArrayLike, v_j: ArrayLike, omega: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Return the outgoing pair (v'_i, v'_j).

    v'_i = v_i − ((v_i − v_j)·ω) ω and v'_j = v_j + ((v_i − v_j)·ω) ω.
    Works on single 3-vectors or on aligned ``(k, 3)`` batches.  A grazing
    impact, (v_i − v_j)·ω = 0, returns the incoming pair unchanged.

    Raises:
        CollisionError: If ω is not a unit vector.
    """
    w = np.asarray(omega, dtype=np.float64)
    _check_unit(w)
    a = np.asarray(v_i, dtype=np.float64)
    b = np.asarray(v_j, dtype=np.float64)
    transfer = np.sum((a - b) * w, axis=-1, keepdims=True) * w
    return a - transfer, b + transfer


def collide_sequence(
    velocities: NDArray[np.float64],
    first: NDArray[np.int64],
    second: NDArray[np.int64],
    omegas: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Apply the collisions (first[k], second[k], omegas[k]) in order.

    Returns a new velocity array; a particle may take part in several of the
    listed collisions, each one seeing the output of the previous.
    """
    _check_unit(omegas)
    out = np.array(velocities, dtype=np.float64, copy=True)
    for a, b, w in zip(first.tolist(), second.tolist(), omegas, strict=True):
        va = out[a]
        vb = out[b]
        transfer = float(np.dot(va - vb, w)) * w
        out[a] = va - transfer
        out[b] = vb + transfer
    return out


def kernel_density(omega: ArrayLike, relative_velocity: ArrayLike | None = None) -> float:
    """Cross-section B(ω; V), constant 1/(4π) for angular-cutoff Maxwell molecules."""
    del omega, relative_velocity
    return _UNIFORM_DENSITY


def sample_impact(
    rng: np.random.Generator,
    relative_velocity: ArrayLike | None = None,
    size: int | None = None,
) -> ImpactVector:
    """Draw ω with density :func:`kernel_density` on the unit sphere.

    Args:
        rng: Random stream.
        relative_velocity: Unused for Maxwell molecules.
        size: Number of draws; ``None`` returns a single ``(3,)`` vector.
    """
    del relative_velocity
    shape = (3,) if size is None else (size, 3)
    g = rng.standard_normal(shape)
    omega: NDArray[np.float64] = g / np.linalg.norm(g, axis=-1, keepdims=True)
    return omega
