"""
src/application/bgk_solver.py

Deterministic discrete-velocity solver for the BGK equation

    ∂_t f + v·∇_x f = ϱ (ϱM_f − f),

with M_f the unit-mass Maxwellian carrying the local (u, T) of f.

The phase space (:mod:`src.domain.phase_space`) is a periodic spatial grid
times a cubic velocity lattice.  One step is the Strang splitting
transport(Δt/2) · relax(Δt) · transport(Δt/2):

* transport is a semi-Lagrangian shift along the characteristics, with
  periodic linear or spectral (FFT) interpolation;
* relaxation is solved exactly, f ← ϱM + (f − ϱM)e^(−rΔt), because it
  conserves the moments that define M.  The discrete Maxwellian is
  moment-matched so the conservation also holds on the lattice.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import optimize, special

from src.domain.enums import Interpolation, RelaxationRate, SnapshotKind, SpatialMode
from src.domain.geometry import CellGrid
from src.domain.hydro import VACUUM_FLOOR, HydroMoments, MomentTrajectory, Snapshot
from src.domain.phase_space import DistributionField, PhaseSpaceGrid, SolverError
from src.domain.schedule import n_steps_for, snapshot_steps

logger = logging.getLogger(__name__)

#: Relative residual at which the Maxwellian moment matching stops.
MATCH_TOLERANCE = 1e-13

_NEWTON_MAX_ITER = 50
_CHUNK = 256


# ---------------------------------------------------------------------------
# Moments and Maxwellians
# ---------------------------------------------------------------------------


def _basis(grid: PhaseSpaceGrid) -> NDArray[np.float64]:
    v = grid.velocities()
    return np.column_stack([np.ones(v.shape[0]), v, np.sum(v * v, axis=1)])


def moments(f: DistributionField) -> HydroMoments:
    """Midpoint quadrature of (ϱ, u, T) at every spatial node."""
    raw = f.values @ _basis(f.grid) * f.grid.dv3
    return HydroMoments.from_sums(raw[:, 0], raw[:, 1:4], raw[:, 4])


def _continuous_parameters(
    rho: NDArray[np.float64], u: NDArray[np.float64], T: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Exponent coefficients (a, b, c) with ϱM = exp(a + b·v + c|v|²)."""
    a = np.log(rho) - 1.5 * np.log(2.0 * math.pi * T) - np.sum(u * u, axis=1) / (2.0 * T)
    b = u / T[:, None]
    c = -1.0 / (2.0 * T)
    return np.column_stack([a, b, c])


def _scale(targets: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.maximum(targets[:, 0], 1e-300) + np.abs(targets[:, 4])


def _newton_match(
    params: NDArray[np.float64],
    targets: NDArray[np.float64],
    phi: NDArray[np.float64],
    dv3: float,
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Batched Newton on the 5 exponent coefficients; returns (params, converged)."""
    params = params.copy()
    scale = _scale(targets)
    converged = np.zeros(params.shape[0], dtype=bool)
    for _ in range(_NEWTON_MAX_ITER):
        with np.errstate(over="ignore", invalid="ignore"):
            f = np.exp(params @ phi.T)
            residual = f @ phi * dv3 - targets
        rel = np.max(np.abs(residual), axis=1) / scale
        converged = np.isfinite(rel) & (rel <= MATCH_TOLERANCE)
        active = ~converged & np.all(np.isfinite(params), axis=1) & np.isfinite(rel)
        if not np.any(active):
            break
        weighted = f[active][:, :, None] * phi[None, :, :]
        jac = np.einsum("kva,vb->kab", weighted, phi) * dv3
        try:
            delta = np.linalg.solve(jac, residual[active][:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            break
        params[active] -= delta
    return params, converged


def _root_match(
    start: NDArray[np.float64], target: NDArray[np.float64], phi: NDArray[np.float64], dv3: float
) -> NDArray[np.float64] | None:
    """Single-node fallback through :func:`scipy.optimize.root`."""

    def fun(p: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        f = np.exp(phi @ p)
        return f @ phi * dv3 - target, (phi.T * f) @ phi * dv3

    try:
        sol = optimize.root(fun, start, jac=True, method="hybr", options={"xtol": 1e-15})
    except (FloatingPointError, ValueError):
        return None
    if not sol.success:
        return None
    residual, _ = fun(sol.x)
    if np.max(np.abs(residual)) / _scale(target[None, :])[0] > MATCH_TOLERANCE * 100:
        return None
    return np.asarray(sol.x, dtype=np.float64)


def _project(
    values: NDArray[np.float64], target: NDArray[np.float64], phi: NDArray[np.float64], dv3: float
) -> NDArray[np.float64]:
    """L² projection onto the moment constraints, then clip and renormalise mass."""
    gram = phi.T @ phi * dv3
    lam = np.linalg.solve(gram, target - values @ phi * dv3)
    projected = values + phi @ lam
    if np.any(projected < 0.0):
        logger.warning(
            "discrete Maxwellian: clipping %d negative nodes after projection",
            int(np.sum(projected < 0.0)),
        )
        projected = np.clip(projected, 0.0, None)
        mass = float(projected.sum()) * dv3
        if mass > 0.0:
            projected *= target[0] / mass
    return projected


def maxwellian_field(
    mom: HydroMoments, grid: PhaseSpaceGrid, *, correct: bool = True
) -> NDArray[np.float64]:
    """ϱM sampled on the velocity lattice at every node of *mom*.

    With ``correct=True`` each node is moment-matched: Newton on the exponent
    coefficients, then :func:`scipy.optimize.root`, then an L² projection
    with clipping as a last resort (logged).  Vacuum nodes give zero.

    Raises:
        SolverError: If a non-vacuum node has T ≤ 0.
    """
    rho = mom.rho
    live = ~mom.vacuum
    T = np.where(live, mom.T, 1.0)
    if np.any(live & ~(T > 0.0)):
        raise SolverError("discrete Maxwellian needs T > 0 at every non-vacuum node")
    out = np.zeros((mom.n_nodes, grid.n_velocity))
    nodes = np.flatnonzero(live)
    if nodes.size == 0:
        return out
    phi = _basis(grid)
    dv3 = grid.dv3
    _, momentum, second = mom.conserved()
    targets_all = np.column_stack([rho, momentum, second])
    u = np.where(live[:, None], mom.u, 0.0)

    for start in range(0, nodes.size, _CHUNK):
        chunk = nodes[start : start + _CHUNK]
        params = _continuous_parameters(rho[chunk], u[chunk], T[chunk])
        if not correct:
            out[chunk] = np.exp(params @ phi.T)
            continue
        targets = targets_all[chunk]
        params, ok = _newton_match(params, targets, phi, dv3)
        for k in np.flatnonzero(~ok).tolist():
            node = int(chunk[k])
            guess = _continuous_parameters(rho[[node]], u[[node]], T[[node]])[0]
            solved = _root_match(guess, targets[k], phi, dv3)
            if solved is not None:
                params[k] = solved
                ok[k] = True
                continue
            logger.warning(
                "discrete Maxwellian at node %d: moment matching failed, using L2 projection",
                node,
            )
            out[node] = _project(np.exp(phi @ guess), targets[k], phi, dv3)
        good = chunk[ok]
        out[good] = np.exp(params[ok] @ phi.T)
    return out


def discrete_maxwellian(
    rho: float, u: Iterable[float], T: float, grid: PhaseSpaceGrid, *, correct: bool = True
) -> NDArray[np.float64]:
    """ϱM on the velocity lattice for one node, shape ``(m_v³,)``.

    Raises:
        SolverError: If ``T <= 0`` for a non-vacuum density.
    """
    u_arr = np.asarray(list(u), dtype=np.float64).reshape(1, 3)
    if rho < VACUUM_FLOOR:
        return np.zeros(grid.n_velocity)
    if not T > 0.0:
        raise SolverError(f"temperature must be positive, got {T}")
    mom = HydroMoments(
        rho=np.array([rho], dtype=np.float64),
        u=u_arr,
        T=np.array([T], dtype=np.float64),
        vacuum=np.array([False]),
    )
    return maxwellian_field(mom, grid, correct=correct)[0]


def gaussian_tail_mass(T: float, v_max: float) -> float:
    """Mass of a unit Maxwellian at temperature T lying outside [−v_max, v_max]³."""
    if not T > 0.0:
        raise SolverError(f"temperature must be positive, got {T}")
    inside = special.erf(v_max / math.sqrt(2.0 * T)) ** 3
    return float(-np.expm1(3.0 * np.log(inside))) if inside > 0.0 else 1.0


# ---------------------------------------------------------------------------
# Sub-steps
# ---------------------------------------------------------------------------


def _shift_linear(arr: NDArray[np.float64], shifts: NDArray[np.float64]) -> NDArray[np.float64]:
    """f_new[i, ..., j] = f[i − s_j] along axis 0, periodic linear interpolation."""
    m = arr.shape[0]
    whole = np.floor(shifts)
    theta = shifts - whole
    base = (np.arange(m)[:, None] - whole.astype(np.int64)[None, :]) % m
    shape = (m,) + (1,) * (arr.ndim - 2) + (shifts.size,)
    idx0 = base.reshape(shape)
    idx1 = ((base - 1) % m).reshape(shape)
    lo = np.take_along_axis(arr, np.broadcast_to(idx0, arr.shape), axis=0)
    hi = np.take_along_axis(arr, np.broadcast_to(idx1, arr.shape), axis=0)
    return (1.0 - theta) * lo + theta * hi


def _shift_spectral(arr: NDArray[np.float64], shifts: NDArray[np.float64]) -> NDArray[np.float64]:
    """Exact periodic translation of the trigonometric interpolant along axis 0."""
    m = arr.shape[0]
    spectrum = np.fft.rfft(arr, axis=0)
    k = np.fft.rfftfreq(m, d=1.0 / m)
    shape = (k.size,) + (1,) * (arr.ndim - 2) + (shifts.size,)
    phase = np.exp(-2j * math.pi * np.outer(k, shifts / m)).reshape(shape)
    return np.fft.irfft(spectrum * phase, n=m, axis=0)


def transport_step(
    f: DistributionField, dt: float, interpolation: Interpolation = Interpolation.LINEAR
) -> DistributionField:
    """Free flight f(x, v) ← f(x − vΔt, v) on the periodic spatial grid."""
    if dt == 0.0:
        return f.with_values(f.values.copy())
    grid = f.grid
    v = grid.velocities()
    shift = _shift_linear if interpolation is Interpolation.LINEAR else _shift_spectral
    if grid.spatial is SpatialMode.SLAB:
        values = shift(f.values, v[:, grid.axis] * dt * grid.m_x)
    else:
        m = grid.m_x
        cube = f.values.reshape(m, m, m, grid.n_velocity)
        for axis in range(3):
            moved = np.moveaxis(cube, axis, 0)
            cube = np.moveaxis(shift(moved, v[:, axis] * dt * m), 0, axis)
        values = cube.reshape(grid.n_space, grid.n_velocity)
    return f.with_values(np.ascontiguousarray(values), f.time + dt)


def cell_integrated_rate(
    rho: NDArray[np.float64], grid: PhaseSpaceGrid, cell_grid: CellGrid
) -> NDArray[np.float64]:
    """Per-node rate ϱ_Δ|Δ|: node density averaged over its particle cell, times |Δ|.

    Raises:
        SolverError: If the particle cells do not tile the spatial nodes.
    """
    if grid.m_x % cell_grid.m:
        raise SolverError(
            f"spatial nodes per side ({grid.m_x}) must be a multiple of cells per side "
            f"({cell_grid.m})"
        )
    block = grid.m_x // cell_grid.m
    mc = cell_grid.m
    if grid.spatial is SpatialMode.SLAB:
        cell_mean = rho.reshape(mc, block).mean(axis=1)
        per_node = np.repeat(cell_mean, block)
    else:
        cube = rho.reshape(mc, block, mc, block, mc, block)
        cell_mean = cube.mean(axis=(1, 3, 5))
        per_node = np.repeat(np.repeat(np.repeat(cell_mean, block, 0), block, 1), block, 2)
        per_node = per_node.reshape(-1)
    return per_node * cell_grid.cell_volume


@dataclass(frozen=True)
class SolverOptions:
    """Choices that shape one solver step."""

    rate: RelaxationRate = RelaxationRate.POINTWISE
    interpolation: Interpolation = Interpolation.LINEAR
    cell_grid: CellGrid | None = None

    def __post_init__(self) -> None:
        if self.rate is RelaxationRate.CELL_INTEGRATED and self.cell_grid is None:
            raise SolverError("cell-integrated relaxation needs the particle cell grid")


def relax_step(
    f: DistributionField, dt: float, options: SolverOptions | None = None
) -> DistributionField:
    """Exact relaxation toward the local moment-matched ϱM over Δt.

    Vacuum nodes and nodes with non-positive temperature are left unchanged.
    """
    opts = options or SolverOptions()
    mom = moments(f)
    active = ~mom.vacuum & (np.nan_to_num(mom.T, nan=0.0) > 0.0)
    if not np.any(active):
        return f.with_values(f.values.copy())
    masked = HydroMoments(
        rho=mom.rho, u=mom.u, T=np.where(active, mom.T, np.nan), vacuum=~active
    )
    target = maxwellian_field(masked, f.grid)
    if opts.rate is RelaxationRate.CELL_INTEGRATED and opts.cell_grid is not None:
        rate = cell_integrated_rate(mom.rho, f.grid, opts.cell_grid)
    else:
        rate = mom.rho
    decay = np.exp(-rate * dt)[:, None]
    relaxed = target + (f.values - target) * decay
    values = np.where(active[:, None], relaxed, f.values)
    return f.with_values(values)


def step(
    f: DistributionField, dt: float, options: SolverOptions | None = None
) -> DistributionField:
    """One Strang step: transport(Δt/2), relax(Δt), transport(Δt/2)."""
    opts = options or SolverOptions()
    half = transport_step(f, dt / 2.0, opts.interpolation)
    relaxed = relax_step(half, dt, opts)
    out = transport_step(relaxed, dt / 2.0, opts.interpolation)
    # Keep the clock exact at whole steps.
    return out.with_values(out.values, f.time + dt)


@dataclass
class SolverRun:
    """Outcome of :func:`solve`."""

    trajectory: MomentTrajectory
    final: DistributionField
    fields: dict[float, DistributionField] = field(default_factory=dict)


def solve(
    f0: DistributionField,
    t_end: float,
    dt: float,
    observer: Callable[[Snapshot], None] | None = None,
    *,
    options: SolverOptions | None = None,
    snapshot_times: Iterable[float] | None = None,
    keep_fields: bool = False,
) -> SolverRun:
    """Iterate :func:`step` to ``t_end``, recording node moments at snapshot steps.

    Raises:
        SolverError: If ``t_end < 0`` or ``dt <= 0``.
    """
    if t_end < 0.0:
        raise SolverError(f"final time must be non-negative, got {t_end}")
    if not dt > 0.0:
        raise SolverError(f"time step must be positive, got {dt}")
    opts = options or SolverOptions()
    grid = f0.grid
    initial = moments(f0)
    T_max = float(np.nanmax(initial.T)) if np.any(~initial.vacuum) else 0.0
    if T_max > 0.0:
        grid.check_velocity_range(T_max)
        logger.info(
            "bgk solve: %s grid %d x %d^3, T_max=%.4g, velocity tail mass %.3e",
            grid.spatial.value,
            grid.n_space,
            grid.m_v,
            T_max,
            gaussian_tail_mass(T_max, grid.v_max),
        )

    n_steps = n_steps_for(t_end, dt)
    wanted = snapshot_steps(snapshot_times, dt, n_steps)
    run = SolverRun(trajectory=MomentTrajectory(), final=f0)

    def record(state: DistributionField, mom: HydroMoments | None = None) -> None:
        observed = mom if mom is not None else moments(state)
        snapshot = Snapshot(time=state.time, moments=observed, kind=SnapshotKind.NODE)
        run.trajectory.append(snapshot)
        if keep_fields:
            run.fields[state.time] = state
        if observer is not None:
            observer(snapshot)

    state = f0
    record(state, initial)
    for k in range(1, n_steps + 1):
        state = step(state, dt, opts)
        state = state.with_values(state.values, f0.time + k * dt)
        if k in wanted:
            record(state)
    run.final = state
    return run
