"""
src/application/kac_process.py

The inhomogeneous Kac particle dynamics in its two interaction modes.

* **Cell mode** – particles sharing a cell of the partition collide at pair
  rate 1/(n|Δ|).
* **Ball mode** – particles closer than ε (minimum image) collide at pair
  rate ε⁻¹.

Two ways of advancing the process are provided: :func:`step_timestep`, the
production path that freezes cell assignments over one Δt, and
:func:`step_exact_event`, an O(n²) event-driven realisation of the jump
process used as a validation oracle for small n.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from src.application.events import AttemptsClamped
from src.application.parallel import map_ordered
from src.domain.collision import collide, collide_sequence, sample_impact
from src.domain.enums import ProcessModeKind
from src.domain.ensemble import ParticleEnsemble
from src.domain.geometry import (
    CellGrid,
    advect,
    cell_indices,
    cell_of,
    min_image_displacement,
    min_image_distance,
    occupancy,
    wrap,
)
from src.domain.hydro import (
    MomentTrajectory,
    Snapshot,
    cell_moments,
    velocity_histogram,
)
from src.domain.schedule import n_steps_for, snapshot_steps
from src.infrastructure.streams import SubstreamFactory

logger = logging.getLogger(__name__)

#: Poisson attempt counts are clamped at this multiple of the cell occupancy.
MAX_ATTEMPTS_PER_PARTICLE = 10

#: Above this size the exact-event oracle logs that it is being used off-label.
EXACT_EVENT_SOFT_LIMIT = 500

#: Images of a pair displacement scanned by the ball-mode oracle.
_IMAGE_OFFSETS = np.array(
    [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)], dtype=np.float64
)


class ProcessError(Exception):
    """Raised for an invalid pair, time step, mode or test function."""


# ---------------------------------------------------------------------------
# Interaction modes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellMode:
    """Mean-field interaction inside the cells of *grid*."""

    grid: CellGrid
    kind: ProcessModeKind = field(default=ProcessModeKind.CELL, init=False)


@dataclass(frozen=True)
class BallMode:
    """Interaction between particles closer than ``epsilon``."""

    epsilon: float
    kind: ProcessModeKind = field(default=ProcessModeKind.BALL, init=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 0.5:
            raise ProcessError(
                f"ball radius must lie in (0, 1/2) for the minimum image to be valid, "
                f"got {self.epsilon}"
            )


ProcessMode = CellMode | BallMode


@dataclass(frozen=True)
class ScalingPreset:
    """Interaction radius tied to the particle number by ε = n^(−1/α).

    α = 2 is the low-density (Boltzmann-Grad) scaling.  Values in (2, 3] give
    the hydrodynamic scaling, which is exposed but not validated.
    """

    alpha: float

    def __post_init__(self) -> None:
        if not 2.0 <= self.alpha <= 3.0:
            raise ProcessError(f"scaling exponent must lie in [2, 3], got {self.alpha}")

    @property
    def low_density(self) -> bool:
        """True for the validated α = 2 preset."""
        return self.alpha == 2.0

    def epsilon(self, n: int) -> float:
        """ε = n^(−1/α)."""
        if n < 1:
            raise ProcessError(f"particle number must be positive, got {n}")
        return float(n) ** (-1.0 / self.alpha)

    @classmethod
    def from_alpha(cls, alpha: float, n: int) -> tuple[ScalingPreset, BallMode]:
        """Build the preset and its ball mode for *n* particles.

        Logs a warning when the hydrodynamic (experimental) range is chosen.
        """
        preset = cls(alpha)
        if not preset.low_density:
            logger.warning(
                "scaling exponent alpha=%.3f is hydrodynamic, out of validated scope", alpha
            )
        return preset, BallMode(preset.epsilon(n))


# ---------------------------------------------------------------------------
# Rates
# ---------------------------------------------------------------------------


def pair_rate(i: int, j: int, ensemble: ParticleEnsemble, mode: ProcessMode) -> float:
    """Jump rate of the pair (i, j).

    Raises:
        ProcessError: If ``i == j``.
    """
    if i == j:
        raise ProcessError(f"a particle cannot collide with itself (i = j = {i})")
    x = ensemble.positions
    if isinstance(mode, CellMode):
        if cell_of(x[i], mode.grid) != cell_of(x[j], mode.grid):
            return 0.0
        return 1.0 / (ensemble.n * mode.grid.cell_volume)
    distance = float(min_image_distance(x[i], x[j]))
    return 1.0 / mode.epsilon if distance < mode.epsilon else 0.0


def expected_attempts(n_cell: int, n_total: int, cell_volume: float, dt: float) -> float:
    """Mean number of collision attempts in one cell over ``dt``."""
    return dt * n_cell * (n_cell - 1) / (2.0 * n_total * cell_volume)


def neighbor_pairs(positions: NDArray[np.float64], epsilon: float) -> NDArray[np.int64]:
    """All pairs (i < j) at minimum-image distance strictly below *epsilon*.

    Returns an ``(k, 2)`` array sorted lexicographically.
    """
    if positions.shape[0] < 2:
        return np.empty((0, 2), dtype=np.int64)
    tree = cKDTree(positions, boxsize=1.0)
    pairs = np.asarray(tree.query_pairs(epsilon, output_type="ndarray"), dtype=np.int64)
    if pairs.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    dist = np.asarray(min_image_distance(positions[pairs[:, 0]], positions[pairs[:, 1]]))
    pairs = pairs[dist < epsilon]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


# ---------------------------------------------------------------------------
# Time-stepped production path
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellOutcome:
    """Velocities of one cell after its collisions, with attempt counts."""

    velocities: NDArray[np.float64]
    attempts: int
    drawn: int


def uniform_pairs(
    rng: np.random.Generator, n_members: int, count: int
) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """*count* ordered pairs of distinct indices in ``range(n_members)``."""
    first = rng.integers(n_members, size=count)
    second = rng.integers(n_members - 1, size=count)
    second = second + (second >= first)
    return first.astype(np.int64), second.astype(np.int64)


def kac_collisions(
    velocities: NDArray[np.float64],
    mean_attempts: float,
    rng: np.random.Generator,
    *,
    clamp: int | None = None,
) -> CellOutcome:
    """Homogeneous Kac collisions on one velocity block.

    Draws a Poisson(*mean_attempts*) count, clamps it at *clamp*, and applies
    that many uniform-pair collisions in sequence.
    """
    n_members = velocities.shape[0]
    if n_members < 2 or mean_attempts <= 0.0:
        return CellOutcome(velocities=velocities, attempts=0, drawn=0)
    drawn = int(rng.poisson(mean_attempts))
    attempts = drawn if clamp is None else min(drawn, clamp)
    if attempts == 0:
        return CellOutcome(velocities=velocities, attempts=0, drawn=drawn)
    first, second = uniform_pairs(rng, n_members, attempts)
    omegas = sample_impact(rng, size=attempts)
    return CellOutcome(
        velocities=collide_sequence(velocities, first, second, omegas),
        attempts=attempts,
        drawn=drawn,
    )


def step_timestep(
    ensemble: ParticleEnsemble,
    mode: ProcessMode,
    dt: float,
    streams: SubstreamFactory,
    *,
    step: int = 0,
    workers: int = 1,
    on_clamp: Callable[[AttemptsClamped], None] | None = None,
) -> ParticleEnsemble:
    """Advance by ``dt``: free flight, then collisions with frozen cells.

    Cell ``c`` of step ``step`` draws from ``streams.stream(step, c)``, so the
    result is the same for any *workers*.

    Raises:
        ProcessError: If ``dt`` is not positive.
    """
    if not dt > 0.0:
        raise ProcessError(f"time step must be positive, got {dt}")
    positions = advect(ensemble.positions, ensemble.velocities, dt)
    velocities = ensemble.velocities

    if isinstance(mode, BallMode):
        rng = streams.stream(step, 0)
        new_v, attempts = _ball_collisions(positions, velocities, mode, dt, rng)
        return ensemble.evolve(
            positions=positions,
            velocities=new_v,
            time=ensemble.time + dt,
            collisions=attempts,
        )

    grid = mode.grid
    occ = occupancy(positions, grid)
    busy = [c for c in range(grid.n_cells) if occ.counts[c] >= 2]
    n_total = ensemble.n

    def work(cell: int) -> CellOutcome:
        members = occ.members(cell)
        mean = expected_attempts(members.size, n_total, grid.cell_volume, dt)
        return kac_collisions(
            velocities[members],
            mean,
            streams.stream(step, cell),
            clamp=MAX_ATTEMPTS_PER_PARTICLE * members.size,
        )

    outcomes = map_ordered(work, busy, workers)
    new_v = np.array(velocities, copy=True)
    total = 0
    for cell, outcome in zip(busy, outcomes, strict=True):
        new_v[occ.members(cell)] = outcome.velocities
        total += outcome.attempts
        if outcome.drawn > outcome.attempts:
            logger.warning(
                "step %d cell %d: %d collision attempts clamped to %d",
                step,
                cell,
                outcome.drawn,
                outcome.attempts,
            )
            if on_clamp is not None:
                on_clamp(AttemptsClamped(step, cell, outcome.drawn, outcome.attempts))

    return ensemble.evolve(
        positions=positions, velocities=new_v, time=ensemble.time + dt, collisions=total
    )


def _ball_collisions(
    positions: NDArray[np.float64],
    velocities: NDArray[np.float64],
    mode: BallMode,
    dt: float,
    rng: np.random.Generator,
) -> tuple[NDArray[np.float64], int]:
    pairs = neighbor_pairs(positions, mode.epsilon)
    n_pairs = pairs.shape[0]
    if n_pairs == 0:
        return np.array(velocities, copy=True), 0
    drawn = int(rng.poisson(dt * n_pairs / mode.epsilon))
    clamp = MAX_ATTEMPTS_PER_PARTICLE * positions.shape[0]
    if drawn > clamp:
        logger.warning("ball mode: %d collision attempts clamped to %d", drawn, clamp)
    attempts = min(drawn, clamp)
    if attempts == 0:
        return np.array(velocities, copy=True), 0
    chosen = pairs[rng.integers(n_pairs, size=attempts)]
    omegas = sample_impact(rng, size=attempts)
    return collide_sequence(velocities, chosen[:, 0], chosen[:, 1], omegas), attempts


# ---------------------------------------------------------------------------
# Exact event-driven oracle
# ---------------------------------------------------------------------------


def _face_gaps(
    positions: NDArray[np.float64], cells: NDArray[np.int64], m: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Distances to the upper and lower faces of each tracked cell, in [0, 1/m].

    The offset from the lower face is taken modulo 1, so a particle that
    wrapped onto the far side of the torus by rounding reads as a tiny
    negative offset rather than almost 1.
    """
    width = 1.0 / m
    offset = np.mod(positions - cells * width, 1.0)
    offset = np.where(offset > 0.5 * (1.0 + width), offset - 1.0, offset)
    offset = np.clip(offset, 0.0, width)
    return width - offset, offset


def _initial_cells(
    positions: NDArray[np.float64], velocities: NDArray[np.float64], m: int
) -> NDArray[np.int64]:
    cells = cell_indices(positions, CellGrid(m))
    scaled = positions * m
    on_face = np.abs(scaled - np.rint(scaled)) < 1e-12
    leaving_down = on_face & (velocities < 0.0) & (cells == np.mod(np.rint(scaled), m))
    cells[leaving_down] = np.mod(cells[leaving_down] - 1, m)
    return cells


def _next_face_crossing(
    positions: NDArray[np.float64],
    velocities: NDArray[np.float64],
    cells: NDArray[np.int64],
    m: int,
) -> tuple[float, int, int]:
    if m == 1:
        return math.inf, -1, -1
    up, down = _face_gaps(positions, cells, m)
    with np.errstate(divide="ignore", invalid="ignore"):
        times = np.where(
            velocities > 0.0,
            up / velocities,
            np.where(velocities < 0.0, down / -velocities, np.inf),
        )
    flat = int(np.argmin(times))
    return float(times.flat[flat]), flat // 3, flat % 3


def step_exact_event(
    ensemble: ParticleEnsemble,
    mode: ProcessMode,
    rng: np.random.Generator,
    *,
    horizon: float = math.inf,
    max_segments: int = 10**7,
) -> tuple[ParticleEnsemble, float]:
    """Advance exactly to the next collision of the jump process.

    Between status changes (cell crossings, or ε-shell crossings in ball
    mode) the total collision rate is constant, so the waiting time is drawn
    from an exponential at that rate and compared with the next change.

    Args:
        ensemble: Current state.
        mode: Interaction mode.
        rng: Random stream.
        horizon: Stop after this much elapsed time if no collision occurs.
        max_segments: Bound on status changes processed in one call.

    Returns:
        ``(ensemble, event_time)``.  If no collision happens before the
        horizon, the ensemble has been advected to ``time + horizon`` (or
        left in place for an infinite horizon) and ``event_time`` is ``inf``.
    """
    if ensemble.n > EXACT_EVENT_SOFT_LIMIT:
        logger.debug("exact-event oracle running on n=%d particles", ensemble.n)
    if horizon < 0.0:
        raise ProcessError(f"horizon must be non-negative, got {horizon}")
    if ensemble.n < 2:
        return _finish_without_event(
            ensemble, ensemble.positions, ensemble.velocities, horizon, horizon
        )
    if isinstance(mode, CellMode):
        return _exact_cell(ensemble, mode, rng, horizon, max_segments)
    return _exact_ball(ensemble, mode, rng, horizon, max_segments)


def _finish_without_event(
    ensemble: ParticleEnsemble,
    positions: NDArray[np.float64],
    velocities: NDArray[np.float64],
    horizon: float,
    remaining: float,
) -> tuple[ParticleEnsemble, float]:
    if math.isinf(horizon):
        return ensemble, math.inf
    advanced = wrap(positions + velocities * remaining)
    return ensemble.evolve(positions=advanced, time=ensemble.time + horizon), math.inf


def _exact_cell(
    ensemble: ParticleEnsemble,
    mode: CellMode,
    rng: np.random.Generator,
    horizon: float,
    max_segments: int,
) -> tuple[ParticleEnsemble, float]:
    grid = mode.grid
    m = grid.m
    n = ensemble.n
    pos = np.array(ensemble.positions, copy=True)
    vel = ensemble.velocities
    cells = _initial_cells(pos, vel, m)
    elapsed = 0.0

    for _ in range(max_segments):
        flat = (cells[:, 0] * m + cells[:, 1]) * m + cells[:, 2]
        counts = np.bincount(flat, minlength=grid.n_cells)
        pair_counts = counts * (counts - 1) / 2.0
        total_pairs = float(pair_counts.sum())
        rate = total_pairs / (n * grid.cell_volume)
        wait = float(rng.exponential(1.0 / rate)) if rate > 0.0 else math.inf
        crossing, who, axis = _next_face_crossing(pos, vel, cells, m)
        remaining = horizon - elapsed

        if math.isfinite(wait) and wait <= crossing and wait <= remaining:
            pos = wrap(pos + vel * wait)
            elapsed += wait
            pick = float(rng.random()) * total_pairs
            cell = int(np.searchsorted(np.cumsum(pair_counts), pick, side="right"))
            cell = min(cell, grid.n_cells - 1)
            members = np.flatnonzero(flat == cell)
            a, b = uniform_pairs(rng, members.size, 1)
            i, j = int(members[a[0]]), int(members[b[0]])
            new_v = np.array(vel, copy=True)
            new_v[i], new_v[j] = collide(vel[i], vel[j], sample_impact(rng))
            event_time = ensemble.time + elapsed
            return (
                ensemble.evolve(positions=pos, velocities=new_v, time=event_time, collisions=1),
                event_time,
            )

        if remaining <= crossing:
            return _finish_without_event(ensemble, pos, vel, horizon, remaining)

        pos = wrap(pos + vel * crossing)
        elapsed += crossing
        step = 1 if vel[who, axis] > 0.0 else -1
        cells[who, axis] = (cells[who, axis] + step) % m

    raise ProcessError(f"no collision within {max_segments} cell crossings")


def _ball_status(
    pos: NDArray[np.float64],
    vel: NDArray[np.float64],
    first: NDArray[np.int64],
    second: NDArray[np.int64],
    epsilon: float,
) -> tuple[NDArray[np.bool_], float]:
    """Which pairs are within ε, and the time of the next status change."""
    d0 = min_image_displacement(pos[first], pos[second])
    w = vel[first] - vel[second]
    d = d0[:, None, :] + _IMAGE_OFFSETS[None, :, :]
    a = np.sum(w * w, axis=1)[:, None]
    b = 2.0 * np.sum(d * w[:, None, :], axis=2)
    c = np.sum(d * d, axis=2) - epsilon * epsilon
    tol = 1e-12 * epsilon * epsilon
    inside_image = (c < -tol) | ((np.abs(c) <= tol) & (b < 0.0))
    inside = np.any(inside_image, axis=1)

    disc = b * b - 4.0 * a * c
    root = np.sqrt(np.clip(disc, 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        exit_t = np.where(inside_image & (a > 0.0), (-b + root) / (2.0 * a), np.inf)
        entry_t = np.where(
            ~inside_image & (b < 0.0) & (disc > 0.0) & (a > 0.0),
            (-b - root) / (2.0 * a),
            np.inf,
        )
        # The 27 images cover every approach until some component drifts by 1/2.
        speed = np.max(np.abs(w), axis=1)
        valid_for = np.where(speed > 0.0, 0.5 / speed, np.inf)
    change = np.minimum(np.min(np.minimum(exit_t, np.clip(entry_t, 0.0, None)), axis=1), valid_for)
    return inside, float(np.min(change)) if change.size else math.inf


def _exact_ball(
    ensemble: ParticleEnsemble,
    mode: BallMode,
    rng: np.random.Generator,
    horizon: float,
    max_segments: int,
) -> tuple[ParticleEnsemble, float]:
    eps = mode.epsilon
    pos = np.array(ensemble.positions, copy=True)
    vel = ensemble.velocities
    first, second = np.triu_indices(ensemble.n, k=1)
    elapsed = 0.0

    for _ in range(max_segments):
        inside, change = _ball_status(pos, vel, first, second, eps)
        n_inside = int(inside.sum())
        rate = n_inside / eps
        wait = float(rng.exponential(1.0 / rate)) if rate > 0.0 else math.inf
        remaining = horizon - elapsed

        if math.isfinite(wait) and wait <= change and wait <= remaining:
            pos = wrap(pos + vel * wait)
            elapsed += wait
            pair = int(np.flatnonzero(inside)[rng.integers(n_inside)])
            i, j = int(first[pair]), int(second[pair])
            new_v = np.array(vel, copy=True)
            new_v[i], new_v[j] = collide(vel[i], vel[j], sample_impact(rng))
            event_time = ensemble.time + elapsed
            return (
                ensemble.evolve(positions=pos, velocities=new_v, time=event_time, collisions=1),
                event_time,
            )

        if remaining <= change:
            return _finish_without_event(ensemble, pos, vel, horizon, remaining)

        pos = wrap(pos + vel * change)
        elapsed += change

    raise ProcessError(f"no collision within {max_segments} status changes")


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------

PhaseFunction = Callable[[NDArray[np.float64], NDArray[np.float64]], NDArray[np.float64]]


@dataclass(frozen=True)
class GeneratorTerms:
    """Transport and collision parts of the empirical generator."""

    transport: float
    collision: float

    @property
    def total(self) -> float:
        """Sum of both parts."""
        return self.transport + self.collision


def _evaluate(
    phi: PhaseFunction, x: NDArray[np.float64], v: NDArray[np.float64]
) -> NDArray[np.float64]:
    try:
        values = np.asarray(phi(x, v), dtype=np.float64)
    except Exception as exc:
        raise ProcessError(f"test function could not be evaluated: {exc}") from exc
    if values.shape != (x.shape[0],):
        raise ProcessError(
            f"test function must return one value per particle, got shape {values.shape}"
        )
    if not np.all(np.isfinite(values)):
        raise ProcessError("test function returned non-finite values")
    return values


def _spatial_gradient(
    phi: PhaseFunction, x: NDArray[np.float64], v: NDArray[np.float64], h: float = 1e-5
) -> NDArray[np.float64]:
    grad = np.empty_like(x)
    for axis in range(3):
        shift = np.zeros(3)
        shift[axis] = h
        ahead = _evaluate(phi, wrap(x + shift), v)
        behind = _evaluate(phi, wrap(x - shift), v)
        grad[:, axis] = (ahead - behind) / (2.0 * h)
    return grad


def _pair_increment(
    phi: PhaseFunction,
    x: NDArray[np.float64],
    v: NDArray[np.float64],
    first: NDArray[np.int64],
    second: NDArray[np.int64],
    rng: np.random.Generator,
    n_omega: int,
) -> float:
    if first.size == 0:
        return 0.0
    xi, xj = x[first], x[second]
    vi, vj = v[first], v[second]
    before = _evaluate(phi, xi, vi) + _evaluate(phi, xj, vj)
    total = 0.0
    for _ in range(n_omega):
        vi_out, vj_out = collide(vi, vj, sample_impact(rng, size=first.size))
        total += float(np.sum(_evaluate(phi, xi, vi_out) + _evaluate(phi, xj, vj_out) - before))
    return total / n_omega


def generator_terms(
    phi: PhaseFunction,
    ensemble: ParticleEnsemble,
    mode: ProcessMode,
    rng: np.random.Generator,
    *,
    grad_x: PhaseFunction | None = None,
    n_omega: int = 1,
) -> GeneratorTerms:
    """Empirical generator applied to *phi*, split into its two parts.

    *phi* maps ``(x, v)`` batches of shape ``(k, 3)`` to ``(k,)`` values.  The
    spatial gradient is taken from *grad_x* (returning ``(k, 3)``) when given,
    otherwise by central differences.  The ω integral is estimated with
    *n_omega* Monte Carlo draws per pair.

    Raises:
        ProcessError: If *phi* cannot be evaluated on the ensemble.
    """
    if n_omega < 1:
        raise ProcessError(f"n_omega must be positive, got {n_omega}")
    x, v, n = ensemble.positions, ensemble.velocities, ensemble.n
    _evaluate(phi, x, v)

    if grad_x is not None:
        try:
            grad = np.asarray(grad_x(x, v), dtype=np.float64)
        except Exception as exc:
            raise ProcessError(f"gradient could not be evaluated: {exc}") from exc
    else:
        grad = _spatial_gradient(phi, x, v)
    transport = float(np.sum(v * grad)) / n

    if isinstance(mode, CellMode):
        occ = occupancy(x, mode.grid)
        increment = 0.0
        for cell in np.flatnonzero(occ.counts >= 2).tolist():
            members = occ.members(cell)
            a, b = np.triu_indices(members.size, k=1)
            increment += _pair_increment(phi, x, v, members[a], members[b], rng, n_omega)
        collision = increment / (n * mode.grid.cell_volume) / n
    else:
        pairs = neighbor_pairs(x, mode.epsilon)
        increment = _pair_increment(phi, x, v, pairs[:, 0], pairs[:, 1], rng, n_omega)
        collision = increment / mode.epsilon / n
    return GeneratorTerms(transport=transport, collision=collision)


def apply_generator(
    phi: PhaseFunction,
    ensemble: ParticleEnsemble,
    mode: ProcessMode,
    rng: np.random.Generator,
    *,
    grad_x: PhaseFunction | None = None,
    n_omega: int = 1,
) -> float:
    """Total empirical generator value; see :func:`generator_terms`."""
    return generator_terms(phi, ensemble, mode, rng, grad_x=grad_x, n_omega=n_omega).total


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def observe(
    ensemble: ParticleEnsemble, grid: CellGrid, histogram_bins: int = 0, axis: int = 0
) -> Snapshot:
    """Cell moments (and optionally a velocity histogram) of *ensemble*."""
    histogram = velocity_histogram(ensemble, axis, histogram_bins) if histogram_bins > 0 else None
    return Snapshot(time=ensemble.time, moments=cell_moments(ensemble, grid), histogram=histogram)


def run(
    ensemble: ParticleEnsemble,
    mode: ProcessMode,
    t_end: float,
    dt: float,
    observer: Callable[[Snapshot], None] | None = None,
    *,
    streams: SubstreamFactory,
    grid: CellGrid | None = None,
    snapshot_times: Iterable[float] | None = None,
    histogram_bins: int = 0,
    histogram_axis: int = 0,
    workers: int = 1,
    on_clamp: Callable[[AttemptsClamped], None] | None = None,
) -> tuple[MomentTrajectory, ParticleEnsemble]:
    """Repeat :func:`step_timestep` up to ``t_end`` and record snapshots.

    Args:
        ensemble: Initial state.
        mode: Interaction mode.
        t_end: Final time; a non-multiple of ``dt`` is rounded up to a whole step.
        dt: Time step.
        observer: Called with every snapshot after it is recorded.
        streams: Substream factory; step ``k`` uses indices ``(k, cell)``.
        grid: Observation grid; defaults to the cell-mode grid.
        snapshot_times: Extra observation times (snapped to the step grid).
        histogram_bins: Attach a velocity histogram when positive.
        histogram_axis: Velocity coordinate the histogram is taken over.
        workers: Threads used for the per-cell collision sub-step.
        on_clamp: Receives :class:`AttemptsClamped` notifications.

    Returns:
        The recorded trajectory and the final ensemble.

    Raises:
        ProcessError: If ``t_end < 0``, ``dt <= 0`` or no observation grid is known.
    """
    if t_end < 0.0:
        raise ProcessError(f"final time must be non-negative, got {t_end}")
    if not dt > 0.0:
        raise ProcessError(f"time step must be positive, got {dt}")
    if grid is None:
        if not isinstance(mode, CellMode):
            raise ProcessError("ball-mode runs need an explicit observation grid")
        grid = mode.grid

    n_steps = n_steps_for(t_end, dt)
    wanted = snapshot_steps(snapshot_times, dt, n_steps)
    trajectory = MomentTrajectory()

    def record(state: ParticleEnsemble) -> None:
        snapshot = observe(state, grid, histogram_bins, histogram_axis)
        trajectory.append(snapshot)
        if observer is not None:
            observer(snapshot)

    state = ensemble
    record(state)
    for step in range(1, n_steps + 1):
        state = step_timestep(
            state, mode, dt, streams, step=step, workers=workers, on_clamp=on_clamp
        )
        if step in wanted:
            record(state)
    logger.debug("kac run finished: %d steps, %d collisions", n_steps, state.collision_count)
    return trajectory, state


def run_exact(
    ensemble: ParticleEnsemble,
    mode: ProcessMode,
    snapshot_times: Iterable[float],
    rng: np.random.Generator,
    *,
    grid: CellGrid,
) -> tuple[MomentTrajectory, ParticleEnsemble]:
    """Drive :func:`step_exact_event` through the given observation times."""
    trajectory = MomentTrajectory()
    state = ensemble
    trajectory.append(observe(state, grid))
    for target in sorted(t for t in snapshot_times if t > ensemble.time):
        while state.time < target:
            state, event_time = step_exact_event(
                state, mode, rng, horizon=target - state.time
            )
            if math.isinf(event_time):
                break
        trajectory.append(observe(state, grid))
    return trajectory, state
