"""
src/application/events.py

Event dataclasses published on the :class:`~src.application.event_bus.EventBus`
during a run.
"""
from __future__ import annotations

from dataclasses import dataclass

from src.domain.hydro import Snapshot


@dataclass(frozen=True)
class RunStarted:
    """Fired once before the first snapshot of a run."""

    label: str
    n_particles: int | None
    seed: int


@dataclass(frozen=True)
class SnapshotTaken:
    """Fired for every observed snapshot."""

    label: str
    snapshot: Snapshot


@dataclass(frozen=True)
class AttemptsClamped:
    """Fired when a cell's Poisson attempt count hit the safety clamp."""

    step: int
    cell: int
    drawn: int
    clamp: int


@dataclass(frozen=True)
class RunFinished:
    """Fired once after the last snapshot of a run."""

    label: str
    final_time: float
    collisions: int
