"""
src/domain/schedule.py

Fixed-step time grids and the snapshot steps observed on them.
"""
from __future__ import annotations

import math
from collections.abc import Iterable


def n_steps_for(t_end: float, dt: float) -> int:
    """Number of Δt steps covering ``[0, t_end]`` (rounded up past float noise)."""
    ratio = t_end / dt
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return int(nearest)
    return math.ceil(ratio)


def snapshot_steps(snapshot_times: Iterable[float] | None, dt: float, n_steps: int) -> set[int]:
    """Step indices at which to observe; always includes 0 and the last step."""
    steps = {0, n_steps}
    for t in snapshot_times or ():
        steps.add(min(max(int(round(t / dt)), 0), n_steps))
    return steps
