"""
src/infrastructure/config.py

Run configuration for the kinetic-bgk harness.

A run is described by one JSON (or YAML) document.  :meth:`RunConfig.load`
parses it (JSON first, then :func:`yaml.safe_load`), rejects unknown keys,
fills defaults and re-validates the constraints of the modules the run will
use.  Every error is a :class:`ConfigLoadError` whose message starts with
the dotted key path at fault.  :meth:`RunConfig.save` writes the effective
configuration as sorted-key JSON so that the run can be reproduced from it.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import types
import typing
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import yaml

from src.domain.enums import (
    Interpolation,
    RelaxationRate,
    RunMode,
    SpatialMode,
    ThermalizationKind,
)
from src.domain.initial_condition import InitialCondition, InitialConditionError
from src.domain.phase_space import PhaseSpaceGrid, SolverError, default_v_max
from src.domain.schedule import n_steps_for
from src.domain.splitting import MAX_TAU, MIN_SCALE_SEPARATION

logger = logging.getLogger(__name__)

_MAX_SEED = 2**64

#: Run modes served by the ``simulate`` subcommand.
PARTICLE_MODES = frozenset({RunMode.KAC_CELL, RunMode.KAC_BALL, RunMode.SPLITTING})


class ConfigLoadError(Exception):
    """Raised for a malformed document, an unknown key or a violated constraint."""


# ---------------------------------------------------------------------------
# Sub-sections
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParticleSection:
    """Particle-system size, cell grid and time stepping."""

    n: int = 10_000
    m: int = 4
    dt: float = 1e-3
    t_end: float = 1.0
    epsilon: float | None = None
    alpha: float | None = None


@dataclass(frozen=True)
class SplittingSection:
    """Splitting-dynamics parameters."""

    tau: float = 0.02
    thermalization: ThermalizationKind = ThermalizationKind.MICROCANONICAL_LIMIT
    epsilon: float | None = None
    n_periods: int | None = None


@dataclass(frozen=True)
class SolverSection:
    """Reference-solver grid and stepping."""

    spatial: SpatialMode = SpatialMode.SLAB
    m_x: int = 64
    m_v: int = 33
    v_max: float | None = None
    dt: float = 0.01
    t_end: float | None = None
    rate: RelaxationRate | None = None
    interpolation: Interpolation = Interpolation.LINEAR
    max_values: int = 200_000_000


@dataclass(frozen=True)
class OutputSection:
    """What gets observed and written."""

    snapshot_interval: float = 0.1
    histogram_bins: int = 0
    histogram_axis: int = 0
    dump_fields: bool = True
    ks_cells: tuple[int, ...] = ()


@dataclass(frozen=True)
class SweepSection:
    """Axes of a convergence study; the full product is swept."""

    n_values: tuple[int, ...] = (10_000, 20_000)
    tau_values: tuple[float, ...] = (0.02,)
    m_values: tuple[int, ...] = (4,)
    epsilon_values: tuple[float, ...] = ()


@dataclass(frozen=True)
class MicrocanonicalSection:
    """Parameters of the ``microcanonical-test`` report."""

    n_values: tuple[int, ...] = (3, 5, 10, 50, 100)
    samples: int = 20_000
    T: float = 1.0


# ---------------------------------------------------------------------------
# Root config object
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Root configuration object.

    Load via :meth:`RunConfig.load`; persist via :meth:`RunConfig.save`.
    """

    mode: RunMode = RunMode.SPLITTING
    seed: int = 0
    threads: int | None = None
    particles: ParticleSection = field(default_factory=ParticleSection)
    splitting: SplittingSection = field(default_factory=SplittingSection)
    solver: SolverSection = field(default_factory=SolverSection)
    initial: InitialCondition = field(default_factory=InitialCondition)
    output: OutputSection = field(default_factory=OutputSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    microcanonical: MicrocanonicalSection = field(default_factory=MicrocanonicalSection)

    # ------------------------------------------------------------------
    # Derived values
    # ------------------------------------------------------------------

    @property
    def n_periods(self) -> int:
        """Splitting periods; defaults to ⌈t_end/τ⌉."""
        if self.splitting.n_periods is not None:
            return self.splitting.n_periods
        return n_steps_for(self.particles.t_end, self.splitting.tau)

    @property
    def relaxation_rate(self) -> RelaxationRate:
        """Configured rate, else cell-integrated for particle comparisons and pointwise
        otherwise."""
        if self.solver.rate is not None:
            return self.solver.rate
        if self.mode in (RunMode.COMPARE, RunMode.SWEEP):
            return RelaxationRate.CELL_INTEGRATED
        return RelaxationRate.POINTWISE

    @property
    def solver_t_end(self) -> float:
        """Solver horizon; defaults to the particle horizon."""
        return self.solver.t_end if self.solver.t_end is not None else self.particles.t_end

    def phase_space_grid(self) -> PhaseSpaceGrid:
        """Solver grid; v_max defaults to 6·√T_max of the initial condition."""
        v_max = self.solver.v_max
        if v_max is None:
            v_max = default_v_max(self.initial.max_temperature())
        return PhaseSpaceGrid(
            spatial=self.solver.spatial,
            m_x=self.solver.m_x,
            m_v=self.solver.m_v,
            v_max=v_max,
            axis=self.initial.axis,
            max_values=self.solver.max_values,
        )

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        threads: int | None = None,
        mode: RunMode | None = None,
    ) -> RunConfig:
        """Copy with CLI overrides applied and re-validated.

        Raises:
            ConfigLoadError: If the overridden config violates a constraint.
        """
        updated = dataclasses.replace(
            self,
            mode=self.mode if mode is None else mode,
            seed=self.seed if seed is None else seed,
            threads=self.threads if threads is None else threads,
        )
        _validate(updated)
        return updated

    # ------------------------------------------------------------------
    # Factory / persistence
    # ------------------------------------------------------------------

    @classmethod
    def load(cls, path: Path) -> RunConfig:
        """Load and validate the configuration at *path*.

        Raises:
            ConfigLoadError: If the file is missing, unparsable, carries an
                unknown key or violates a constraint.
        """
        logger.debug("loading config from %s", path)
        try:
            raw_text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigLoadError(f"cannot read config {path}: {exc}") from exc
        data = _parse(raw_text, path)
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigLoadError(f"Expected a mapping in {path}, got {type(data).__name__}")
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunConfig:
        """Build and validate a config from a parsed document."""
        config = _build(cls, data, "")
        _validate(config)
        return config

    def to_dict(self) -> dict[str, Any]:
        """Plain-JSON view of every field, defaults included."""
        return _plain(self)

    @classmethod
    def save(cls, config: RunConfig, path: Path) -> None:
        """Write *config* to *path* as sorted-key JSON."""
        path.write_text(
            json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _parse(raw_text: str, path: Path) -> object:
    # PyYAML reads exponent literals such as 1e-3 as strings, so JSON goes first.
    try:
        return json.loads(raw_text)
    except json.JSONDecodeError:
        pass
    try:
        return yaml.safe_load(raw_text)
    except yaml.YAMLError as exc:
        raise ConfigLoadError(f"Failed to parse {path}: {exc}") from exc


def load_config(path: Path) -> RunConfig:
    """Module-level alias of :meth:`RunConfig.load`."""
    return RunConfig.load(path)


# ---------------------------------------------------------------------------
# Internal helpers
# ---------------------------------------------------------------------------


def _join(prefix: str, key: str) -> str:
    return f"{prefix}.{key}" if prefix else key


def _build(cls: type[Any], data: Any, path: str) -> Any:
    where = path or "<root>"
    if not isinstance(data, dict):
        raise ConfigLoadError(f"{where}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigLoadError(f"{_join(path, str(unknown[0]))}: unknown key {unknown[0]!r}")
    kwargs = {
        key: _coerce(value, hints[key], _join(path, key)) for key, value in data.items()
    }
    try:
        return cls(**kwargs)
    except (InitialConditionError, ValueError, TypeError) as exc:
        raise ConfigLoadError(f"{where}: {exc}") from exc


def _coerce(value: Any, hint: Any, path: str) -> Any:
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (types.UnionType, typing.Union):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if dataclasses.is_dataclass(hint) and isinstance(hint, type):
        return _build(hint, value, path)
    if isinstance(hint, type) and issubclass(hint, Enum):
        try:
            return hint(value)
        except ValueError:
            choices = ", ".join(str(m.value) for m in hint)
            raise ConfigLoadError(f"{path}: {value!r} is not one of {choices}") from None
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigLoadError(f"{path}: expected a list, got {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigLoadError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigLoadError(f"{path}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigLoadError(f"{path}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigLoadError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigLoadError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigLoadError(f"{path}: unsupported field type {hint!r}")


def _plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.init}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (tuple, list)):
        return [_plain(v) for v in obj]
    return obj


def _require(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigLoadError(f"{path}: {message}")


def _validate(config: RunConfig) -> None:
    """Re-check the constraints each module enforces, reported by key path."""
    _require(0 <= config.seed < _MAX_SEED, "seed", "must be an unsigned 64-bit integer")
    _require(config.threads is None or config.threads >= 1, "threads", "must be at least 1")

    p = config.particles
    _require(p.n >= 1, "particles.n", "must be positive")
    _require(p.m >= 1, "particles.m", "must be positive")
    _require(p.dt > 0.0, "particles.dt", "must be positive")
    _require(p.t_end >= 0.0, "particles.t_end", "must be non-negative")
    if p.epsilon is not None:
        _require(0.0 < p.epsilon < 0.5, "particles.epsilon", "must lie in (0, 1/2)")
    if p.alpha is not None:
        _require(2.0 <= p.alpha <= 3.0, "particles.alpha", "must lie in [2, 3]")
    if config.mode is RunMode.KAC_BALL:
        _require(
            p.epsilon is not None or p.alpha is not None,
            "particles.epsilon",
            "kac-ball needs epsilon or alpha",
        )

    s = config.splitting
    if s.epsilon is not None:
        _require(s.epsilon > 0.0, "splitting.epsilon", "must be positive")
        _require(
            s.epsilon <= s.tau / MIN_SCALE_SEPARATION,
            "splitting.epsilon",
            f"epsilon={s.epsilon} violates epsilon <= tau/{MIN_SCALE_SEPARATION:g} "
            f"(tau={s.tau})",
        )
    _require(0.0 < s.tau <= MAX_TAU, "splitting.tau", f"must lie in (0, {MAX_TAU}]")
    if s.thermalization is ThermalizationKind.KAC:
        _require(s.epsilon is not None, "splitting.epsilon", "kac thermalization needs epsilon")
    if s.n_periods is not None:
        _require(s.n_periods >= 0, "splitting.n_periods", "must be non-negative")

    v = config.solver
    _require(v.dt > 0.0, "solver.dt", "must be positive")
    if v.t_end is not None:
        _require(v.t_end >= 0.0, "solver.t_end", "must be non-negative")
    try:
        grid = config.phase_space_grid()
    except (SolverError, InitialConditionError) as exc:
        raise ConfigLoadError(f"solver: {exc}") from exc
    coarsened = config.mode in (RunMode.COMPARE, RunMode.SWEEP)
    if config.relaxation_rate is RelaxationRate.CELL_INTEGRATED or coarsened:
        for m in (p.m, *config.sweep.m_values):
            _require(
                grid.m_x % m == 0,
                "solver.m_x",
                f"must be a multiple of the particle cells per side ({m})",
            )

    o = config.output
    _require(o.snapshot_interval > 0.0, "output.snapshot_interval", "must be positive")
    _require(o.histogram_bins >= 0, "output.histogram_bins", "must be non-negative")
    _require(o.histogram_axis in (0, 1, 2), "output.histogram_axis", "must be 0, 1 or 2")

    w = config.sweep
    _require(all(n >= 1 for n in w.n_values), "sweep.n_values", "entries must be positive")
    _require(all(0.0 < t <= MAX_TAU for t in w.tau_values), "sweep.tau_values", "out of range")
    for eps in w.epsilon_values:
        _require(
            all(eps <= t / MIN_SCALE_SEPARATION for t in w.tau_values),
            "sweep.epsilon_values",
            f"epsilon={eps} violates epsilon <= tau/{MIN_SCALE_SEPARATION:g}",
        )

    mc = config.microcanonical
    _require(all(n >= 2 for n in mc.n_values), "microcanonical.n_values", "entries must be >= 2")
    _require(mc.samples >= 1, "microcanonical.samples", "must be positive")
    _require(mc.T > 0.0, "microcanonical.T", "must be positive")
