"""
test_config.py — Unit tests for src/infrastructure/config.py
"""
from __future__ import annotations

import json
from collections.abc import Callable
from pathlib import Path
from typing import Any

import pytest

from src.domain.enums import (
    InitialConditionKind,
    RelaxationRate,
    RunMode,
    SpatialMode,
    ThermalizationKind,
)
from src.domain.phase_space import default_v_max
from src.infrastructure.config import ConfigLoadError, RunConfig, load_config
from src.Tests.fixtures.sample_ensembles import make_config_dict


def _from(**overrides: Any) -> RunConfig:
    return RunConfig.from_dict(make_config_dict(**overrides))


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


class TestConfigLoad:
    def test_empty_mapping_gives_defaults(self, tmp_path: Path) -> None:
        """An empty document yields the default configuration."""
        path = tmp_path / "run.json"
        path.write_text("{}", encoding="utf-8")
        config = RunConfig.load(path)
        assert config == RunConfig()
        assert config.mode is RunMode.SPLITTING
        assert config.particles.n == 10_000
        assert config.splitting.thermalization is ThermalizationKind.MICROCANONICAL_LIMIT

    def test_empty_file_gives_defaults(self, tmp_path: Path) -> None:
        """A blank file is an empty YAML document."""
        path = tmp_path / "run.yaml"
        path.write_text("", encoding="utf-8")
        assert RunConfig.load(path) == RunConfig()

    def test_json_document(self, write_config: Callable[..., Path]) -> None:
        """Values from the JSON document override the defaults."""
        config = RunConfig.load(write_config())
        assert config.seed == 7
        assert config.particles.n == 400
        assert config.particles.m == 2
        assert config.initial.kind is InitialConditionKind.DENSITY_WAVE
        assert config.initial.amplitude == 0.2
        # untouched fields keep their defaults
        assert config.particles.dt == 1e-3

    def test_yaml_document(self, tmp_path: Path) -> None:
        """YAML is accepted when the text is not JSON."""
        path = tmp_path / "run.yaml"
        path.write_text(
            "mode: kac-cell\nseed: 3\nparticles:\n  n: 50\n  dt: 0.005\n", encoding="utf-8"
        )
        config = RunConfig.load(path)
        assert config.mode is RunMode.KAC_CELL
        assert config.particles.dt == 0.005

    def test_exponent_literal_in_json(self, tmp_path: Path) -> None:
        """JSON exponent literals load as floats."""
        path = tmp_path / "run.json"
        path.write_text('{"particles": {"dt": 1e-3}}', encoding="utf-8")
        assert RunConfig.load(path).particles.dt == pytest.approx(1e-3)

    def test_load_config_alias(self, write_config: Callable[..., Path]) -> None:
        path = write_config()
        assert load_config(path) == RunConfig.load(path)

    def test_missing_file(self, tmp_path: Path) -> None:
        """A missing file is a configuration error, not an OSError."""
        with pytest.raises(ConfigLoadError, match="cannot read"):
            RunConfig.load(tmp_path / "absent.json")

    def test_malformed_document(self, tmp_path: Path) -> None:
        """Text that is neither JSON nor YAML is rejected."""
        path = tmp_path / "run.yaml"
        path.write_text("particles:\n  n: [unclosed\n", encoding="utf-8")
        with pytest.raises(ConfigLoadError, match="Failed to parse"):
            RunConfig.load(path)

    def test_non_mapping_document(self, tmp_path: Path) -> None:
        path = tmp_path / "run.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigLoadError, match="Expected a mapping"):
            RunConfig.load(path)


# ---------------------------------------------------------------------------
# Key paths in error messages
# ---------------------------------------------------------------------------


class TestConfigErrors:
    @pytest.mark.parametrize(
        ("data", "prefix"),
        [
            ({"bogus": 1}, "bogus: unknown key"),
            ({"particles": {"nn": 1}}, "particles.nn: unknown key"),
            ({"mode": "kac"}, "mode: 'kac' is not one of"),
            ({"particles": {"n": "ten"}}, "particles.n: expected an integer"),
            ({"particles": {"n": True}}, "particles.n: expected an integer"),
            ({"particles": {"dt": "fast"}}, "particles.dt: expected a number"),
            ({"output": {"dump_fields": 1}}, "output.dump_fields: expected true/false"),
            ({"output": {"ks_cells": 3}}, "output.ks_cells: expected a list"),
            ({"initial": {"u": [0, 0]}}, "initial.u: expected 3 entries"),
            ({"particles": []}, "particles: expected a mapping"),
            ({"initial": {"kind": "density-wave", "amplitude": 2.0}}, "initial: density-wave"),
        ],
        ids=[
            "unknown-root",
            "unknown-nested",
            "bad-enum",
            "string-int",
            "bool-int",
            "string-float",
            "int-bool",
            "scalar-list",
            "short-tuple",
            "list-section",
            "section-constructor",
        ],
    )
    def test_message_starts_with_key_path(self, data: dict[str, Any], prefix: str) -> None:
        with pytest.raises(ConfigLoadError) as exc_info:
            RunConfig.from_dict(data)
        assert str(exc_info.value).startswith(prefix)

    @pytest.mark.parametrize(
        ("overrides", "key"),
        [
            ({"seed": -1}, "seed"),
            ({"seed": 2**64}, "seed"),
            ({"threads": 0}, "threads"),
            ({"particles": {"n": 0}}, "particles.n"),
            ({"particles": {"dt": 0.0}}, "particles.dt"),
            ({"particles": {"epsilon": 0.5}}, "particles.epsilon"),
            ({"particles": {"alpha": 1.5}}, "particles.alpha"),
            ({"mode": "kac-ball"}, "particles.epsilon"),
            ({"splitting": {"tau": 0.2}}, "splitting.tau"),
            ({"splitting": {"tau": 0.02, "epsilon": 0.01}}, "splitting.epsilon"),
            ({"splitting": {"tau": 0.02, "thermalization": "kac"}}, "splitting.epsilon"),
            ({"splitting": {"n_periods": -1}}, "splitting.n_periods"),
            ({"solver": {"dt": -0.1}}, "solver.dt"),
            ({"solver": {"m_x": 8, "m_v": 2}}, "solver"),
            ({"mode": "compare", "solver": {"m_x": 9, "m_v": 9}}, "solver.m_x"),
            ({"output": {"snapshot_interval": 0}}, "output.snapshot_interval"),
            ({"output": {"histogram_axis": 3}}, "output.histogram_axis"),
            ({"sweep": {"n_values": [0]}}, "sweep.n_values"),
            ({"sweep": {"epsilon_values": [0.01]}}, "sweep.epsilon_values"),
            ({"microcanonical": {"n_values": [1]}}, "microcanonical.n_values"),
            ({"microcanonical": {"T": 0.0}}, "microcanonical.T"),
        ],
        ids=lambda v: v if isinstance(v, str) else None,
    )
    def test_constraint_violations(self, overrides: dict[str, Any], key: str) -> None:
        """Each violated constraint names the key at fault."""
        with pytest.raises(ConfigLoadError) as exc_info:
            _from(**overrides)
        assert str(exc_info.value).startswith(f"{key}:")

    def test_separation_message_quotes_values(self) -> None:
        """A scale-separation failure reports both epsilon and tau."""
        with pytest.raises(ConfigLoadError, match=r"epsilon=0\.01 .*tau=0\.02"):
            _from(splitting={"tau": 0.02, "epsilon": 0.01})


# ---------------------------------------------------------------------------
# Derived values
# ---------------------------------------------------------------------------


class TestConfigDerived:
    def test_periods_from_horizon(self) -> None:
        """Periods default to ⌈t_end/τ⌉."""
        assert _from().n_periods == 3
        assert _from(particles={"t_end": 0.05}).n_periods == 3

    def test_explicit_periods(self) -> None:
        assert _from(splitting={"tau": 0.02, "n_periods": 7}).n_periods == 7

    @pytest.mark.parametrize(
        ("mode", "expected"),
        [
            ("splitting", RelaxationRate.POINTWISE),
            ("bgk-solve", RelaxationRate.POINTWISE),
            ("compare", RelaxationRate.CELL_INTEGRATED),
            ("sweep", RelaxationRate.CELL_INTEGRATED),
        ],
        ids=["splitting", "solve", "compare", "sweep"],
    )
    def test_default_rate(self, mode: str, expected: RelaxationRate) -> None:
        """Particle comparisons default to the cell-integrated rate."""
        assert _from(mode=mode).relaxation_rate is expected

    def test_explicit_rate_wins(self) -> None:
        config = _from(mode="compare", solver={"m_x": 8, "m_v": 9, "rate": "pointwise"})
        assert config.relaxation_rate is RelaxationRate.POINTWISE

    def test_solver_horizon(self) -> None:
        """The solver runs to the particle horizon unless told otherwise."""
        assert _from().solver_t_end == 0.06
        assert _from(solver={"m_x": 8, "m_v": 9, "t_end": 0.5}).solver_t_end == 0.5

    def test_phase_space_grid_defaults_v_max(self) -> None:
        """v_max follows the hottest initial temperature."""
        config = _from(initial={"kind": "two-temperature-slab", "T_left": 1.0, "T_right": 4.0})
        grid = config.phase_space_grid()
        assert grid.v_max == pytest.approx(default_v_max(4.0))
        assert grid.spatial is SpatialMode.SLAB
        assert (grid.m_x, grid.m_v) == (8, 9)

    def test_explicit_v_max(self) -> None:
        config = _from(solver={"m_x": 8, "m_v": 9, "v_max": 5.0})
        assert config.phase_space_grid().v_max == 5.0


# ---------------------------------------------------------------------------
# Overrides and persistence
# ---------------------------------------------------------------------------


class TestConfigOverrides:
    def test_overrides_replace_values(self) -> None:
        config = _from().with_overrides(seed=11, threads=2, mode=RunMode.COMPARE)
        assert (config.seed, config.threads, config.mode) == (11, 2, RunMode.COMPARE)

    def test_none_keeps_values(self) -> None:
        base = _from()
        assert base.with_overrides() == base

    def test_overrides_are_validated(self) -> None:
        """A mode override re-checks the grid compatibility."""
        base = _from(solver={"m_x": 9, "m_v": 9})
        with pytest.raises(ConfigLoadError, match="solver.m_x"):
            base.with_overrides(mode=RunMode.COMPARE)


class TestConfigRoundTrip:
    def test_save_then_load_is_equal(self, tmp_path: Path) -> None:
        """save followed by load returns an equal config."""
        config = _from(output={"snapshot_interval": 0.02, "ks_cells": [0, 3]})
        path = tmp_path / "effective.json"
        RunConfig.save(config, path)
        assert RunConfig.load(path) == config

    def test_saved_keys_are_sorted_and_plain(self, tmp_path: Path) -> None:
        """The saved document holds every key, enums as their values."""
        path = tmp_path / "effective.json"
        RunConfig.save(_from(), path)
        text = path.read_text(encoding="utf-8")
        data = json.loads(text)
        assert list(data) == sorted(data)
        assert data["mode"] == "splitting"
        assert data["initial"]["kind"] == "density-wave"
        assert data["sweep"]["m_values"] == [4]
        assert text.endswith("\n")

    def test_to_dict_includes_defaults(self) -> None:
        data = RunConfig().to_dict()
        assert data["solver"]["interpolation"] == "linear"
        assert data["particles"]["epsilon"] is None
