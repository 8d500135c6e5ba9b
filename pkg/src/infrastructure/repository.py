"""
src/infrastructure/repository.py

File formats of a run's output directory.

* NDJSON snapshot streams, one object per cell or node per snapshot, keys in
  the fixed order ``t, kind, id, rho, ux, uy, uz, T, n_particles``.
* CSV tables (convergence studies) with a header row.
* Flat binary dumps of solver fields: the 8-byte magic ``KBGKFLD1``, a
  little-endian header describing the phase-space grid, then the row-major
  float64 payload ``f[x-node, v-node]``.

Every writer produces byte-identical files for identical inputs.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import IO, Any

import numpy as np

from src.domain.enums import SpatialMode
from src.domain.hydro import Snapshot
from src.domain.phase_space import DistributionField, PhaseSpaceGrid

_DUMP_MAGIC = b"KBGKFLD1"
_DUMP_VERSION = 1
_SUPPORTED_VERSIONS: frozenset[int] = frozenset({1})
# version, spatial mode, m_x, m_v, axis, v_max, time, value count
_HEADER = struct.Struct("<IIIIIddQ")
_SPATIAL_CODES = {SpatialMode.SLAB: 0, SpatialMode.FULL: 1}


class OutputFormatError(Exception):
    """Raised when a binary dump is truncated, corrupt or of an unknown version."""


# ---------------------------------------------------------------------------
# Serialisation helpers
# ---------------------------------------------------------------------------


def _number(value: float) -> float | None:
    return None if not math.isfinite(value) else float(value)


def snapshot_records(snapshot: Snapshot) -> list[dict[str, Any]]:
    """One ordered record per cell or node of *snapshot*."""
    mom = snapshot.moments
    counts = mom.counts
    records: list[dict[str, Any]] = []
    for node in range(mom.n_nodes):
        records.append(
            {
                "t": float(snapshot.time),
                "kind": snapshot.kind.value,
                "id": node,
                "rho": _number(float(mom.rho[node])),
                "ux": _number(float(mom.u[node, 0])),
                "uy": _number(float(mom.u[node, 1])),
                "uz": _number(float(mom.u[node, 2])),
                "T": _number(float(mom.T[node])),
                "n_particles": None if counts is None else int(counts[node]),
            }
        )
    if snapshot.histogram is not None:
        hist = snapshot.histogram
        records.append(
            {
                "t": float(snapshot.time),
                "kind": "histogram",
                "axis": hist.axis,
                "edges": [float(e) for e in hist.edges],
                "counts": [int(c) for c in hist.counts],
            }
        )
    return records


def dumps_record(record: dict[str, Any]) -> str:
    """Compact, insertion-ordered JSON for one NDJSON line."""
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


# ---------------------------------------------------------------------------
# Binary field dumps
# ---------------------------------------------------------------------------


def dump_field(field: DistributionField, path: Path) -> Path:
    """Write *field* as a flat binary dump."""
    grid = field.grid
    header = _HEADER.pack(
        _DUMP_VERSION,
        _SPATIAL_CODES[grid.spatial],
        grid.m_x,
        grid.m_v,
        grid.axis,
        grid.v_max,
        field.time,
        field.values.size,
    )
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C")
    path.write_bytes(_DUMP_MAGIC + header + payload)
    return path


def load_field(path: Path) -> DistributionField:
    """Read a dump written by :func:`dump_field`.

    Raises:
        OutputFormatError: On a bad magic, unsupported version or size mismatch.
    """
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OutputFormatError(f"cannot read {path}: {exc}") from exc
    prefix = len(_DUMP_MAGIC) + _HEADER.size
    if len(raw) < prefix or raw[: len(_DUMP_MAGIC)] != _DUMP_MAGIC:
        raise OutputFormatError(f"{path} is not a field dump")
    version, spatial, m_x, m_v, axis, v_max, time, count = _HEADER.unpack_from(
        raw, len(_DUMP_MAGIC)
    )
    if version not in _SUPPORTED_VERSIONS:
        raise OutputFormatError(f"unsupported dump version {version} in {path}")
    modes = {code: mode for mode, code in _SPATIAL_CODES.items()}
    if spatial not in modes:
        raise OutputFormatError(f"unknown spatial mode code {spatial} in {path}")
    if len(raw) - prefix != 8 * count:
        raise OutputFormatError(
            f"{path}: payload holds {(len(raw) - prefix) // 8} values, header says {count}"
        )
    grid = PhaseSpaceGrid(spatial=modes[spatial], m_x=m_x, m_v=m_v, v_max=v_max, axis=axis)
    if grid.n_space * grid.n_velocity != count:
        raise OutputFormatError(f"{path}: value count {count} does not match the grid")
    values = np.frombuffer(raw, dtype="<f8", offset=prefix).astype(np.float64)
    return DistributionField(grid, values.reshape(grid.n_space, grid.n_velocity), time)


# ---------------------------------------------------------------------------
# Repository
# ---------------------------------------------------------------------------


class OutputRepository:
    """Writes the files of one run into *out_dir*.

    Args:
        out_dir: Output directory (created if missing).
    """

    def __init__(self, out_dir: Path) -> None:
        """Initialise the repository and create *out_dir*."""
        self._out_dir = out_dir
        self._out_dir.mkdir(parents=True, exist_ok=True)
        self._streams: dict[str, IO[str]] = {}

    @property
    def out_dir(self) -> Path:
        """The output directory."""
        return self._out_dir

    # ------------------------------------------------------------------
    # NDJSON
    # ------------------------------------------------------------------

    def _stream(self, name: str) -> IO[str]:
        if name not in self._streams:
            path = self._out_dir / f"{name}.ndjson"
            self._streams[name] = path.open("w", encoding="utf-8", newline="\n")
        return self._streams[name]

    def append_snapshot(self, name: str, snapshot: Snapshot) -> None:
        """Append the records of *snapshot* to ``<name>.ndjson``."""
        stream = self._stream(name)
        for record in snapshot_records(snapshot):
            stream.write(dumps_record(record) + "\n")

    def append_record(self, name: str, record: dict[str, Any]) -> None:
        """Append one arbitrary record to ``<name>.ndjson``."""
        self._stream(name).write(dumps_record(record) + "\n")

    def close(self) -> None:
        """Flush and close every open NDJSON stream."""
        for stream in self._streams.values():
            stream.close()
        self._streams.clear()

    def __enter__(self) -> OutputRepository:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    # ------------------------------------------------------------------
    # Other formats
    # ------------------------------------------------------------------

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """Write ``<name>.csv`` with a header row."""
        path = self._out_dir / f"{name}.csv"
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow(["" if isinstance(v, float) and math.isnan(v) else v for v in row])
        return path

    def write_json(self, name: str, data: dict[str, Any]) -> Path:
        """Write ``<name>.json`` with sorted keys."""
        path = self._out_dir / f"{name}.json"
        path.write_text(
            json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8"
        )
        return path

    def dump_field(self, name: str, field: DistributionField) -> Path:
        """Write ``<name>.bin`` via :func:`dump_field`."""
        return dump_field(field, self._out_dir / f"{name}.bin")
