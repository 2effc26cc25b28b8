"""
Text output formats.

Diagnostics CSV: the header line is :data:`~thermotumor.diagnostics.CSV_HEADER`
and every value is written with 17 significant digits, which round-trips
IEEE doubles exactly.

Snapshots: one file per field and index.  Line 1 holds
``dim nx ny nz hx hy hz t`` (unused axes written as ``1`` and ``0``), then the
cell values in row-major order of the ``(nx, ny, nz)`` array, one per line.
"""

from __future__ import annotations

from pathlib import Path
from typing import IO, TYPE_CHECKING, Iterable

import numpy as np

from .diagnostics import CSV_HEADER, DiagnosticsRow
from .lattice import GridSpec

if TYPE_CHECKING:
    from .dynamics import SimState

FIELDS = ("phi", "theta", "sigma")


def fmt(v: float) -> str:
    return format(float(v), ".17g")


class DiagnosticsWriter:
    """Streams rows to a CSV file; the header is written on open."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh: IO[str] = self.path.open("w", encoding="utf-8", newline="")
        except OSError as exc:
            raise OSError(f"cannot open diagnostics file {self.path}: {exc}") from exc
        self._fh.write(CSV_HEADER + "\n")

    def write(self, row: DiagnosticsRow) -> None:
        self._fh.write(",".join(fmt(v) for v in row.values()) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> DiagnosticsWriter:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_diagnostics(rows: Iterable[DiagnosticsRow], path: str | Path) -> Path:
    with DiagnosticsWriter(path) as w:
        for row in rows:
            w.write(row)
    return Path(path)


def read_diagnostics(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Header names and an ``(n_rows, n_cols)`` array of values."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(header))
    return header, data


def snapshot_header(grid: GridSpec, t: float) -> str:
    cells = list(grid.cells) + [1] * (3 - grid.dim)
    spacing = list(grid.spacing) + [0.0] * (3 - grid.dim)
    return " ".join([str(grid.dim)] + [str(n) for n in cells] + [fmt(h) for h in spacing] + [fmt(t)])


def write_field(path: str | Path, grid: GridSpec, values: np.ndarray, t: float) -> Path:
    path = Path(path)
    body = "\n".join(fmt(v) for v in np.asarray(values).ravel(order="C"))
    try:
        path.write_text(snapshot_header(grid, t) + "\n" + body + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write snapshot {path}: {exc}") from exc
    return path


def write_snapshot(state: SimState, index: int, out_dir: str | Path) -> list[Path]:
    """Write ``phi_XXXXXX.txt``, ``theta_XXXXXX.txt`` and ``sigma_XXXXXX.txt``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [
        write_field(out_dir / f"{name}_{index:06d}.txt", state.grid, getattr(state, name).values, state.t)
        for name in FIELDS
    ]


def read_field(path: str | Path) -> tuple[GridSpec, float, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = lines[0].split()
    dim = int(head[0])
    cells = tuple(int(v) for v in head[1:4])[:dim]
    spacing = tuple(float(v) for v in head[4:7])[:dim]
    grid = GridSpec(cells, spacing)
    values = np.array([float(v) for v in lines[1:]]).reshape(grid.shape)
    return grid, float(head[7]), values
