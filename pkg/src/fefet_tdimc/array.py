"""C-AND CAM array with bulk-assisted write-disturb prevention.

Word lines (WL and its complement) and select lines run along columns; bit
lines and bulk lines run along rows, each row sitting in its own triple well.
Programming is column-wide; erase and partial erase address one device and
protect the rest of the column by pulling the other rows' bulk to -2 V.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .device import (
    DeviceParams,
    FeFetGeometry,
    FeFetState,
    WritePulse,
    apply_write_pulse,
)

Which = Literal["main", "complement"]
Mode = Literal["xor", "and"]

V_PROGRAM = 4.0
V_ERASE = -4.0
V_PROTECT = -2.0
GROUNDED = "grounded"
HIZ = "hiz"


@dataclass(frozen=True)
class CamCell:
    main: FeFetState
    complement: FeFetState

    def device(self, which: Which) -> FeFetState:
        if which == "main":
            return self.main
        if which == "complement":
            return self.complement
        raise ValueError(f"unknown device {which!r}")

    def with_device(self, which: Which, state: FeFetState) -> "CamCell":
        if which == "main":
            return replace(self, main=state)
        if which == "complement":
            return replace(self, complement=state)
        raise ValueError(f"unknown device {which!r}")


@dataclass(frozen=True)
class DisturbModel:
    """Optional stochastic disturb: Gaussian noise (volts) added to the
    gate-to-bulk voltage seen by protected devices. Off unless passed in."""

    sigma_v: float
    rng: np.random.Generator


@dataclass(frozen=True)
class CamArray:
    cells: tuple[tuple[CamCell, ...], ...]
    row_bul: tuple[float, ...]
    row_bl_mode: tuple[str, ...]

    def __post_init__(self):
        n = len(self.cells)
        if n == 0 or any(len(r) != len(self.cells[0]) for r in self.cells) or not self.cells[0]:
            raise ValueError("cells must form a non-empty rectangular grid")
        if len(self.row_bul) != n or len(self.row_bl_mode) != n:
            raise ValueError("row line state must have one entry per row")

    @classmethod
    def blank(cls, rows: int, cols: int, geometry: FeFetGeometry | None = None,
              params: DeviceParams | None = None, sign: int = -1) -> "CamArray":
        """Array with every device saturated; HVT by default (fresh erase)."""
        if rows < 1 or cols < 1:
            raise ValueError("array dimensions must be positive")
        dev = FeFetState.saturated(geometry, params, sign=sign)
        cell = CamCell(dev, dev)
        grid = tuple(tuple(cell for _ in range(cols)) for _ in range(rows))
        return cls(grid, (0.0,) * rows, (HIZ,) * rows)

    @property
    def rows(self) -> int:
        return len(self.cells)

    @property
    def cols(self) -> int:
        return len(self.cells[0])

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def cell(self, row: int, col: int) -> CamCell:
        self._check(row, col)
        return self.cells[row][col]

    def _check(self, row: int | None = None, col: int | None = None):
        if row is not None and not 0 <= row < self.rows:
            raise IndexError(f"row {row} out of range for {self.rows} rows")
        if col is not None and not 0 <= col < self.cols:
            raise IndexError(f"column {col} out of range for {self.cols} columns")

    def select_row(self, row: int) -> "CamArray":
        """Ground one BL and float all others."""
        self._check(row=row)
        modes = tuple(GROUNDED if r == row else HIZ for r in range(self.rows))
        return replace(self, row_bl_mode=modes)

    @property
    def selected_row(self) -> int | None:
        grounded = [r for r, m in enumerate(self.row_bl_mode) if m == GROUNDED]
        if len(grounded) != 1:
            return None
        return grounded[0]

    def row_cells(self, row: int) -> tuple[CamCell, ...]:
        self._check(row=row)
        return self.cells[row]

    def with_cell(self, row: int, col: int, cell: CamCell) -> "CamArray":
        self._check(row, col)
        grid = [list(r) for r in self.cells]
        grid[row][col] = cell
        return replace(self, cells=tuple(tuple(r) for r in grid))

    def devices(self) -> Iterable[tuple[int, int, Which, FeFetState]]:
        for r, row in enumerate(self.cells):
            for c, cell in enumerate(row):
                yield r, c, "main", cell.main
                yield r, c, "complement", cell.complement

    def vt_grid(self, which: Which = "main") -> np.ndarray:
        return np.array([[cell.device(which).effective_vt for cell in row] for row in self.cells])


def _pulse_column(array: CamArray, col: int, pulses: dict[tuple[int, Which], WritePulse],
                  disturb: DisturbModel | None = None,
                  protected: Sequence[tuple[int, Which]] = ()) -> CamArray:
    grid = [list(r) for r in array.cells]
    for (row, which), pulse in pulses.items():
        if disturb is not None and (row, which) in protected and disturb.sigma_v > 0:
            pulse = replace(pulse, v_bul=pulse.v_bul + float(disturb.rng.normal(0.0, disturb.sigma_v)))
        cell = grid[row][col]
        grid[row][col] = cell.with_device(which, apply_write_pulse(cell.device(which), pulse))
    return replace(array, cells=tuple(tuple(r) for r in grid))


def program_column(array: CamArray, col: int) -> CamArray:
    """+4 V on the column's WL and complement WL, every bulk at 0 V.

    Rows cannot be isolated during programming, so every device in the
    column ends up LVT.
    """
    array._check(col=col)
    pulse = WritePulse(v_wl=V_PROGRAM, v_bul=0.0)
    pulses = {(r, w): pulse for r in range(array.rows) for w in ("main", "complement")}
    return _pulse_column(array, col, pulses)


def program_all(array: CamArray) -> CamArray:
    for col in range(array.cols):
        array = program_column(array, col)
    return array


def _erase_pulses(array: CamArray, row: int, which: Which, v_bul: float):
    """Line voltages for a (partial) erase of one device.

    The targeted gate line sits at -4 V, the other gate line of the column at
    0 V. The target row's bulk is at ``v_bul``; every other row is protected
    at -2 V.
    """
    other: Which = "complement" if which == "main" else "main"
    pulses = {}
    protected = []
    for r in range(array.rows):
        bul = v_bul if r == row else V_PROTECT
        pulses[(r, which)] = WritePulse(v_wl=V_ERASE, v_bul=bul)
        pulses[(r, other)] = WritePulse(v_wl=0.0, v_bul=bul)
        if r != row:
            protected += [(r, which), (r, other)]
    return pulses, protected


def erase_cell(array: CamArray, row: int, col: int, which: Which,
               disturb: DisturbModel | None = None) -> CamArray:
    array._check(row, col)
    pulses, protected = _erase_pulses(array, row, which, 0.0)
    return _pulse_column(array, col, pulses, disturb, protected)


def partial_erase(array: CamArray, row: int, col: int, which: Which, v_bul: float,
                  disturb: DisturbModel | None = None) -> CamArray:
    """Erase with the target bulk raised to ``v_bul`` in [-2, 0] V.

    -2 V matches the protection bias and switches nothing; 0 V is a full erase.
    """
    array._check(row, col)
    if not V_PROTECT <= v_bul <= 0.0:
        raise ValueError(f"v_bul {v_bul} outside [-2, 0] V")
    pulses, protected = _erase_pulses(array, row, which, v_bul)
    return _pulse_column(array, col, pulses, disturb, protected)


def _as_weight_matrix(weights) -> np.ndarray:
    w = np.asarray(weights)
    if w.ndim != 2:
        raise ValueError("weights must be a 2-D matrix")
    if not np.isin(w, (0, 1)).all():
        raise ValueError("weights must be 0/1")
    return w.astype(int)


def erase_pattern(array: CamArray, weights, mode: Mode) -> CamArray:
    """Column-major selective erase of an all-LVT array to store ``weights``.

    W=1 keeps the main device LVT and erases the complement; W=0 erases the
    main device and keeps the complement LVT. AND mode uses the same layout
    (its complement WL is grounded during compute, so the complement never
    conducts).
    """
    if mode not in ("xor", "and"):
        raise ValueError(f"unknown mode {mode!r}")
    w = _as_weight_matrix(weights)
    if w.shape != array.shape:
        raise ValueError(f"weights shape {w.shape} does not match array {array.shape}")
    for col in range(array.cols):
        for row in range(array.rows):
            which: Which = "complement" if w[row, col] else "main"
            array = erase_cell(array, row, col, which)
    return array


def write_weights(array: CamArray, weights, mode: Mode) -> CamArray:
    """Global program to LVT followed by column-wise selective erase."""
    w = _as_weight_matrix(weights)
    if w.shape != array.shape:
        raise ValueError(f"weights shape {w.shape} does not match array {array.shape}")
    return erase_pattern(program_all(array), w, mode)


def read_weights(array: CamArray) -> np.ndarray:
    """Stored bit per cell: 1 when the main device sits below mid-window."""
    out = np.zeros(array.shape, dtype=int)
    for r, row in enumerate(array.cells):
        for c, cell in enumerate(row):
            g = cell.main.geometry
            out[r, c] = int(cell.main.effective_vt < 0.5 * (g.vt_min + g.vt_max))
    return out


def with_vt_offsets(array: CamArray, offsets, which: Which | None = None) -> CamArray:
    """Translate each device's memory window by a per-device offset.

    ``offsets`` has shape (rows, cols) when ``which`` names one device, or
    (rows, cols, 2) for (main, complement) otherwise.
    """
    off = np.asarray(offsets, dtype=float)
    grid = [list(r) for r in array.cells]
    for r in range(array.rows):
        for c in range(array.cols):
            cell = grid[r][c]
            pairs = [(which, off[r, c])] if which else [("main", off[r, c, 0]), ("complement", off[r, c, 1])]
            for w, d in pairs:
                dev = cell.device(w)
                cell = cell.with_device(w, dev.with_geometry(dev.geometry.shifted(float(d))))
            grid[r][c] = cell
    return replace(array, cells=tuple(tuple(r) for r in grid))


def load_weights_csv(path: str | Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not x.strip() for x in rec):
                continue
            try:
                vals = [int(x) for x in rec]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer weight in {rec}") from None
            if any(v not in (0, 1) for v in vals):
                raise ValueError(f"{path}:{lineno}: weights must be 0/1, got {vals}")
            rows.append(vals)
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValueError(f"{path}: weight matrix is empty or ragged")
    return np.array(rows, dtype=int)


def dump_vt_csv(array: CamArray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["row", "col", "device", "vt_V", "polarization"])
        for r, c, which, dev in array.devices():
            wr.writerow([r, c, which, f"{dev.effective_vt:.6f}", f"{dev.polarization:.6f}"])
