"""Compute modes of the macro: XOR-MAC, AND-MAC, Boolean logic, full adder.

Every operation grounds one bit line, drives the column word lines from the
activations, accumulates the chain delay and digitizes it with the mode's
TDC references. The binary code counts slow (long-delay) stages, so decoding
is plain arithmetic on that count.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal, Mapping, Sequence

import numpy as np

from .array import CamArray
from .tdc import (
    TdcConfig,
    ThermometerCode,
    digitize,
    generate_references,
    perturb_references,
    therm_to_binary,
)
from .timing import (
    ChainResult,
    DelayStageConfig,
    StageDrive,
    VariabilityModel,
    cam_resistance,
    chain_delay,
    leaker_resistance,
    sample_perturbations,
)

Mode = Literal["xor", "and"]


@dataclass(frozen=True)
class ModePreset:
    v_h: float
    c_bank: float
    tdc_step: float
    tdc_shift: float


@dataclass(frozen=True)
class MacroState:
    array: CamArray
    stage_cfgs: tuple[DelayStageConfig, ...]
    tdc_cfg: TdcConfig
    variability: VariabilityModel = field(default_factory=VariabilityModel)
    mode_presets: Mapping[str, ModePreset] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "stage_cfgs", tuple(self.stage_cfgs))
        if len(self.stage_cfgs) != self.array.cols:
            raise ValueError(f"{len(self.stage_cfgs)} stage configs for {self.array.cols} columns")

    @property
    def n_stages(self) -> int:
        return self.array.cols

    def preset(self, mode: str) -> ModePreset:
        try:
            return self.mode_presets[mode]
        except KeyError:
            raise ValueError(f"no preset for mode {mode!r}; run the parameter fit first") from None

    def stages_for(self, mode: str) -> tuple[DelayStageConfig, ...]:
        c = self.preset(mode).c_bank
        return tuple(replace(cfg, c_bank=c) for cfg in self.stage_cfgs)

    def tdc_for(self, mode: str) -> TdcConfig:
        p = self.preset(mode)
        return replace(self.tdc_cfg, step_s=p.tdc_step, shift_s=p.tdc_shift)

    def with_array(self, array: CamArray) -> "MacroState":
        return replace(self, array=array)


@dataclass(frozen=True)
class MacResult:
    total_delay: float
    thermometer: ThermometerCode
    tdc_code: int
    decoded_value: int
    per_stage_trace: tuple[float, ...]


def _check_activations(state: MacroState, activations) -> np.ndarray:
    x = np.asarray(activations, dtype=int)
    if x.shape != (state.n_stages,):
        raise ValueError(f"expected {state.n_stages} activations, got shape {x.shape}")
    if not np.isin(x, (0, 1)).all():
        raise ValueError("activations must be 0/1")
    return x


def evaluate(state: MacroState, row: int, mode: str, drives: Sequence[StageDrive],
             rng: np.random.Generator | None = None) -> tuple[ChainResult, ThermometerCode]:
    """Run one input pulse through the chain and sample it with the TDC.

    Only the grounded row takes part; floating rows add no conductance. With
    ``rng`` the state's variability model perturbs stages, the output edge
    and the references.
    """
    array = state.array.select_row(row)
    if array.selected_row is None:
        raise ValueError("no row selected")
    cells = array.row_cells(array.selected_row)
    cfgs = state.stages_for(mode)
    tdc = state.tdc_for(mode)
    if tdc.n_refs < state.n_stages:
        raise ValueError(f"TDC has {tdc.n_refs} references, need at least {state.n_stages}")
    refs = generate_references(tdc)
    var = state.variability
    if rng is None or var.is_zero:
        chain = chain_delay(cfgs, cells, drives)
        return chain, digitize(chain.total, refs)
    short = [cam_resistance(c, d) < leaker_resistance(cfg) for c, d, cfg in zip(cells, drives, cfgs)]
    pert, jit = sample_perturbations(var, short, rng)
    chain = chain_delay(cfgs, cells, drives, list(pert), float(jit))
    refs = perturb_references(refs, var.sigma_tdc, rng)
    return chain, digitize(chain.total, refs, check_sorted=False)


def _mac(state, row, mode, drives, rng, decode) -> MacResult:
    chain, therm = evaluate(state, row, mode, drives, rng)
    code = therm_to_binary(therm)
    return MacResult(chain.total, therm, code, decode(code), chain.per_stage)


def xor_mac(state: MacroState, row: int, activations,
            rng: np.random.Generator | None = None) -> MacResult:
    """Bipolar MAC: +1 per matching bit, -1 per mismatch."""
    x = _check_activations(state, activations)
    vh = state.preset("xor").v_h
    drives = [StageDrive(v_wl=xi * vh, v_wlbar=(1 - xi) * vh) for xi in x]
    m = state.n_stages
    return _mac(state, row, "xor", drives, rng, lambda code: m - 2 * code)


def and_mac(state: MacroState, row: int, activations,
            rng: np.random.Generator | None = None) -> MacResult:
    """Unipolar MAC: popcount(X AND W). The complement WL stays grounded."""
    x = _check_activations(state, activations)
    vh = state.preset("and").v_h
    drives = [StageDrive(v_wl=xi * vh, v_wlbar=0.0) for xi in x]
    m = state.n_stages
    return _mac(state, row, "and", drives, rng, lambda code: m - code)


def _column_subset(state: MacroState, cols) -> list[int]:
    cols = [int(c) for c in cols]
    if not cols:
        raise ValueError("empty column subset")
    if len(set(cols)) != len(cols):
        raise ValueError("duplicate columns in subset")
    for c in cols:
        if not 0 <= c < state.n_stages:
            raise IndexError(f"column {c} out of range")
    return cols


def _select_drives(state: MacroState, cols: Sequence[int]) -> list[StageDrive]:
    vh = state.preset("and").v_h
    return [StageDrive(v_wl=vh if i in cols else 0.0, v_wlbar=0.0) for i in range(state.n_stages)]


def bool_logic(state: MacroState, row: int, cols, op: str,
               rng: np.random.Generator | None = None) -> int:
    """In-memory AND / OR over the stored bits of ``cols`` in ``row``.

    Unselected columns are held slow, so the all-ones AND case lands exactly
    on level M-k and is read from reference M-k; the all-zeros OR case is
    the slowest level, read from the last reference.
    """
    cols = _column_subset(state, cols)
    if op not in ("and", "or"):
        raise ValueError(f"unknown logic op {op!r}")
    _, therm = evaluate(state, row, "and", _select_drives(state, cols), rng)
    m = state.n_stages
    if op == "and":
        return 1 - therm.bits[m - len(cols)]
    return 1 - therm.bits[m - 1]


def full_adder(state: MacroState, row: int, cols,
               rng: np.random.Generator | None = None) -> tuple[int, int]:
    """(sum, carry) of the three stored bits in ``cols``."""
    cols = _column_subset(state, cols)
    if len(cols) != 3:
        raise ValueError(f"full adder needs exactly 3 columns, got {len(cols)}")
    chain, therm = evaluate(state, row, "and", _select_drives(state, cols), rng)
    p = state.n_stages - therm_to_binary(therm)
    return p % 2, int(p >= 2)
