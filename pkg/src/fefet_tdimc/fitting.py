"""Closed-form fit of per-mode drive presets to target delay steps.

The level spacing is ``ln(1/theta) * C_B * (R_slow - R_fast)`` where both
resistances are effective tail resistances (CAM || leaker + pull-down). With
V_H fixed the bank capacitance follows by division; with C_B fixed the
required on-resistance, and hence V_H, follows by inverting the parallel
combinations.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal, Mapping

from .array import CamCell
from .device import DeviceParams, FeFetGeometry, FeFetState
from .ops import MacroState, ModePreset
from .timing import (
    DRIVE_MAX,
    DRIVE_MIN,
    DelayStageConfig,
    StageDrive,
    cam_resistance,
    effective_resistance,
    leaker_resistance,
    rc_delay,
)

DEFAULT_TARGETS = {"and": 550e-12, "xor": 1.3e-9}


class TargetUnreachable(ValueError):
    pass


@dataclass(frozen=True)
class StagePair:
    """Short and long stage delays of one mode at nominal parameters."""

    t_fast: float
    t_slow: float

    @property
    def step(self) -> float:
        return self.t_slow - self.t_fast


def _canonical(mode: str, v_h: float, geometry: FeFetGeometry, params: DeviceParams,
               lvt_vt: float | None):
    lvt = FeFetState.saturated(geometry, params, 1)
    if lvt_vt is not None:
        lvt = lvt.with_geometry(geometry.shifted(lvt_vt - geometry.vt_min))
    hvt = FeFetState.saturated(geometry, params, -1)
    if mode not in ("xor", "and"):
        raise ValueError(f"unknown mode {mode!r}")
    # W=1 cell: a match drives the LVT main device at V_H; the X=0 mismatch
    # leaves both devices off (every mismatch does while V_H < vt_max)
    one = CamCell(main=lvt, complement=hvt)
    fast = (one, StageDrive(v_h, 0.0))
    slow = (one, StageDrive(0.0, 0.0))
    return fast, slow


def _check_vh(v_h: float, geometry: FeFetGeometry, lvt_vt: float):
    if not DRIVE_MIN <= v_h <= DRIVE_MAX:
        raise TargetUnreachable(f"V_H {v_h:.4f} V outside drive range [{DRIVE_MIN}, {DRIVE_MAX}] V")
    if v_h <= lvt_vt:
        raise TargetUnreachable(f"V_H {v_h:.4f} V does not turn on the LVT device (vt {lvt_vt:.3f} V)")
    if v_h >= geometry.vt_max:
        raise TargetUnreachable(f"V_H {v_h:.4f} V would turn on HVT devices (vt {geometry.vt_max:.3f} V)")


def stage_pair(stage: DelayStageConfig, mode: str, v_h: float, geometry: FeFetGeometry,
               params: DeviceParams, lvt_vt: float | None = None) -> StagePair:
    (fc, fd), (sc, sd) = _canonical(mode, v_h, geometry, params, lvt_vt)
    return StagePair(rc_delay(stage, effective_resistance(stage, cam_resistance(fc, fd))),
                     rc_delay(stage, effective_resistance(stage, cam_resistance(sc, sd))))


def tdc_alignment(pair: StagePair, n_stages: int) -> tuple[float, float]:
    """(step, shift) putting reference i midway between levels i and i+1."""
    fastest = n_stages * pair.t_fast
    return pair.step, fastest - 0.5 * pair.step


def fit_parameters(stage: DelayStageConfig, geometry: FeFetGeometry, params: DeviceParams,
                   n_stages: int, targets: Mapping[str, float] | None = None,
                   v_h: float | Mapping[str, float] = 0.65,
                   solve_for: Literal["c_bank", "v_h"] = "c_bank",
                   lvt_vt: float | None = None) -> dict[str, ModePreset]:
    """Per-mode presets whose level spacing equals ``targets`` exactly.

    ``solve_for="c_bank"`` keeps ``v_h`` and solves the bank capacitance;
    ``solve_for="v_h"`` keeps ``stage.c_bank`` and solves the high word-line
    level. ``lvt_vt`` is the threshold of conducting devices (defaults to
    the fully-LVT threshold; set it to the calibrated operating point).
    """
    targets = dict(DEFAULT_TARGETS if targets is None else targets)
    lvt = geometry.vt_min if lvt_vt is None else lvt_vt
    presets = {}
    for mode, ds in targets.items():
        if not ds > 0:
            raise TargetUnreachable(f"{mode}: target step must be positive, got {ds}")
        vh = v_h[mode] if isinstance(v_h, Mapping) else v_h
        if solve_for == "c_bank":
            _check_vh(vh, geometry, lvt)
            pair = stage_pair(replace(stage, c_bank=1.0), mode, vh, geometry, params, lvt_vt)
            # delay is affine in C_B with zero-capacitance offset t_intr
            c_bank = ds / pair.step
            cfg = replace(stage, c_bank=c_bank)
        elif solve_for == "v_h":
            cfg = stage
            vh = _solve_vh(cfg, mode, ds, geometry, params, lvt)
        else:
            raise ValueError(f"solve_for must be 'c_bank' or 'v_h', got {solve_for!r}")
        pair = stage_pair(cfg, mode, vh, geometry, params, lvt_vt)
        step, shift = tdc_alignment(pair, n_stages)
        presets[mode] = ModePreset(v_h=vh, c_bank=cfg.c_bank, tdc_step=step, tdc_shift=shift)
    return presets


def _solve_vh(cfg: DelayStageConfig, mode: str, ds: float, geometry: FeFetGeometry,
              params: DeviceParams, lvt: float) -> float:
    _, (sc, sd) = _canonical(mode, 0.0, geometry, params, None)
    r_slow = effective_resistance(cfg, cam_resistance(sc, sd))
    r_fast = r_slow - ds / (cfg.crossing_factor * cfg.c_bank)
    r_par = r_fast - cfg.r_nmos
    if r_par <= 0:
        raise TargetUnreachable(f"{mode}: step {ds * 1e12:.1f} ps exceeds what C_B = "
                                f"{cfg.c_bank * 1e15:.2f} fF can produce")
    # peel the leaker and the off complement device off the parallel tail
    g_on = 1.0 / r_par - 1.0 / leaker_resistance(cfg) - 1.0 / params.r_off
    vh = lvt + g_on / (geometry.transconductance_k * geometry.aspect)
    _check_vh(vh, geometry, lvt)
    return vh


def apply_presets(state: MacroState, presets: Mapping[str, ModePreset]) -> MacroState:
    merged = dict(state.mode_presets)
    merged.update(presets)
    return replace(state, mode_presets=merged)
