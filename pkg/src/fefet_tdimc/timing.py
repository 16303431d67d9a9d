"""Stage delay of the current-starved inverter and chain accumulation.

The tail of each delay element is the CAM cell in parallel with an always-on
leaker NMOS, in series with the CSI pull-down. The fall delay is a single-pole
RC crossing of the restoring inverter threshold.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .array import CamCell
from .device import channel_resistance

DRIVE_MIN = -0.2
DRIVE_MAX = 1.8


class ConfigError(ValueError):
    pass


def parallel(*resistances: float) -> float:
    g = sum(0.0 if math.isinf(r) else 1.0 / r for r in resistances)
    return math.inf if g == 0 else 1.0 / g


@dataclass(frozen=True)
class LeakerGeometry:
    width_m: float = 90e-9
    length_m: float = 90e-9
    k: float = 100e-6
    vt: float = 0.4


@dataclass(frozen=True)
class DelayStageConfig:
    c_bank: float = 10e-15
    leaker: LeakerGeometry = field(default_factory=LeakerGeometry)
    v_leak: float = 0.5
    r_nmos: float = 1e3
    t_intr: float = 50e-12
    v_dd: float = 0.85
    threshold_fraction: float = 0.5

    def __post_init__(self):
        for name in ("c_bank", "r_nmos", "v_dd"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.t_intr < 0:
            raise ConfigError("t_intr must be non-negative")
        lk = self.leaker
        if not (lk.width_m > 0 and lk.length_m > 0 and lk.k > 0):
            raise ConfigError("leaker geometry must be positive")
        if not 0 < self.threshold_fraction < 1:
            raise ConfigError("threshold_fraction must be in (0, 1)")
        if not self.v_leak > lk.vt:
            raise ConfigError(f"v_leak ({self.v_leak} V) must exceed leaker vt ({lk.vt} V)")

    @property
    def crossing_factor(self) -> float:
        return math.log(1.0 / self.threshold_fraction)


@dataclass(frozen=True)
class StageDrive:
    v_wl: float
    v_wlbar: float

    def __post_init__(self):
        for v in (self.v_wl, self.v_wlbar):
            if not DRIVE_MIN <= v <= DRIVE_MAX:
                raise ValueError(f"drive {v} V outside [{DRIVE_MIN}, {DRIVE_MAX}] V")


@dataclass(frozen=True)
class VariabilityModel:
    """Stage-level timing noise.

    ``dl_window_s`` switches the short-delay term from Gaussian D2D spread to
    the post-calibration residual, uniform over a window of that width.
    ``sigma_vt`` is per-device threshold noise (volts) used when building
    arrays for calibration studies; it does not enter stage perturbations.
    """

    sigma_dl: float = 0.0
    sigma_dh: float = 0.0
    sigma_jit: float = 0.0
    sigma_tdc: float = 0.0
    seed: int = 0
    dl_window_s: float | None = None
    sigma_vt: float = 0.0

    def __post_init__(self):
        for name in ("sigma_dl", "sigma_dh", "sigma_jit", "sigma_tdc", "sigma_vt"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.dl_window_s is not None and self.dl_window_s < 0:
            raise ValueError("dl_window_s must be >= 0")

    @property
    def is_zero(self) -> bool:
        return (self.sigma_dl == self.sigma_dh == self.sigma_jit == self.sigma_tdc == 0
                and not self.dl_window_s)

    @property
    def sigma_short(self) -> float:
        if self.dl_window_s is not None:
            return self.dl_window_s / math.sqrt(12.0)
        return self.sigma_dl


def cam_resistance(cell: CamCell, drive: StageDrive) -> float:
    return parallel(channel_resistance(cell.main, drive.v_wl),
                    channel_resistance(cell.complement, drive.v_wlbar))


def leaker_resistance(cfg: DelayStageConfig) -> float:
    lk = cfg.leaker
    ov = cfg.v_leak - lk.vt
    if ov <= 0:
        raise ConfigError("leaker must conduct: v_leak must exceed its vt")
    return (lk.length_m / lk.width_m) / (lk.k * ov)


def effective_resistance(cfg: DelayStageConfig, r_cam: float) -> float:
    return parallel(r_cam, leaker_resistance(cfg)) + cfg.r_nmos


def rc_delay(cfg: DelayStageConfig, r_eff: float) -> float:
    """Intrinsic delay plus threshold crossing of the RC discharge."""
    return cfg.t_intr + cfg.crossing_factor * r_eff * cfg.c_bank


def stage_delay(cfg: DelayStageConfig, cell: CamCell, drive: StageDrive,
                perturbation: float = 0.0) -> float:
    t = rc_delay(cfg, effective_resistance(cfg, cam_resistance(cell, drive))) + perturbation
    # a draw can only eat into the stage so far; delay stays causal
    return max(t, 1e-15)


@dataclass(frozen=True)
class ChainResult:
    total: float
    per_stage: tuple[float, ...]

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.per_stage)


def chain_delay(cfgs: Sequence[DelayStageConfig], cells: Sequence[CamCell],
                drives: Sequence[StageDrive], perturbations: Sequence[float] | None = None,
                jitter: float = 0.0) -> ChainResult:
    n = len(cfgs)
    if len(cells) != n or len(drives) != n:
        raise ValueError(f"stage count mismatch: {n} configs, {len(cells)} cells, {len(drives)} drives")
    if perturbations is None:
        perturbations = (0.0,) * n
    elif len(perturbations) != n:
        raise ValueError("one perturbation per stage required")
    per = tuple(stage_delay(c, cell, d, p) for c, cell, d, p in zip(cfgs, cells, drives, perturbations))
    return ChainResult(total=sum(per) + jitter, per_stage=per)


def sample_perturbations(model: VariabilityModel, short: Sequence[bool],
                         rng: np.random.Generator, size: int | None = None):
    """Independent per-stage delay noise and one output-edge jitter draw.

    ``short`` flags the stages in the short-delay state. Returns
    ``(per_stage, jitter)``; with ``size`` both gain a leading trial axis.
    """
    short = np.asarray(short, dtype=bool)
    n = short.size
    shape = (n,) if size is None else (size, n)
    if model.dl_window_s is not None:
        half = 0.5 * model.dl_window_s
        dl = rng.uniform(-half, half, size=shape)
    else:
        dl = rng.normal(0.0, 1.0, size=shape) * model.sigma_dl
    dh = rng.normal(0.0, 1.0, size=shape) * model.sigma_dh
    per_stage = np.where(short, dl, dh)
    jitter = rng.normal(0.0, 1.0, size=None if size is None else (size,)) * model.sigma_jit
    return per_stage, jitter


def write_trace_csv(result: ChainResult, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["stage", "delay_ps", "cumulative_ps"])
        for i, (d, c) in enumerate(zip(result.per_stage, result.cumulative)):
            wr.writerow([i, f"{d * 1e12:.3f}", f"{c * 1e12:.3f}"])
