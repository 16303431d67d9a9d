"""FeFET device models.

Two views of the same transistor are kept side by side:

* a Preisach-type hysteron bank that tracks polarization under program,
  erase and partial-erase pulses (gate-to-bulk field drives switching), and
* a static square-law model used for read currents and for the tail
  resistance of the delay element.

The threshold voltage ties the two together through an affine map of the
normalized polarization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.stats import truncnorm


@dataclass(frozen=True)
class FeFetGeometry:
    width_m: float = 90e-9
    length_m: float = 90e-9
    transconductance_k: float = 200e-6  # A/V^2
    vt_min: float = 0.2  # fully LVT
    vt_max: float = 1.1  # fully HVT

    def __post_init__(self):
        if not (self.width_m > 0 and self.length_m > 0):
            raise ValueError("FeFET width and length must be positive")
        if not self.transconductance_k > 0:
            raise ValueError("transconductance_k must be positive")
        if not self.vt_min < self.vt_max:
            raise ValueError(f"vt_min ({self.vt_min}) must be below vt_max ({self.vt_max})")

    @property
    def aspect(self) -> float:
        """W/L."""
        return self.width_m / self.length_m

    def shifted(self, dvt: float) -> "FeFetGeometry":
        """Same device with its whole memory window translated by ``dvt``."""
        return replace(self, vt_min=self.vt_min + dvt, vt_max=self.vt_max + dvt)


@dataclass(frozen=True)
class DeviceParams:
    """Model constants that are not geometry.

    The default coercive field and thickness put every hysteron's switching
    voltage inside (2 V, 4 V): a -2 V disturb bias flips nothing, a full
    +/-4 V pulse flips everything.
    """

    fe_thickness_m: float = 10e-9
    coercive_field: float = 3.0e8  # V/m, centre of the hysteron population
    coercive_spread: float = 0.1  # relative std-dev before truncation
    truncation: float = 0.4  # population confined to (1 +/- truncation) * E_C
    n_hysterons: int = 64
    r_off: float = 20e6  # off-state channel resistance, 200x nominal leaker
    v_read: float = 0.1  # drain bias defining the subthreshold floor

    def __post_init__(self):
        if self.fe_thickness_m <= 0 or self.coercive_field <= 0:
            raise ValueError("fe_thickness_m and coercive_field must be positive")
        if self.n_hysterons < 1:
            raise ValueError("n_hysterons must be >= 1")
        if not 0 < self.truncation < 1:
            raise ValueError("truncation must be in (0, 1)")
        if self.coercive_spread <= 0:
            raise ValueError("coercive_spread must be positive")
        if not self.r_off > 0 or not self.v_read > 0:
            raise ValueError("r_off and v_read must be positive")

    @property
    def floor_current(self) -> float:
        return self.v_read / self.r_off


class Hysteron(NamedTuple):
    coercive_up: float
    coercive_down: float
    sign: int
    weight: float


@dataclass(frozen=True)
class HysteronBank:
    """Coercive fields and weights shared by every device built from one
    :class:`DeviceParams`. Switching state lives in :class:`FeFetState`."""

    coercive_up: tuple[float, ...]
    coercive_down: tuple[float, ...]
    weights: tuple[float, ...]

    @classmethod
    def from_params(cls, params: DeviceParams) -> "HysteronBank":
        return _bank_for(params)

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def _bank_for(params: DeviceParams) -> HysteronBank:
    n = params.n_hysterons
    bound = params.truncation / params.coercive_spread
    # quantile placement, not random draws: identical devices every run
    z = truncnorm.ppf((np.arange(n) + 0.5) / n, -bound, bound)
    ec = params.coercive_field * (1.0 + params.coercive_spread * z)
    ec = tuple(float(v) for v in ec)
    return HysteronBank(coercive_up=ec, coercive_down=ec, weights=(1.0 / n,) * n)


@dataclass(frozen=True)
class WritePulse:
    v_wl: float
    v_bl: float = 0.0
    v_sl: float = 0.0
    v_bul: float = 0.0
    duration_s: float = 1e-6

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError("pulse duration must be positive")
        for name in ("v_wl", "v_bl", "v_sl", "v_bul", "duration_s"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"pulse field {name} is not finite")

    @property
    def gate_bulk_voltage(self) -> float:
        return self.v_wl - self.v_bul


PROGRAM_PULSE = WritePulse(v_wl=4.0)
ERASE_PULSE = WritePulse(v_wl=-4.0)


@dataclass(frozen=True)
class FeFetState:
    """Immutable polarization state of one FeFET."""

    geometry: FeFetGeometry
    params: DeviceParams
    signs: tuple[int, ...]
    bank: HysteronBank = field(repr=False, compare=True, default=None)

    def __post_init__(self):
        if self.bank is None:
            object.__setattr__(self, "bank", HysteronBank.from_params(self.params))
        if len(self.signs) != len(self.bank):
            raise ValueError("one sign per hysteron required")

    @classmethod
    def saturated(cls, geometry: FeFetGeometry | None = None,
                  params: DeviceParams | None = None, sign: int = 1) -> "FeFetState":
        """Fully LVT (``sign=+1``) or fully HVT (``sign=-1``) device."""
        geometry = geometry or FeFetGeometry()
        params = params or DeviceParams()
        return cls(geometry, params, (int(sign),) * params.n_hysterons)

    @property
    def hysterons(self) -> tuple[Hysteron, ...]:
        b = self.bank
        return tuple(Hysteron(u, d, s, w) for u, d, s, w in
                     zip(b.coercive_up, b.coercive_down, self.signs, b.weights))

    @property
    def polarization(self) -> float:
        # weights sum to 1 only up to rounding; keep |P| <= 1 exactly
        return float(np.clip(np.dot(self.bank.weights, self.signs), -1.0, 1.0))

    @property
    def effective_vt(self) -> float:
        g = self.geometry
        return vt_from_polarization(self.polarization, g)

    @property
    def is_lvt(self) -> bool:
        return all(s == 1 for s in self.signs)

    @property
    def is_hvt(self) -> bool:
        return all(s == -1 for s in self.signs)

    def with_geometry(self, geometry: FeFetGeometry) -> "FeFetState":
        return replace(self, geometry=geometry)


def vt_from_polarization(p: float, geometry: FeFetGeometry) -> float:
    # interpolation form: exact endpoints at P = +/-1
    return 0.5 * (1.0 + p) * geometry.vt_min + 0.5 * (1.0 - p) * geometry.vt_max


def apply_write_pulse(state: FeFetState, pulse: WritePulse) -> FeFetState:
    """Return the state after ``pulse``; hysterons switch on gate-to-bulk field."""
    e = pulse.gate_bulk_voltage / state.params.fe_thickness_m
    up = np.asarray(state.bank.coercive_up)
    down = np.asarray(state.bank.coercive_down)
    signs = np.asarray(state.signs)
    signs = np.where(e > up, 1, np.where(e < -down, -1, signs))
    new = tuple(int(s) for s in signs)
    if new == state.signs:
        return state
    return replace(state, signs=new)


def channel_resistance(state: FeFetState, v_g: float) -> float:
    """Linear-region channel resistance of the tail device.

    ``(L/W) / (k * (v_g - vt))`` above threshold, the off resistance below.
    Capped at ``r_off`` so it is continuous (and monotone) at threshold.
    """
    ov = v_g - state.effective_vt
    r_off = state.params.r_off
    if ov > 0:
        g = state.geometry
        return min(1.0 / (g.transconductance_k * g.aspect * ov), r_off)
    return r_off


def drain_current(state: FeFetState, v_gs: float, v_ds: float) -> float:
    """Square-law drain current plus a constant subthreshold floor."""
    if v_ds < 0:
        raise ValueError("v_ds must be >= 0")
    floor = state.params.floor_current
    ov = v_gs - state.effective_vt
    if ov <= 0:
        return floor
    beta = state.geometry.transconductance_k * state.geometry.aspect
    if v_ds < ov:
        return floor + beta * (ov * v_ds - 0.5 * v_ds * v_ds)
    return floor + 0.5 * beta * ov * ov
