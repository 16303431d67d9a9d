"""TOML experiment configuration.

Sections mirror the simulator modules. Unknown sections or keys are errors
that point at the offending line: a misspelled physical parameter must never
fall back silently to a default.
"""
from __future__ import annotations

import hashlib
import re
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .array import CamArray, load_weights_csv, write_weights
from .device import DeviceParams, FeFetGeometry
from .ops import MacroState, ModePreset
from .tdc import TdcConfig
from .timing import ConfigError, DelayStageConfig, LeakerGeometry, VariabilityModel

EXPERIMENTS = (
    "truth_table_xor",
    "truth_table_and",
    "boolean_logic",
    "full_adder",
    "calibrate",
    "monte_carlo",
    "fit_parameters",
    "mls_sweep",
    "disturb_check",
)


@dataclass
class ExperimentSection:
    name: str = "truth_table_and"
    output_dir: str = "out"
    master_seed: int = 0


@dataclass
class ArraySection:
    rows: int = 3
    cols: int = 3
    weights: list | None = None
    weights_csv: str | None = None


@dataclass
class DeviceSection:
    width_m: float = 90e-9
    length_m: float = 90e-9
    transconductance_k: float = 200e-6
    vt_min: float = 0.2
    vt_max: float = 1.1
    fe_thickness_m: float = 10e-9
    coercive_field: float = 3.0e8
    coercive_spread: float = 0.1
    truncation: float = 0.4
    n_hysterons: int = 64
    r_off: float = 20e6
    v_read: float = 0.1


@dataclass
class StageSection:
    c_bank: float = 10e-15
    leaker_width_m: float = 90e-9
    leaker_length_m: float = 90e-9
    leaker_k: float = 100e-6
    leaker_vt: float = 0.4
    v_leak: float = 0.5
    r_nmos: float = 1e3
    t_intr: float = 50e-12
    v_dd: float = 0.85
    threshold_fraction: float = 0.5


@dataclass
class TdcSection:
    n_refs: int | None = None  # defaults to the column count
    step_s: float = 550e-12
    shift_s: float = 0.0
    tie_rule: str = "reference_wins"


@dataclass
class VariabilitySection:
    sigma_dl: float = 0.0
    sigma_dh: float = 0.0
    sigma_jit: float = 0.0
    sigma_tdc: float = 0.0
    sigma_vt: float = 0.0
    dl_window_s: float | None = None


@dataclass
class FitSection:
    delta_s_and: float = 550e-12
    delta_s_xor: float = 1.3e-9
    v_h: float = 0.65
    solve_for: str = "c_bank"
    lvt_vt: float | None = None


@dataclass
class PresetSection:
    v_h: float = 0.65
    c_bank: float = 10e-15
    tdc_step: float = 550e-12
    tdc_shift: float = 0.0


@dataclass
class CalibrationSection:
    mode: str = "and"
    target_vt: float = 0.45  # target short delay is the nominal delay at this vt
    target_tdl_s: float | None = None  # overrides target_vt when set
    window_s: float = 100e-12
    bul_step_v: float = 0.025
    max_steps: int = 400


@dataclass
class MonteCarloSection:
    mode: str = "and"
    trials: int = 100_000
    workers: int = 1
    row: int = 0
    per_trial_csv: bool = True


@dataclass
class SweepSection:
    mode: str = "and"
    bul_step_v: float = 0.1
    v_wl_min: float = -0.2
    v_wl_max: float = 1.8
    v_wl_step: float = 0.05
    v_read: float = 0.65


@dataclass
class DisturbSection:
    sequences: int = 100
    sequence_length: int = 12


_SECTIONS = {
    "experiment": ExperimentSection,
    "array": ArraySection,
    "device": DeviceSection,
    "stage": StageSection,
    "tdc": TdcSection,
    "variability": VariabilitySection,
    "fit": FitSection,
    "calibration": CalibrationSection,
    "monte_carlo": MonteCarloSection,
    "sweep": SweepSection,
    "disturb": DisturbSection,
}


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    array: ArraySection = field(default_factory=ArraySection)
    device: DeviceSection = field(default_factory=DeviceSection)
    stage: StageSection = field(default_factory=StageSection)
    tdc: TdcSection = field(default_factory=TdcSection)
    variability: VariabilitySection = field(default_factory=VariabilitySection)
    fit: FitSection = field(default_factory=FitSection)
    presets: dict[str, PresetSection] = field(default_factory=dict)
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    monte_carlo: MonteCarloSection = field(default_factory=MonteCarloSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    disturb: DisturbSection = field(default_factory=DisturbSection)

    def validate(self):
        e = self.experiment
        if e.name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {e.name!r}; expected one of {', '.join(EXPERIMENTS)}")
        if self.array.rows < 1 or self.array.cols < 1:
            raise ConfigError("array dimensions must be positive")
        for mode in self.presets:
            if mode not in ("and", "xor"):
                raise ConfigError(f"unknown preset mode {mode!r}")
        for sec in (self.calibration, self.monte_carlo, self.sweep):
            if sec.mode not in ("and", "xor"):
                raise ConfigError(f"unknown mode {sec.mode!r}")
        if self.fit.solve_for not in ("c_bank", "v_h"):
            raise ConfigError(f"fit.solve_for must be 'c_bank' or 'v_h', got {self.fit.solve_for!r}")
        return self

    # ------------------------------------------------------------ builders

    def geometry(self) -> FeFetGeometry:
        d = self.device
        return FeFetGeometry(d.width_m, d.length_m, d.transconductance_k, d.vt_min, d.vt_max)

    def device_params(self) -> DeviceParams:
        d = self.device
        return DeviceParams(d.fe_thickness_m, d.coercive_field, d.coercive_spread, d.truncation,
                            d.n_hysterons, d.r_off, d.v_read)

    def stage_config(self) -> DelayStageConfig:
        s = self.stage
        return DelayStageConfig(
            c_bank=s.c_bank,
            leaker=LeakerGeometry(s.leaker_width_m, s.leaker_length_m, s.leaker_k, s.leaker_vt),
            v_leak=s.v_leak, r_nmos=s.r_nmos, t_intr=s.t_intr, v_dd=s.v_dd,
            threshold_fraction=s.threshold_fraction)

    def tdc_config(self) -> TdcConfig:
        t = self.tdc
        n = self.array.cols if t.n_refs is None else t.n_refs
        return TdcConfig(n, t.step_s, t.shift_s, t.tie_rule)

    def variability_model(self) -> VariabilityModel:
        v = self.variability
        return VariabilityModel(v.sigma_dl, v.sigma_dh, v.sigma_jit, v.sigma_tdc,
                                seed=self.experiment.master_seed, dl_window_s=v.dl_window_s,
                                sigma_vt=v.sigma_vt)

    def mode_presets(self) -> dict[str, ModePreset]:
        return {m: ModePreset(p.v_h, p.c_bank, p.tdc_step, p.tdc_shift) for m, p in self.presets.items()}

    def weights(self, base: Path | None = None) -> np.ndarray | None:
        a = self.array
        if a.weights is not None and a.weights_csv is not None:
            raise ConfigError("give either array.weights or array.weights_csv, not both")
        if a.weights_csv is not None:
            p = Path(a.weights_csv)
            if base is not None and not p.is_absolute():
                p = base / p
            w = load_weights_csv(p)
        elif a.weights is not None:
            w = np.asarray(a.weights, dtype=int)
        else:
            return None
        if w.shape != (a.rows, a.cols):
            raise ConfigError(f"weights shape {w.shape} does not match array {a.rows}x{a.cols}")
        return w

    def build_macro(self, weights=None, mode: str = "and") -> MacroState:
        array = CamArray.blank(self.array.rows, self.array.cols, self.geometry(), self.device_params())
        if weights is not None:
            array = write_weights(array, weights, mode)
        return MacroState(array, (self.stage_config(),) * self.array.cols, self.tdc_config(),
                          self.variability_model(), self.mode_presets())

    def with_presets(self, presets: dict[str, ModePreset]) -> "ExperimentConfig":
        merged = dict(self.presets)
        merged.update({m: PresetSection(p.v_h, p.c_bank, p.tdc_step, p.tdc_shift) for m, p in presets.items()})
        return replace(self, presets=merged)

    # ------------------------------------------------------------ (de)serialization

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for name in _SECTIONS:
            out[name] = _strip_none(asdict(getattr(self, name)))
        if self.presets:
            out["presets"] = {m: asdict(p) for m, p in sorted(self.presets.items())}
        return out

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def digest(self) -> str:
        """Hash of every result-relevant setting (the output location is not one)."""
        d = self.to_dict()
        d["experiment"].pop("output_dir", None)
        return hashlib.sha256(tomli_w.dumps(d).encode()).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


def _strip_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Best-effort map of (section, key) to its line number."""
    lines = {}
    section = ""
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]$", line)
        if m:
            section = m.group(1)
            lines.setdefault((section, ""), i)
            continue
        m = re.match(r"^([A-Za-z0-9_\-\"]+)\s*=", line)
        if m:
            lines.setdefault((section, m.group(1).strip('"')), i)
    return lines


def _coerce(section: str, key: str, value, ftype, where: str):
    t = str(ftype)
    if value is None:
        return None
    if "bool" in t:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: {section}.{key} must be a boolean")
        return value
    if "float" in t:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: {section}.{key} must be a number, got {value!r}")
        return float(value)
    if "int" in t:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: {section}.{key} must be an integer, got {value!r}")
        return value
    if "str" in t and "list" not in t:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: {section}.{key} must be a string, got {value!r}")
        return value
    if "list" in t:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: {section}.{key} must be a list")
        return value
    return value


def _build_section(cls, name: str, data: dict, lines, origin: str):
    allowed = {f.name: f.type for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        where = f"{origin}:{lines.get((name, key), lines.get((name, ''), '?'))}"
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r} in [{name}]; allowed: {', '.join(allowed)}")
        kwargs[key] = _coerce(name, key, value, allowed[key], where)
    return cls(**kwargs)


def loads(text: str, origin: str = "<config>") -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    lines = _key_lines(text)
    kwargs = {}
    for name, value in data.items():
        where = f"{origin}:{lines.get((name, ''), '?')}"
        if name == "presets":
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: [presets] must be a table of modes")
            kwargs["presets"] = {m: _build_section(PresetSection, f"presets.{m}", v, lines, origin)
                                 for m, v in value.items()}
            continue
        if name not in _SECTIONS:
            raise ConfigError(f"{where}: unknown section [{name}]; allowed: {', '.join(_SECTIONS)}, presets")
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: {name} must be a table")
        kwargs[name] = _build_section(_SECTIONS[name], name, value, lines, origin)
    return ExperimentConfig(**kwargs).validate()


def load(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text, origin=str(path))
