"""Behavioral simulator of a FeFET CAM time-domain in-memory-computing macro."""

__version__ = "0.1.0"

from .device import DeviceParams, FeFetGeometry, FeFetState, apply_write_pulse, drain_current
from .array import CamArray, CamCell, erase_cell, partial_erase, program_column, write_weights
from .timing import DelayStageConfig, StageDrive, VariabilityModel, chain_delay, stage_delay
from .tdc import TdcConfig, ThermometerCode, digitize, generate_references, therm_to_binary
from .ops import MacResult, MacroState, ModePreset, and_mac, bool_logic, full_adder, xor_mac
from .calib import (
    CalibTarget,
    ErrorModelParams,
    calibrate_cell,
    margin_gain,
    monte_carlo_error,
    p_err,
    sigma_total,
)
from .fitting import fit_parameters

__all__ = [
    "CalibTarget", "CamArray", "CamCell", "DelayStageConfig", "DeviceParams", "ErrorModelParams",
    "FeFetGeometry", "FeFetState", "MacResult", "MacroState", "ModePreset", "StageDrive",
    "TdcConfig", "ThermometerCode", "VariabilityModel", "and_mac", "apply_write_pulse",
    "bool_logic", "calibrate_cell", "chain_delay", "digitize", "drain_current", "erase_cell",
    "fit_parameters", "full_adder", "generate_references", "margin_gain", "monte_carlo_error",
    "p_err", "partial_erase", "program_column", "sigma_total", "stage_delay", "therm_to_binary",
    "write_weights", "xor_mac",
]
