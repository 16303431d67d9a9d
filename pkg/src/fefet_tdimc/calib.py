"""Multilevel-state delay calibration and the timing error model.

Calibration tunes the short delay of one cell by partial erase: the bulk of
the target row is stepped from -2 V toward 0 V and after every pulse a
two-reference window TDC reports whether the short delay is early ('00'),
inside the window ('10') or late ('11').

The error model treats the accumulated delay as Gaussian and the TDC
decision thresholds as sitting between adjacent levels.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.special import erfc

from .array import Which, erase_cell, partial_erase, program_all, program_column, _as_weight_matrix
from .ops import MacroState, evaluate
from .tdc import digitize, generate_references, therm_to_binary
from .timing import (
    StageDrive,
    VariabilityModel,
    cam_resistance,
    leaker_resistance,
    sample_perturbations,
    stage_delay,
)

log = logging.getLogger(__name__)

V_BUL_START = -2.0
MAX_REPROGRAMS = 6
BLOCK_TRIALS = 8192


class CalibrationError(RuntimeError):
    def __init__(self, msg, nearest_tdl=None, trajectory=()):
        super().__init__(msg)
        self.nearest_tdl = nearest_tdl
        self.trajectory = list(trajectory)


class CalibrationRangeError(ValueError):
    pass


# ---------------------------------------------------------------- error model

def q_function(x):
    """Gaussian tail probability P(Z > x)."""
    q = 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(q) if q.ndim == 0 else q


@dataclass(frozen=True)
class ErrorModelParams:
    n_stages: int
    k_matches: int
    sigma_dl: float = 0.0
    sigma_dh: float = 0.0
    sigma_jit: float = 0.0
    sigma_tdc: float = 0.0
    delta_s: float = 550e-12
    delta_t: float = 100e-12

    def __post_init__(self):
        if not 0 <= self.k_matches <= self.n_stages:
            raise ValueError("need 0 <= k_matches <= n_stages")
        for name in ("sigma_dl", "sigma_dh", "sigma_jit", "sigma_tdc", "delta_t"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def phi(self) -> float:
        """Variance that calibration does not touch."""
        return (self.n_stages - self.k_matches) * self.sigma_dh ** 2 + self.sigma_jit ** 2 + self.sigma_tdc ** 2

    @property
    def calibrated_sigma_dl(self) -> float:
        return self.delta_t / math.sqrt(12.0)


def sigma_total(p: ErrorModelParams, calibrated: bool = False) -> float:
    s_dl = min(p.sigma_dl, p.calibrated_sigma_dl) if calibrated else p.sigma_dl
    return math.sqrt(p.k_matches * s_dl ** 2 + p.phi)


def p_err(delta_s: float, sigma_t: float) -> float:
    """Misclassification probability across one midpoint threshold."""
    if delta_s < 0 or sigma_t < 0:
        raise ValueError("delta_s and sigma_t must be non-negative")
    if sigma_t == 0:
        return 0.5 if delta_s == 0 else 0.0
    return q_function(delta_s / (2.0 * sigma_t))


def margin_gain(p: ErrorModelParams) -> float:
    """Ratio of uncalibrated to calibrated timing uncertainty."""
    num = p.k_matches * p.sigma_dl ** 2 + p.phi
    den = p.k_matches * p.calibrated_sigma_dl ** 2 + p.phi
    if den == 0:
        raise ZeroDivisionError("margin gain undefined: calibrated uncertainty is zero")
    return math.sqrt(num / den)


def window_error_probability(h_low: float | None, h_up: float | None,
                             sigma_edge: float, sigma_ref: float) -> float:
    """Exact probability that a noisy edge leaves its decision window.

    The edge error is N(0, sigma_edge^2); each bounding reference carries its
    own independent N(0, sigma_ref^2) error. ``h_low`` / ``h_up`` are the
    nominal distances to the lower / upper reference, ``None`` where the
    level has no reference on that side. With two references the two
    failure events share the edge noise, so the result is slightly below
    the sum of the one-sided tails.
    """
    sides = [h for h in (h_low, h_up) if h is not None]
    if not sides:
        return 0.0
    st = math.hypot(sigma_edge, sigma_ref)
    if st == 0:
        return 0.0
    if len(sides) == 1:
        return q_function(sides[0] / st)
    if sigma_ref == 0:
        return q_function(h_low / sigma_edge) + q_function(h_up / sigma_edge)
    if sigma_edge == 0:
        a, b = q_function(h_low / sigma_ref), q_function(h_up / sigma_ref)
        return 1.0 - (1.0 - a) * (1.0 - b)

    def ok(z):
        x = z * sigma_edge
        return (math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
                * (1.0 - q_function((h_up - x) / sigma_ref))
                * (1.0 - q_function((x + h_low) / sigma_ref)))

    val, _ = integrate.quad(ok, -12.0, 12.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    return 1.0 - val


# ---------------------------------------------------------------- Monte Carlo

@dataclass
class LevelStats:
    slow_stages: int
    fast_stages: int
    activations: tuple[int, ...]
    nominal_delay: float
    nominal_code: int
    trials: int
    errors: int
    upper_errors: int | None
    lower_errors: int | None
    bubbles: int
    sigma_chain: float
    sigma_effective: float
    predicted_sigma_t: float
    analytic_p_err: float
    analytic_boundary_p: dict = field(default_factory=dict)
    delays: np.ndarray | None = field(default=None, repr=False)
    codes: np.ndarray | None = field(default=None, repr=False)

    @property
    def empirical_p_err(self) -> float:
        return self.errors / self.trials

    @property
    def standard_error(self) -> float:
        p = self.analytic_p_err
        return math.sqrt(max(p * (1 - p), 0.0) / self.trials)

    @property
    def upper_rate(self):
        return None if self.upper_errors is None else self.upper_errors / self.trials

    @property
    def lower_rate(self):
        return None if self.lower_errors is None else self.lower_errors / self.trials


def _drives_for(state: MacroState, mode: str, x) -> list[StageDrive]:
    vh = state.preset(mode).v_h
    if mode == "xor":
        return [StageDrive(xi * vh, (1 - xi) * vh) for xi in x]
    return [StageDrive(xi * vh, 0.0) for xi in x]


def level_activations(state: MacroState, mode: str, row: int = 0) -> dict[int, tuple[int, ...]]:
    """First activation vector (lexicographic) reaching each TDC code."""
    m = state.n_stages
    if m > 16:
        raise ValueError("level enumeration limited to 16 stages")
    zero = replace(state, variability=VariabilityModel())
    found = {}
    for x in product((1, 0), repeat=m):
        _, therm = evaluate(zero, row, mode, _drives_for(state, mode, x))
        found.setdefault(therm_to_binary(therm), x)
        if len(found) == m + 1:
            break
    return dict(sorted(found.items()))


def _block(seed, level_idx, block_idx, size, nominal_total, short, refs, var):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(level_idx, block_idx))))
    pert, jit = sample_perturbations(var, short, rng, size=size)
    total = nominal_total + pert.sum(axis=1) + jit
    ref_noise = rng.normal(0.0, 1.0, size=(size, len(refs))) * var.sigma_tdc
    return total, ref_noise


def monte_carlo_error(state: MacroState, mode: str, trials: int, seed: int | None = None,
                      row: int = 0, workers: int = 1, levels: Sequence[int] | None = None,
                      keep_trials: bool = False) -> list[LevelStats]:
    """Empirical misclassification per delay level under the state's variability.

    Trials are generated in fixed blocks, each from its own stream derived
    from ``(seed, level, block)``, so results do not depend on ``workers``.
    Stage noise is additive on the nominal delays (no clamping).
    """
    if trials < 10_000:
        log.warning("monte_carlo_error: %d trials is below the 1e4 needed for stable rates", trials)
    var = state.variability
    seed = var.seed if seed is None else seed
    acts = level_activations(state, mode, row)
    if levels is not None:
        acts = {s: acts[s] for s in levels}
    refs = np.asarray(generate_references(state.tdc_for(mode)))
    n_refs = len(refs)
    cfgs = state.stages_for(mode)
    cells = state.array.row_cells(row)
    out = []
    for level_idx, (code, x) in enumerate(acts.items()):
        drives = _drives_for(state, mode, x)
        zero = replace(state, variability=VariabilityModel())
        chain, _ = evaluate(zero, row, mode, drives)
        short = np.array([cam_resistance(c, d) < leaker_resistance(cfg)
                          for c, d, cfg in zip(cells, drives, cfgs)])
        k = int(short.sum())
        sizes = [BLOCK_TRIALS] * (trials // BLOCK_TRIALS)
        if trials % BLOCK_TRIALS:
            sizes.append(trials % BLOCK_TRIALS)
        jobs = [(seed, code, b, sz, chain.total, short, refs, var) for b, sz in enumerate(sizes)]
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                parts = list(ex.map(lambda j: _block(*j), jobs))
        else:
            parts = [_block(*j) for j in jobs]
        total = np.concatenate([p[0] for p in parts])
        ref_noise = np.concatenate([p[1] for p in parts])
        bits = total[:, None] > (refs[None, :] + ref_noise)
        codes = bits.sum(axis=1)
        bubble = (bits[:, 1:] & ~bits[:, :-1]).any(axis=1) if n_refs > 1 else np.zeros(trials, bool)
        err = bubble | (codes != code)
        upper = int(bits[:, code].sum()) if code < n_refs else None
        lower = int((~bits[:, code - 1]).sum()) if code > 0 else None
        near = code if code < n_refs else code - 1
        eff = total - ref_noise[:, near]

        sigma_edge = math.sqrt(k * var.sigma_short ** 2 + (len(short) - k) * var.sigma_dh ** 2
                               + var.sigma_jit ** 2)
        h_up = refs[code] - chain.total if code < n_refs else None
        h_low = chain.total - refs[code - 1] if code > 0 else None
        st = math.hypot(sigma_edge, var.sigma_tdc)
        boundary = {}
        if h_up is not None:
            boundary["upper"] = q_function(h_up / st) if st else 0.0
        if h_low is not None:
            boundary["lower"] = q_function(h_low / st) if st else 0.0
        out.append(LevelStats(
            slow_stages=code, fast_stages=k, activations=tuple(x), nominal_delay=chain.total,
            nominal_code=code, trials=trials, errors=int(err.sum()),
            upper_errors=upper, lower_errors=lower, bubbles=int(bubble.sum()),
            sigma_chain=float(total.std(ddof=1)), sigma_effective=float(eff.std(ddof=1)),
            predicted_sigma_t=st,
            analytic_p_err=window_error_probability(h_low, h_up, sigma_edge, var.sigma_tdc),
            analytic_boundary_p=boundary,
            delays=total if keep_trials else None, codes=codes if keep_trials else None,
        ))
    return out


# ---------------------------------------------------------------- calibration

@dataclass(frozen=True)
class CalibTarget:
    target_tdl: float
    window_s: float = 100e-12
    max_steps: int = 400
    bul_step_v: float = 0.025

    def __post_init__(self):
        if not self.window_s > 0:
            raise ValueError("window_s must be positive")
        if not self.bul_step_v > 0:
            raise ValueError("bul_step_v must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class CalibPoint:
    v_bul: float | None  # None: measurement before any pulse
    vt: float
    tdl: float
    code: int


@dataclass
class CalibrationResult:
    state: MacroState
    row: int
    col: int
    which: str
    final_bul: float | None
    final_tdl: float
    steps: int
    reprograms: int
    trajectory: list[CalibPoint]


def _calib_drives(state: MacroState, col: int, which: Which, mode: str) -> list[StageDrive]:
    vh = state.preset(mode).v_h
    drives = [StageDrive(0.0, 0.0) for _ in range(state.n_stages)]
    drives[col] = StageDrive(vh, 0.0) if which == "main" else StageDrive(0.0, vh)
    return drives


def _measure(state: MacroState, row, col, which, mode, target: CalibTarget) -> tuple[float, int]:
    """Short delay of the target stage and its window code (0 early, 1 in, 2 late)."""
    zero = replace(state, variability=VariabilityModel())
    chain, _ = evaluate(zero, row, mode, _calib_drives(state, col, which, mode))
    # the other stages sit at the leaker-defined long delay; the window
    # references are shifted past them
    base = chain.total - chain.per_stage[col]
    half = 0.5 * target.window_s
    refs = [base + target.target_tdl - half, base + target.target_tdl + half]
    return chain.per_stage[col], therm_to_binary(digitize(chain.total, refs))


def delay_range(state: MacroState, row: int, col: int, which: Which = "main",
                mode: str = "and") -> tuple[float, float]:
    """Short delay with the device fully LVT and fully HVT."""
    cfg = state.stages_for(mode)[col]
    cell = state.array.cell(row, col)
    dev = cell.device(which)
    drive = _calib_drives(state, col, which, mode)[col]
    lo = stage_delay(cfg, cell.with_device(which, dev.saturated(dev.geometry, dev.params, 1)), drive)
    hi = stage_delay(cfg, cell.with_device(which, dev.saturated(dev.geometry, dev.params, -1)), drive)
    return lo, hi


def _sweep(state, row, col, which, mode, target, step, budget):
    """One monotone bulk sweep. Returns (state, status, trajectory, steps)."""
    traj = []
    steps = 0
    n = 1
    while True:
        v = min(V_BUL_START + n * step, 0.0)
        arr = partial_erase(state.array, row, col, which, v)
        state = state.with_array(arr)
        steps += 1
        t, code = _measure(state, row, col, which, mode, target)
        traj.append(CalibPoint(v, state.array.cell(row, col).device(which).effective_vt, t, code))
        if code == 1:
            return state, "converged", traj, steps
        if code == 2:
            return state, "overshoot", traj, steps
        if steps >= budget or v >= 0.0:
            return state, "exhausted", traj, steps
        n += 1


def _check_range(state, row, col, which, mode, target):
    lo, hi = delay_range(state, row, col, which, mode)
    half = 0.5 * target.window_s
    if target.target_tdl + half < lo:
        raise CalibrationRangeError(
            f"target {target.target_tdl * 1e12:.1f} ps is below the fully-LVT floor {lo * 1e12:.1f} ps")
    if target.target_tdl - half > hi:
        raise CalibrationRangeError(
            f"target {target.target_tdl * 1e12:.1f} ps is above the fully-HVT ceiling {hi * 1e12:.1f} ps")


def _nearest(traj, target):
    return min((p.tdl for p in traj), key=lambda t: abs(t - target.target_tdl))


def calibrate_cell(state: MacroState, row: int, col: int, target: CalibTarget,
                   which: Which = "main", mode: str = "and") -> CalibrationResult:
    """Tune one LVT device's short delay into the target window.

    On overshoot the column is re-programmed to LVT (this resets every
    device in the column) and the sweep restarts with half the bulk step.
    """
    dev = state.array.cell(row, col).device(which)
    if not dev.is_lvt:
        raise ValueError(f"device ({row}, {col}, {which}) must be programmed LVT before calibration")
    _check_range(state, row, col, which, mode, target)
    t, code = _measure(state, row, col, which, mode, target)
    traj = [CalibPoint(None, dev.effective_vt, t, code)]
    if code == 1:
        return CalibrationResult(state, row, col, which, None, t, 0, 0, traj)
    if code == 2:
        raise CalibrationRangeError("LVT delay already beyond the window; partial erase only slows the cell")
    step = target.bul_step_v
    steps = reprograms = 0
    while True:
        state, status, part, used = _sweep(state, row, col, which, mode, target, step,
                                           target.max_steps - steps)
        traj += part
        steps += used
        if status == "converged":
            last = part[-1]
            return CalibrationResult(state, row, col, which, last.v_bul, last.tdl, steps, reprograms, traj)
        if status == "overshoot" and reprograms < MAX_REPROGRAMS and steps < target.max_steps:
            state = state.with_array(program_column(state.array, col))
            reprograms += 1
            step /= 2
            continue
        raise CalibrationError(
            f"cell ({row}, {col}) did not converge after {steps} pulses and {reprograms} re-programs",
            nearest_tdl=_nearest(traj, target), trajectory=traj)


def write_weights_calibrated(state: MacroState, weights, target: CalibTarget,
                             mode: str = "and") -> tuple[MacroState, list[CalibrationResult]]:
    """Program, calibrate and selectively erase, one column at a time.

    Every device that will hold an LVT '1' is tuned to the target before the
    remaining devices of its column are erased. An overshoot re-programs the
    column, so the column restarts with a finer step for the offending row.
    """
    w = _as_weight_matrix(weights)
    arr = state.array
    if w.shape != arr.shape:
        raise ValueError(f"weights shape {w.shape} does not match array {arr.shape}")
    state = state.with_array(program_all(arr))
    results: list[CalibrationResult] = []

    def designated(r, c) -> Which | None:
        if w[r, c]:
            return "main"
        return "complement" if mode == "xor" else None

    for col in range(arr.cols):
        steps = {}
        for attempt in range(MAX_REPROGRAMS + 1):
            col_state = state.with_array(program_column(state.array, col))
            col_results = []
            restart = False
            for row in range(arr.rows):
                which = designated(row, col)
                if which is None:
                    continue
                t = replace(target, bul_step_v=steps.get(row, target.bul_step_v))
                _check_range(col_state, row, col, which, mode, t)
                tdl, code = _measure(col_state, row, col, which, mode, t)
                if code == 1:
                    vt = col_state.array.cell(row, col).device(which).effective_vt
                    col_results.append(CalibrationResult(col_state, row, col, which, None, tdl, 0, 0,
                                                         [CalibPoint(None, vt, tdl, code)]))
                    continue
                col_state, status, traj, used = _sweep(col_state, row, col, which, mode, t,
                                                       t.bul_step_v, t.max_steps)
                if status == "overshoot":
                    steps[row] = t.bul_step_v / 2
                    restart = True
                    break
                if status != "converged":
                    raise CalibrationError(f"cell ({row}, {col}) did not converge",
                                           nearest_tdl=_nearest(traj, t), trajectory=traj)
                col_results.append(CalibrationResult(col_state, row, col, which, traj[-1].v_bul,
                                                     traj[-1].tdl, used, attempt, traj))
            if not restart:
                break
        else:
            raise CalibrationError(f"column {col} kept overshooting after {MAX_REPROGRAMS} re-programs")
        state = col_state
        for row in range(arr.rows):
            kept = "main" if w[row, col] else "complement"
            gone: Which = "complement" if kept == "main" else "main"
            state = state.with_array(erase_cell(state.array, row, col, gone))
        results += col_results
    for r in results:
        r.state = state
    return state, results
