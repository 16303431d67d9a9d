import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fefet_tdimc.device import (
    DeviceParams,
    FeFetGeometry,
    FeFetState,
    HysteronBank,
    WritePulse,
    apply_write_pulse,
    channel_resistance,
    drain_current,
)

LVT = FeFetState.saturated(sign=1)
HVT = FeFetState.saturated(sign=-1)


def pulse(v_wl, v_bul=0.0):
    return WritePulse(v_wl=v_wl, v_bul=v_bul)


def test_saturated_thresholds():
    assert LVT.polarization == pytest.approx(1.0)
    assert LVT.effective_vt == pytest.approx(0.2)
    assert HVT.polarization == pytest.approx(-1.0)
    assert HVT.effective_vt == pytest.approx(1.1)


def test_switching_voltages_lie_between_protect_and_full_bias():
    bank = HysteronBank.from_params(DeviceParams())
    v = np.array(bank.coercive_up) * DeviceParams().fe_thickness_m
    assert v.min() > 2.0 and v.max() < 4.0
    # symmetric truncated population around 3 V
    assert v.mean() == pytest.approx(3.0, abs=1e-9)


def test_erase_pulse_fully_hvt():
    out = apply_write_pulse(LVT, pulse(-4.0, 0.0))
    assert out.is_hvt and out.polarization == pytest.approx(-1.0)


def test_program_pulse_fully_lvt():
    assert apply_write_pulse(HVT, pulse(4.0)).is_lvt


def test_zero_pulse_identity():
    mid = apply_write_pulse(LVT, pulse(-4.0, -1.0))
    for s in (LVT, HVT, mid):
        assert apply_write_pulse(s, pulse(0.0, 0.0)) == s


def test_partial_erase_intermediate():
    # -3 V across the stack: exactly the hysterons below the 3 V median flip
    out = apply_write_pulse(LVT, pulse(-4.0, -1.0))
    assert -1.0 < out.polarization < 1.0
    assert out.polarization == pytest.approx(0.0)
    assert 0.2 < out.effective_vt < 1.1


def test_protect_bias_switches_nothing():
    # -4 V gate over a -2 V bulk is the same 2 V stack as a protected row
    assert apply_write_pulse(LVT, pulse(-4.0, -2.0)) == LVT
    assert apply_write_pulse(HVT, pulse(0.0, -2.0)) == HVT


def test_mls_monotone_along_bulk_sweep():
    s = LVT
    vts = [s.effective_vt]
    for v_bul in np.arange(-2.0, 0.0 + 1e-9, 0.025):
        s = apply_write_pulse(s, pulse(-4.0, float(min(v_bul, 0.0))))
        vts.append(s.effective_vt)
    assert np.all(np.diff(vts) >= 0)
    assert vts[-1] == pytest.approx(1.1)
    assert len(set(np.round(vts, 9))) > 10


voltages = st.floats(-5.0, 5.0, allow_nan=False)


def _reduce(seq):
    """Alternating dominant extrema: the only pulses that survive wipe-out."""
    kept, biggest = [], -1.0
    for v in reversed(seq):
        if abs(v) > biggest:
            kept.append(v)
            biggest = abs(v)
    return kept[::-1]


@settings(max_examples=1000, deadline=None)
@given(st.lists(voltages, max_size=12), st.sampled_from([1, -1]))
def test_wipe_out(seq, sign):
    s0 = FeFetState.saturated(sign=sign)
    full = s0
    for v in seq:
        full = apply_write_pulse(full, pulse(v))
    red = s0
    for v in _reduce(seq):
        red = apply_write_pulse(red, pulse(v))
    assert full.signs == red.signs


@settings(max_examples=1000, deadline=None)
@given(st.lists(voltages, max_size=12), st.floats(4.0, 6.0), st.sampled_from([1, -1]))
def test_saturation(seq, amp, direction):
    s = LVT
    for v in seq:
        s = apply_write_pulse(s, pulse(v))
    s = apply_write_pulse(s, pulse(direction * amp))
    assert s.is_lvt if direction > 0 else s.is_hvt
    assert 0.2 <= s.effective_vt <= 1.1


@settings(max_examples=300, deadline=None)
@given(st.lists(voltages, max_size=10), st.floats(-2.0, 2.0))
def test_sub_protect_pulse_never_switches(seq, v):
    s = LVT
    for x in seq:
        s = apply_write_pulse(s, pulse(x))
    assert apply_write_pulse(s, pulse(v)) == s


def test_channel_resistance_hand_value():
    # k*(W/L) = 1 mA/V^2 with a 0.2 V overdrive
    g = FeFetGeometry(width_m=5e-6, length_m=1e-6, transconductance_k=200e-6)
    s = FeFetState.saturated(g)
    assert channel_resistance(s, 0.4) == pytest.approx(5e3, rel=1e-12)


def test_channel_resistance_off_and_reciprocal():
    s = LVT
    p = s.params
    assert channel_resistance(s, 0.2) == p.r_off
    assert channel_resistance(s, 0.0) == p.r_off
    assert p.r_off >= 100 * 100e3
    assert channel_resistance(s, 0.6) == pytest.approx(channel_resistance(s, 0.4) / 2, rel=1e-12)


@given(st.floats(-0.5, 2.0), st.floats(1e-4, 0.5))
def test_channel_resistance_monotone(v, dv):
    assert channel_resistance(LVT, v + dv) <= channel_resistance(LVT, v)


def test_drain_current_regions():
    floor = DeviceParams().floor_current
    assert drain_current(LVT, 0.2, 0.1) == floor
    assert drain_current(HVT, 0.65, 0.1) == floor
    beta = 200e-6
    ov = 0.65 - 0.2
    assert drain_current(LVT, 0.65, 0.1) == pytest.approx(floor + beta * (ov * 0.1 - 0.005), rel=1e-12)
    assert drain_current(LVT, 0.65, 1.0) == pytest.approx(floor + 0.5 * beta * ov * ov, rel=1e-12)
    with pytest.raises(ValueError):
        drain_current(LVT, 0.65, -0.1)


def test_off_resistance_matches_floor_current():
    p = DeviceParams()
    assert p.v_read / p.floor_current == pytest.approx(p.r_off)


def test_pulse_rejects_non_finite():
    with pytest.raises(ValueError):
        WritePulse(v_wl=math.nan)


def test_geometry_validation():
    with pytest.raises(ValueError):
        FeFetGeometry(vt_min=1.2, vt_max=1.1)
