import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fefet_tdimc.array import CamCell
from fefet_tdimc.device import DeviceParams, FeFetGeometry, FeFetState
from fefet_tdimc.fitting import TargetUnreachable, fit_parameters, stage_pair
from fefet_tdimc.timing import DelayStageConfig, StageDrive, parallel, stage_delay

G, P, CFG = FeFetGeometry(), DeviceParams(), DelayStageConfig()


def test_closed_form_c_bank():
    presets = fit_parameters(CFG, G, P, 3)
    ln2 = math.log(2)
    r_l = parallel(1 / (200e-6 * 0.45), 20e6, 100e3) + 1e3
    r_h = parallel(20e6, 20e6, 100e3) + 1e3
    for mode, ds in (("and", 550e-12), ("xor", 1.3e-9)):
        c = ds / (ln2 * (r_h - r_l))
        assert presets[mode].c_bank == pytest.approx(c, rel=1e-12)
        assert presets[mode].v_h == 0.65
        assert presets[mode].tdc_step == pytest.approx(ds, rel=1e-12)
    assert presets["and"].c_bank == pytest.approx(8.914e-15, rel=1e-3)
    assert presets["xor"].c_bank == pytest.approx(21.07e-15, rel=1e-3)


def test_references_sit_midway_between_levels():
    p = fit_parameters(CFG, G, P, 3)["and"]
    pair = stage_pair(replace(CFG, c_bank=p.c_bank), "and", p.v_h, G, P)
    levels = [3 * pair.t_fast + k * pair.step for k in range(4)]
    refs = [p.tdc_shift + (i + 1) * p.tdc_step for i in range(3)]
    for i, r in enumerate(refs):
        assert r == pytest.approx(0.5 * (levels[i] + levels[i + 1]), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(50e-12, 5e-9))
def test_fit_hits_any_positive_target(ds):
    p = fit_parameters(CFG, G, P, 3, {"and": ds})["and"]
    pair = stage_pair(replace(CFG, c_bank=p.c_bank), "and", p.v_h, G, P)
    assert pair.step == pytest.approx(ds, rel=1e-9)


@pytest.mark.parametrize("ds", [0.0, -1e-12])
def test_non_positive_target_rejected(ds):
    with pytest.raises(TargetUnreachable):
        fit_parameters(CFG, G, P, 3, {"and": ds})


def test_vh_outside_drive_or_window():
    for vh in (0.1, 1.2, 2.0):
        with pytest.raises(TargetUnreachable):
            fit_parameters(CFG, G, P, 3, v_h=vh)


def test_solve_for_vh_round_trip():
    cfg = replace(CFG, c_bank=15e-15)
    p = fit_parameters(cfg, G, P, 3, {"and": 550e-12}, solve_for="v_h")["and"]
    assert p.c_bank == 15e-15
    assert 0.2 < p.v_h < 1.1
    pair = stage_pair(cfg, "and", p.v_h, G, P)
    assert pair.step == pytest.approx(550e-12, rel=1e-9)


def test_solve_for_vh_unreachable():
    with pytest.raises(TargetUnreachable):
        fit_parameters(replace(CFG, c_bank=15e-15), G, P, 3, {"xor": 1.3e-9}, solve_for="v_h")


def test_leaker_clamps_off_cell():
    # an ideal (infinite) off resistance moves t_dH by under 1%
    p = fit_parameters(CFG, G, P, 3)
    hvt = FeFetState.saturated(G, P, -1)
    ideal = FeFetState.saturated(G, DeviceParams(r_off=1e30), -1)
    for mode in ("and", "xor"):
        cfg = replace(CFG, c_bank=p[mode].c_bank)
        t = stage_delay(cfg, CamCell(hvt, hvt), StageDrive(0.0, 0.0))
        t_ideal = stage_delay(cfg, CamCell(ideal, ideal), StageDrive(0.0, 0.0))
        assert abs(t - t_ideal) / t_ideal < 0.01
