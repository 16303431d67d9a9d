import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fefet_tdimc.tdc import (
    BubbleError,
    TdcConfig,
    ThermometerCode,
    digitize,
    generate_references,
    therm_to_binary,
)

PS = 1e-12


def test_reference_ladder():
    refs = generate_references(TdcConfig(3, 550 * PS, 0.0))
    assert refs == pytest.approx([550 * PS, 1100 * PS, 1650 * PS], rel=1e-12)


@given(st.floats(-1e-9, 1e-9), st.floats(1e-12, 1e-9), st.integers(1, 12))
def test_shift_and_spacing(shift, step, n):
    base = generate_references(TdcConfig(n, step, 0.0))
    refs = generate_references(TdcConfig(n, step, shift))
    assert np.allclose(np.array(refs) - np.array(base), shift, rtol=0, atol=1e-24)
    assert np.allclose(np.diff(refs), step, rtol=1e-9, atol=0)


def test_digitize_extremes_and_tie():
    refs = generate_references(TdcConfig(3, 550 * PS))
    assert digitize(0.0, refs).bits == (0, 0, 0)
    assert digitize(1e-9 * 10, refs).bits == (1, 1, 1)
    assert digitize(refs[1], refs).bits == (1, 0, 0)
    assert digitize(refs[0], refs).bits == (0, 0, 0)


def test_therm_to_binary():
    assert therm_to_binary(ThermometerCode((0, 0, 0))) == 0
    assert therm_to_binary(ThermometerCode((1, 1, 1))) == 3
    with pytest.raises(BubbleError) as e:
        therm_to_binary(ThermometerCode((0, 1, 0)))
    assert e.value.bits == (0, 1, 0)


def test_valid_codes_bijective():
    for n in range(1, 8):
        valid = [c for c in product((0, 1), repeat=n) if ThermometerCode(c).is_valid]
        assert len(valid) == n + 1
        assert sorted(therm_to_binary(ThermometerCode(c)) for c in valid) == list(range(n + 1))
        for k in range(n + 1):
            code = ThermometerCode(tuple([1] * k + [0] * (n - k)))
            assert therm_to_binary(code) == k


def test_unsorted_refs_rejected():
    with pytest.raises(ValueError):
        digitize(1.0, [2.0, 1.0])
    assert digitize(1.5, [2.0, 1.0], check_sorted=False).bits == (0, 1)


def test_config_validation():
    with pytest.raises(ValueError):
        TdcConfig(0)
    with pytest.raises(ValueError):
        TdcConfig(3, 0.0)
    with pytest.raises(ValueError):
        TdcConfig(3, 1e-12, tie_rule="edge_wins")


def floor_oracle(t, step, shift, n):
    """Number of references strictly below ``t``, by integer arithmetic."""
    x = (t - shift) / step
    k = math.ceil(x) - 1  # refs at integers 1..n; a tie at an integer is not counted
    return min(max(k, 0), n)


def test_brute_force_against_floor():
    # integer-picosecond grid keeps the ladder and the edges exact
    step, shift, n = 550, -275, 3
    refs = [shift + (i + 1) * step for i in range(n)]
    for t in np.linspace(-500, 2500, 10_001):
        t = float(round(t, 1))
        code = therm_to_binary(digitize(t, refs))
        assert code == floor_oracle(t, step, shift, n), t
    for r in refs:
        assert therm_to_binary(digitize(float(r), refs)) == floor_oracle(r, step, shift, n)
