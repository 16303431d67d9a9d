from itertools import combinations, product

import numpy as np
import pytest

from fefet_tdimc.ops import and_mac, bool_logic, full_adder, xor_mac


def row_matrix(w):
    w = np.asarray(w)
    m = np.tile(1 - w, (3, 1))
    m[0] = w
    return m


def test_xor_extremes(macro_for):
    w = (1, 0, 1)
    m = macro_for(row_matrix(w), "xor")
    r = xor_mac(m, 0, w)
    assert (r.tdc_code, r.decoded_value) == (0, 3)
    r = xor_mac(m, 0, tuple(1 - x for x in w))
    assert (r.tdc_code, r.decoded_value) == (3, -3)


def test_xor_truth_table(macro_for):
    for w in product((0, 1), repeat=3):
        m = macro_for(row_matrix(w), "xor")
        for x in product((0, 1), repeat=3):
            oracle = sum(1 if a == b else -1 for a, b in zip(x, w))
            assert xor_mac(m, 0, x).decoded_value == oracle


def test_and_extremes(macro_for):
    m = macro_for(np.ones((3, 3), int), "and")
    r = and_mac(m, 0, (1, 1, 1))
    assert (r.tdc_code, r.decoded_value) == (0, 3)
    for w in product((0, 1), repeat=3):
        r = and_mac(macro_for(row_matrix(w)), 0, (0, 0, 0))
        assert (r.tdc_code, r.decoded_value) == (3, 0)


def test_and_truth_table(macro_for):
    for w in product((0, 1), repeat=3):
        m = macro_for(row_matrix(w), "and")
        for x in product((0, 1), repeat=3):
            r = and_mac(m, 0, x)
            assert r.decoded_value == sum(a & b for a, b in zip(x, w))
            assert len(r.per_stage_trace) == 3
            assert r.total_delay == pytest.approx(sum(r.per_stage_trace))


def test_other_rows_do_not_load_the_chain(macro_for):
    w = (1, 1, 0)
    a = and_mac(macro_for(row_matrix(w)), 0, (1, 1, 1))
    only = np.zeros((3, 3), int)
    only[0] = w
    b = and_mac(macro_for(only), 0, (1, 1, 1))
    assert a.total_delay == b.total_delay


def test_activation_validation(macro_for):
    m = macro_for(np.ones((3, 3), int))
    with pytest.raises(ValueError):
        and_mac(m, 0, (1, 1))
    with pytest.raises(ValueError):
        and_mac(m, 0, (1, 2, 0))


def test_bool_logic(macro_for):
    for stored in product((0, 1), repeat=3):
        m = macro_for(row_matrix(stored))
        for k in (1, 2, 3):
            for cols in combinations(range(3), k):
                sel = [stored[c] for c in cols]
                assert bool_logic(m, 0, cols, "and") == int(all(sel))
                assert bool_logic(m, 0, cols, "or") == int(any(sel))
        for c in range(3):
            assert bool_logic(m, 0, (c,), "and") == stored[c]


def test_bool_logic_validation(macro_for):
    m = macro_for(np.ones((3, 3), int))
    with pytest.raises(ValueError):
        bool_logic(m, 0, (), "and")
    with pytest.raises(ValueError):
        bool_logic(m, 0, (0, 0), "and")
    with pytest.raises(IndexError):
        bool_logic(m, 0, (3,), "or")
    with pytest.raises(ValueError):
        bool_logic(m, 0, (0, 1), "xor")


def test_full_adder(macro_for):
    for a, b, c in product((0, 1), repeat=3):
        s, carry = full_adder(macro_for(row_matrix((a, b, c))), 0, (0, 1, 2))
        assert 2 * carry + s == a + b + c
    with pytest.raises(ValueError):
        full_adder(macro_for(np.ones((3, 3), int)), 0, (0, 1))


def test_missing_preset_is_explicit(fitted_cfg):
    from dataclasses import replace
    m = replace(fitted_cfg, presets={}).build_macro(np.ones((3, 3), int))
    with pytest.raises(ValueError, match="preset"):
        and_mac(m, 0, (1, 1, 1))
