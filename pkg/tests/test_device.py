import math

import pytest
from hypothesis import given, strategies as st

from sotneuron.device import (DEVICE_DEFAULTS, HeavyMetalParams, MagState, MtjGeometry, MtjParams,
                              device_from_config, heavy_metal_resistance, mtj_resistance,
                              mtj_resistance_at_angle, tmr_effective)
from oracles import mtj_pair


def test_default_resistances_match_hand_values():
    mtj = MtjParams.from_device_units()
    r_p, r_ap = mtj_pair(50, 30, 10, 100)
    assert mtj_resistance(mtj, MagState.PARALLEL) == pytest.approx(r_p, rel=1e-12)
    assert mtj_resistance(mtj, MagState.ANTIPARALLEL) == pytest.approx(r_ap, rel=1e-12)
    assert mtj_resistance(mtj, MagState.PARALLEL) == pytest.approx(8488.26, rel=1e-6)
    assert mtj_resistance(mtj, MagState.ANTIPARALLEL) == pytest.approx(16976.53, rel=1e-6)


def test_heavy_metal_default():
    # 200 uOhm cm * 100 nm / (50 nm * 3 nm) = 2e-6 * 1e-7 / 1.5e-16
    assert heavy_metal_resistance(HeavyMetalParams.from_device_units()) == pytest.approx(1333.3333, rel=1e-6)


def test_area_is_elliptical():
    g = MtjGeometry.from_nm(50, 30)
    assert g.area == pytest.approx(50e-9 * 30e-9 * math.pi / 4)


def test_tmr_bias_halves_at_v0():
    assert tmr_effective(100, 0.65, 0.65) == pytest.approx(0.5)
    assert tmr_effective(100, 0.0, 0.65) == pytest.approx(1.0)


def test_zero_tmr_collapses_states():
    mtj = MtjParams.from_device_units(tmr0_percent=0)
    assert mtj_resistance(mtj, MagState.PARALLEL) == mtj_resistance(mtj, MagState.ANTIPARALLEL)


def test_angle_form_matches_states():
    mtj = MtjParams.from_device_units()
    assert mtj_resistance_at_angle(mtj, 0.0) == pytest.approx(mtj_resistance(mtj, MagState.PARALLEL))
    assert mtj_resistance_at_angle(mtj, math.pi) == pytest.approx(mtj_resistance(mtj, MagState.ANTIPARALLEL))


@given(st.floats(0, 1000), st.floats(-2, 2), st.floats(0.05, 2))
def test_bias_reduces_contrast(tmr0, v, v0):
    mtj = MtjParams.from_device_units(tmr0_percent=tmr0, v0_volt=v0)
    r_p = mtj_resistance(mtj, MagState.PARALLEL, v)
    r_ap = mtj_resistance(mtj, MagState.ANTIPARALLEL, v)
    r_ap0 = mtj_resistance(mtj, MagState.ANTIPARALLEL, 0.0)
    assert r_p <= r_ap <= r_ap0 * (1 + 1e-12)


@given(st.floats(1, 100), st.floats(1, 100))
def test_parallel_resistance_scales_inverse_area(scale_l, scale_w):
    a = MtjParams.from_device_units(length_nm=50, width_nm=30)
    b = MtjParams.from_device_units(length_nm=50 * scale_l, width_nm=30 * scale_w)
    ratio = mtj_resistance(a, MagState.PARALLEL) / mtj_resistance(b, MagState.PARALLEL)
    assert ratio == pytest.approx(scale_l * scale_w, rel=1e-9)


@pytest.mark.parametrize("kwargs", [dict(length_nm=0), dict(width_nm=-1), dict(ra_ohm_um2=0),
                                    dict(tmr0_percent=-1), dict(v0_volt=0)])
def test_invalid_mtj_rejected(kwargs):
    with pytest.raises(ValueError):
        MtjParams.from_device_units(**kwargs)


def test_non_finite_bias_rejected():
    with pytest.raises(ValueError):
        tmr_effective(100, float("nan"), 0.65)


def test_config_block():
    mtj, hm = device_from_config({"ra_ohm_um2": 20})
    assert mtj_resistance(mtj, MagState.PARALLEL) == pytest.approx(2 * 8488.26, rel=1e-6)
    assert set(DEVICE_DEFAULTS) >= {"ra_ohm_um2", "tmr0_percent"}
    with pytest.raises(KeyError):
        device_from_config({"ra": 20})
