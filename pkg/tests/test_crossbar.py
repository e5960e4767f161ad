import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sotneuron.crossbar import (Calibration, ReadoutKind, ReadoutModel, column_voltages,
                                device_conductances, load_layers, map_weights, mvm_ideal,
                                raw_column_voltages, save_layers, sense_resistance)
from sotneuron.device import MtjParams
from sotneuron.fet import Rails
from oracles import mna_differential, mna_divider, naive_matmul

DEVICE = MtjParams.from_device_units()
W4x2 = np.array([[1, -1], [-1, -1], [1, 1], [-1, 1]])
DIVIDER = ReadoutModel(ReadoutKind.NORMALIZED_DIVIDER)


def test_toy_divider_matches_nodal_analysis():
    layer = map_weights(W4x2, DEVICE, DIVIDER)
    rng = np.random.default_rng(1)
    for v in rng.uniform(0, 0.8, (20, 4)):
        assert np.allclose(column_voltages(layer, v), mna_divider(v, layer.g_pos), rtol=0, atol=1e-12)


def test_toy_differential_matches_nodal_analysis():
    layer = map_weights(W4x2, DEVICE)
    rng = np.random.default_rng(2)
    for v in rng.uniform(0, 0.8, (20, 4)):
        ref = mna_differential(v, layer.g_pos, layer.g_neg, layer.readout.r_sense)
        assert np.allclose(raw_column_voltages(layer, v), ref, rtol=0, atol=1e-12)


def test_mvm_matches_triple_loop():
    rng = np.random.default_rng(3)
    w = rng.choice([-1, 1], (37, 11))
    x = rng.uniform(0, 1, (5, 37))
    assert np.allclose(mvm_ideal(w, x), naive_matmul(x.tolist(), w.tolist()), rtol=1e-15, atol=1e-13)


def test_mapping_puts_low_resistance_on_positive_line():
    g_p, g_ap = device_conductances(DEVICE)
    layer = map_weights(W4x2, DEVICE)
    assert layer.g_pos[0, 0] == g_p and layer.g_neg[0, 0] == g_ap
    assert layer.g_pos[1, 0] == g_ap and layer.g_neg[1, 0] == g_p


def test_non_binary_weights_rejected():
    with pytest.raises(ValueError):
        map_weights(np.array([[1, 0]]), DEVICE)


def test_divider_constant_input_identity():
    layer = map_weights(W4x2, DEVICE, DIVIDER)
    assert np.allclose(column_voltages(layer, np.full(4, 0.37)), 0.37, atol=1e-15)


def test_differential_zero_input_gives_offset():
    layer = map_weights(W4x2, DEVICE).with_calibration(Calibration(3.0, 0.25))
    assert np.allclose(column_voltages(layer, np.zeros(4)), 0.25)


@settings(max_examples=50)
@given(st.lists(st.floats(0, 0.8), min_size=4, max_size=4))
def test_divider_is_convex_combination(v):
    out = column_voltages(map_weights(W4x2, DEVICE, DIVIDER), v)
    assert np.all(out >= min(v) - 1e-15) and np.all(out <= max(v) + 1e-15)


def test_differential_is_exact_affine_map_of_dot_product():
    rng = np.random.default_rng(4)
    w = rng.choice([-1, 1], (400, 120))
    x = rng.uniform(0, 1, (300, 400))
    layer = map_weights(w, DEVICE)
    g_p, g_ap = device_conductances(DEVICE)
    raw = raw_column_voltages(layer, 0.8 * x)
    assert np.allclose(raw, layer.readout.r_sense * (g_p - g_ap) * 0.8 * (x @ w), rtol=1e-12)


def test_divider_decomposes_into_common_mode_and_dot_product():
    # sum(G) v_col = a * sum(v) + b * (w . v) exactly, a = (G_P + G_AP)/2, b = (G_P - G_AP)/2;
    # the common-mode term varies with the input, so v_col alone is only
    # loosely correlated with the dot product
    rng = np.random.default_rng(5)
    w = rng.choice([-1, 1], (400, 120))
    v = rng.uniform(0, 0.8, (300, 400))
    layer = map_weights(w, DEVICE, DIVIDER)
    g_p, g_ap = device_conductances(DEVICE)
    lhs = raw_column_voltages(layer, v) * layer.g_pos.sum(axis=0)
    rhs = 0.5 * (g_p + g_ap) * v.sum(axis=1, keepdims=True) + 0.5 * (g_p - g_ap) * (v @ w)
    assert np.allclose(lhs, rhs, rtol=1e-12)


def test_differential_clamps_to_rails():
    layer = map_weights(W4x2, DEVICE).with_calibration(Calibration(1e3, 0.0))
    out = column_voltages(layer, np.array([0.8, 0.0, 0.8, 0.0]))
    assert out.min() >= 0.0 and out.max() <= 0.8


def test_sense_resistance_maps_full_scale_to_span():
    rows = 10
    r = sense_resistance(rows, DEVICE, 0.5)
    layer = map_weights(np.ones((rows, 1), int), DEVICE,
                        ReadoutModel(ReadoutKind.DIFFERENTIAL_SENSE, r))
    assert raw_column_voltages(layer, np.full(rows, 0.8))[0] == pytest.approx(0.5)


def test_readout_validation():
    with pytest.raises(ValueError):
        ReadoutModel(ReadoutKind.DIFFERENTIAL_SENSE, r_sense=None)
    with pytest.raises(ValueError):
        Calibration(float("inf"), 0.0)
    with pytest.raises(ValueError):
        raw_column_voltages(map_weights(W4x2, DEVICE), np.zeros(3))


def test_layers_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    layers = [map_weights(rng.choice([-1, 1], (8, 5)), DEVICE).with_calibration(Calibration(2.0, 0.1)),
              map_weights(rng.choice([-1, 1], (5, 3)), DEVICE, DIVIDER)]
    back = load_layers(save_layers(layers, tmp_path), DEVICE, Rails())
    v = rng.uniform(0, 0.8, 8)
    for a, b in zip(layers, back):
        assert np.array_equal(a.weights, b.weights)
        assert a.readout == b.readout
    assert np.array_equal(column_voltages(layers[0], v), column_voltages(back[0], v))
