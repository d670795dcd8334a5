import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from quantscore.errors import DomainError
from quantscore.model import FloatModel, init_weights, simple_cnn
from quantscore.quant import (
    AffineParams,
    CalibrationStats,
    QuantConfig,
    apply_quantization,
    calibrate,
    compression_ratio,
    fake_quantize_weights,
    quantize_activations_affine,
    quantize_weights_symmetric,
    round_half_away,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, width=32)


def test_symmetric_oracle():
    q, scale = quantize_weights_symmetric(np.array([-1.0, -0.5, 0.25, 1.0]), 2)
    # 2 bits -> grid {-1, 0, 1}; 0.5/1.0 rounds half away from zero
    assert scale == 1.0
    assert q.tolist() == [-1, -1, 0, 1]


def test_round_half_away_from_zero():
    assert round_half_away(np.array([0.5, 1.5, -0.5, -2.5])).tolist() == [1.0, 2.0, -1.0, -3.0]


def test_zero_tensor():
    q, scale = quantize_weights_symmetric(np.zeros(5), 8)
    assert scale == 0.0 and not q.any()
    assert not fake_quantize_weights(np.zeros(5, np.float32), 8).any()


@pytest.mark.parametrize("bits", [2, 4, 8, 16])
@given(w=arrays(np.float64, st.integers(1, 50), elements=finite))
def test_symmetric_error_bound(bits, w):
    q, scale = quantize_weights_symmetric(w, bits)
    qmax = 2 ** (bits - 1) - 1
    assert np.abs(q).max() <= qmax
    assert np.all(np.abs(q * scale - w) <= scale / 2 * (1 + 1e-9) + 1e-12)


@given(w=arrays(np.float64, st.integers(1, 50), elements=finite))
def test_symmetric_grid_is_symmetric(w):
    q, scale = quantize_weights_symmetric(w, 4)
    q_neg, scale_neg = quantize_weights_symmetric(-w, 4)
    assert scale == scale_neg and np.array_equal(q, -q_neg)


def test_bits_domain():
    with pytest.raises(DomainError):
        quantize_weights_symmetric(np.ones(3), 3)
    with pytest.raises(DomainError):
        quantize_weights_symmetric(np.array([np.inf]), 8)


@pytest.mark.parametrize("bits", [2, 4, 8, 16])
@given(x=arrays(np.float64, st.integers(1, 50), elements=st.floats(-5, 20)))
def test_affine_error_bound_inside_range(bits, x):
    lo, hi = float(x.min()), float(x.max())
    params = AffineParams.from_range(lo, hi, bits)
    y = params.apply(x)
    if params.scale == 0:
        assert np.all(y == 0)
        return
    assert 0 <= params.zero_point <= 2 ** bits - 1
    # rounding the zero point shifts the grid by at most half a step, so the
    # extreme of the range may cost up to one full step
    assert np.all(np.abs(y - x) <= params.scale * (1.0 + 1e-6) + 1e-6)


def test_affine_range_excluding_zero_is_widened():
    params = AffineParams.from_range(1.0, 2.0, 8)
    assert params.low == 0.0 and params.zero_point == 0
    assert quantize_activations_affine(np.array([2.0]), (1.0, 2.0), 8)[0] == pytest.approx(2.0)


def test_affine_zero_is_exact():
    y = quantize_activations_affine(np.array([0.0, 1.0, 6.0]), (0.0, 6.0), 8)
    assert y[0] == 0.0


def test_affine_clamps_outside_range():
    y = quantize_activations_affine(np.array([-10.0, 100.0]), (0.0, 6.0), 4)
    assert y[0] == 0.0 and y[1] == pytest.approx(6.0)


def test_affine_rejects_inverted_range():
    with pytest.raises(DomainError):
        AffineParams.from_range(1.0, 0.0, 8)


def test_quant_config_parse_and_str():
    cfg = QuantConfig.parse("8-8-8-4")
    assert cfg.per_layer_bits == (8, 8, 8, 4) and str(cfg) == "8-8-8-4" and len(cfg) == 4
    assert QuantConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(DomainError):
        QuantConfig.parse("8-x")
    with pytest.raises(DomainError):
        QuantConfig((8, 5))


def test_compression_modes():
    net = simple_cnn()
    assert compression_ratio(QuantConfig.uniform(4, 4)) == 8.0
    assert compression_ratio(QuantConfig.parse("8-8-8-4"), "geometric") == pytest.approx(32 / 7)
    # fc1 holds most parameters, so its bit-width dominates the weighted ratio
    assert compression_ratio(QuantConfig.parse("16-16-2-16"), "size_weighted", net) > 12
    with pytest.raises(DomainError):
        compression_ratio(QuantConfig.parse("8-4"))
    with pytest.raises(DomainError):
        compression_ratio(QuantConfig.uniform(8, 4), "size_weighted")


@pytest.fixture(scope="module")
def model_parts():
    net = simple_cnn()
    weights = init_weights(net, 0)
    x = np.random.default_rng(0).random((16, 1, 28, 28), dtype=np.float32)
    return net, weights, x, calibrate(net, weights, x)


def test_calibration_ranges(model_parts):
    net, weights, x, stats = model_parts
    assert stats.sample_count == 16 and len(stats.activation_min) == 4
    assert all(lo >= 0 for lo in stats.activation_min[:3])  # post-ReLU
    assert CalibrationStats(**stats.to_json()) == stats


def test_all_32_bit_is_bit_identical(model_parts):
    net, weights, x, stats = model_parts
    q = apply_quantization(net, weights, QuantConfig.uniform(32, 4), stats)
    assert np.array_equal(q.forward(x), FloatModel(net, weights).forward(x))


def test_monotone_fidelity(model_parts):
    net, weights, x, stats = model_parts
    ref = FloatModel(net, weights).forward(x)
    errors = [
        np.abs(apply_quantization(net, weights, QuantConfig.uniform(b, 4), stats).forward(x) - ref).mean()
        for b in (2, 4, 8, 16)
    ]
    assert errors == sorted(errors, reverse=True)


def test_biases_stay_float(model_parts):
    net, weights, _, stats = model_parts
    q = apply_quantization(net, weights, QuantConfig.uniform(2, 4), stats)
    assert q.weights[0]["bias"] is weights[0]["bias"]
    assert len(np.unique(q.weights[0]["weight"])) <= 3


def test_config_length_mismatch(model_parts):
    net, weights, _, stats = model_parts
    with pytest.raises(DomainError):
        apply_quantization(net, weights, QuantConfig.uniform(8, 3), stats)
    with pytest.raises(DomainError):
        apply_quantization(net, weights, QuantConfig.uniform(8, 4), None)
