import numpy as np
import pytest

from quantscore.data import synth_gaussian_blobs
from quantscore.errors import DomainError, ShapeError, TrainingError
from quantscore.model import (
    FloatModel,
    NetworkDef,
    TrainConfig,
    conv2d,
    evaluate_accuracy,
    evaluate_model,
    flatten,
    forward,
    fully_connected,
    init_weights,
    maxpool2d,
    predict,
    relu,
    simple_cnn,
    train_baseline,
)
from quantscore.model.train import split_validation


def test_simple_cnn_shapes():
    net = simple_cnn()
    assert net.quantizable_indices == [0, 3, 7, 9]
    assert net.output_shape(5) == (64, 7, 7)
    assert net.param_shapes(7)["weight"] == (128, 64 * 7 * 7)
    w = init_weights(net, 0)
    out = forward(net, w, np.zeros((2, 1, 28, 28), np.float32))
    assert out.shape == (2, 10) and out.dtype == np.float32


def test_shape_error_names_layer():
    with pytest.raises(ShapeError, match="layer 1"):
        NetworkDef((flatten(), conv2d(4)), (1, 8, 8), 4)


def test_num_classes_mismatch():
    with pytest.raises(ShapeError):
        NetworkDef((flatten(), fully_connected(3)), (1, 4, 4), 10)


def test_kernel_too_large():
    with pytest.raises(ShapeError, match="layer 0"):
        NetworkDef((conv2d(2, kernel=9, padding=0), flatten(), fully_connected(2)), (1, 4, 4), 2)


def test_bad_batch_shape():
    net = simple_cnn()
    with pytest.raises(ShapeError, match="input"):
        forward(net, init_weights(net), np.zeros((2, 1, 27, 28), np.float32))


def test_roundtrip_dict_and_hash():
    net = simple_cnn()
    again = NetworkDef.from_dict(net.to_dict())
    assert again == net and again.arch_hash() == net.arch_hash()
    assert simple_cnn(num_classes=3).arch_hash() != net.arch_hash()


def test_init_is_seeded():
    net = simple_cnn()
    a, b, c = init_weights(net, 1), init_weights(net, 1), init_weights(net, 2)
    assert all(np.array_equal(a[i]["weight"], b[i]["weight"]) for i in a)
    assert not np.array_equal(a[0]["weight"], c[0]["weight"])


def test_hook_sees_rectified_activations():
    net = simple_cnn()
    seen = []
    forward(net, init_weights(net), np.random.default_rng(0).random((2, 1, 28, 28), dtype=np.float32),
            act_hook=lambda o, i, x: seen.append((o, i, float(x.min()))) or x)
    assert [s[0] for s in seen] == [0, 1, 2, 3]
    assert all(m >= 0 for _, _, m in seen[:3])  # fused ReLU
    assert [s[1] for s in seen] == [1, 4, 8, 9]


def test_batch_invariance():
    net = simple_cnn()
    model = FloatModel(net, init_weights(net))
    x = np.random.default_rng(0).random((8, 1, 28, 28), dtype=np.float32)
    full = model.forward(x)
    singles = np.concatenate([model.forward(x[i:i + 1]) for i in range(8)])
    np.testing.assert_allclose(full, singles, rtol=1e-5, atol=1e-6)


def test_predict_tie_goes_to_lowest_index():
    class Const:
        def forward(self, batch):
            return np.zeros((len(batch), 4), np.float32)

    assert predict(Const(), np.zeros((3, 1, 2, 2), np.float32)).tolist() == [0, 0, 0]


def test_evaluate_empty():
    data = synth_gaussian_blobs(3, 30, seed=0).subset([])
    with pytest.raises(DomainError):
        evaluate_model(None, data)


def _tiny_net():
    return NetworkDef((conv2d(4), relu(), maxpool2d(2), flatten(), fully_connected(16), relu(), fully_connected(3)), (1, 8, 8), 3)


def test_training_learns_separable_blobs():
    net = _tiny_net()
    # class centres depend on the seed, so both splits come from one draw
    blobs = synth_gaussian_blobs(3, 450, separation=6.0, seed=0)
    data, test = blobs.subset(np.arange(300)), blobs.subset(np.arange(300, 450))
    result = train_baseline(net, data, TrainConfig(epochs=8, batch_size=32, learning_rate=1e-2, seed=0))
    assert evaluate_accuracy(net, result.weights, test) > 0.9
    assert 1 <= result.best_epoch <= 8
    assert len(result.history) == 8


def test_training_is_deterministic():
    net = _tiny_net()
    data = synth_gaussian_blobs(3, 120, seed=0)
    cfg = TrainConfig(epochs=2, batch_size=32, seed=7)
    a, b = train_baseline(net, data, cfg), train_baseline(net, data, cfg)
    assert all(np.array_equal(a.weights[i]["weight"], b.weights[i]["weight"]) for i in a.weights)


def test_zero_epochs_returns_initialisation():
    net = _tiny_net()
    result = train_baseline(net, synth_gaussian_blobs(3, 60, seed=0), TrainConfig(epochs=0, seed=3))
    init = init_weights(net, 3)
    assert result.best_epoch == 0
    assert all(np.array_equal(result.weights[i]["weight"], init[i]["weight"]) for i in init)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported_with_epoch():
    net = _tiny_net()
    with pytest.raises(TrainingError, match=r"epoch \d"):
        train_baseline(net, synth_gaussian_blobs(3, 60, seed=0), TrainConfig(epochs=2, learning_rate=1e30))


def test_split_validation_is_disjoint():
    data = synth_gaussian_blobs(3, 100, seed=0)
    train, val = split_validation(data, 0.2, seed=0)
    assert len(train) == 80 and len(val) == 20
