import math

import numpy as np
import pytest
from sklearn.base import clone

from advbench import classifier as clf
from advbench.data import synth_shapes

from conftest import micro_params, random_params, uniform_params


def micro_oracle(pixel, w=(0.02, -0.02)):
    """Hand arithmetic for the 1-pixel, 2-class linear model."""
    x = pixel / 255.0
    z = [w[0] * x, w[1] * x]
    m = max(z)
    e = [math.exp(v - m) for v in z]
    p = [v / sum(e) for v in e]
    return z, p


def micro_grad_oracle(pixel, label, w=(0.02, -0.02)):
    _, p = micro_oracle(pixel, w)
    return sum((p[j] - (1.0 if j == label else 0.0)) * w[j] for j in range(2)) / 255.0


def fd_gradient(params, image, label, h_norm=1e-4):
    """Central differences with step h_norm on the normalized pixel scale."""
    h = h_norm / params.scale
    flat = image.astype(np.float64).ravel()
    grad = np.empty_like(flat)
    for i in range(flat.size):
        up, down = flat.copy(), flat.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (clf.loss(params, up.reshape(image.shape), label)
                   - clf.loss(params, down.reshape(image.shape), label)) / (2 * h)
    return grad.reshape(image.shape)


def max_relative_error(analytic, numeric):
    scale = max(np.abs(analytic).max(), np.abs(numeric).max())
    return 0.0 if scale == 0 else float(np.abs(analytic - numeric).max() / scale)


def test_init_deterministic_with_zero_biases():
    a = clf.init_params(3, clf.REFERENCE_ARCH, 10)
    b = clf.init_params(3, clf.REFERENCE_ARCH, 10)
    assert a.layer_sizes == (784, 256, 128, 10)
    for wa, wb, ba in zip(a.weights, b.weights, a.biases):
        np.testing.assert_array_equal(wa, wb)
        assert not ba.any()
    limit = math.sqrt(6 / (784 + 256))
    assert np.abs(a.weights[0]).max() <= limit


def test_inconsistent_architecture_rejected():
    arch = clf.Architecture((2, 2, 1), (3,), "relu")
    with pytest.raises(ValueError):
        clf.ModelParams(arch, (np.zeros((4, 5)), np.zeros((5, 2))), (np.zeros(5), np.zeros(2)))
    with pytest.raises(ValueError):
        clf.Architecture((2, 2, 2), (3,))


def test_forward_probabilities_sum_to_one():
    params = random_params(0)
    img = np.random.default_rng(0).integers(0, 256, (4, 4, 1))
    pred = clf.forward(params, img)
    assert abs(pred.probabilities.sum() - 1) <= 1e-9
    assert sorted(pred.ranked_labels.tolist()) == list(range(4))


def test_zero_model_is_uniform():
    params = uniform_params(10)
    pred = clf.forward(params, np.full((4, 4, 1), 77))
    np.testing.assert_allclose(pred.probabilities, 0.1, atol=1e-15)
    assert clf.loss(params, np.full((4, 4, 1), 77), 3) == pytest.approx(math.log(10), abs=1e-12)
    assert clf.predict_topk(params, np.zeros((4, 4, 1), int), 3).tolist() == [0, 1, 2]


def test_micro_forward_loss_topk(micro):
    z, p = micro_oracle(255)
    pred = clf.forward(micro, np.array([[[255]]]))
    np.testing.assert_allclose(pred.logits, z, rtol=0, atol=1e-15)
    np.testing.assert_allclose(pred.probabilities, p, rtol=0, atol=1e-15)
    assert clf.loss(micro, np.array([[[255]]]), 1) == pytest.approx(-math.log(p[1]), abs=1e-12)
    assert clf.predict_topk(micro, np.array([[[255]]]), 1).tolist() == [0]


def test_loss_zero_when_certain():
    params = micro_params(w=(2000.0, -2000.0))
    assert clf.loss(params, np.array([[[255]]]), 0) == pytest.approx(0.0, abs=1e-12)


def test_loss_label_out_of_range(micro):
    with pytest.raises(ValueError):
        clf.loss(micro, np.array([[[1]]]), 2)


def test_shape_mismatch(micro):
    with pytest.raises(ValueError):
        clf.forward(micro, np.zeros((2, 2, 1), int))


@pytest.mark.parametrize("pixel", [0, 17, 128, 255])
@pytest.mark.parametrize("label", [0, 1])
def test_micro_gradient_closed_form(micro, pixel, label):
    g = clf.input_gradient(micro, np.array([[[pixel]]]), label)
    assert g.shape == (1, 1, 1)
    assert g[0, 0, 0] == pytest.approx(micro_grad_oracle(pixel, label), rel=1e-12, abs=1e-18)


def test_zero_first_layer_gives_zero_gradient():
    params = random_params(1)
    weights = (np.zeros_like(params.weights[0]),) + params.weights[1:]
    params = clf.ModelParams(params.arch, weights, params.biases)
    g = clf.input_gradient(params, np.full((4, 4, 1), 90), 2)
    assert not g.any()


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_gradient_matches_finite_differences(activation):
    rng = np.random.default_rng(11)
    for seed in range(6):
        params = random_params(seed, (3, 3, 1), (7, 5), 3, activation)
        img = rng.uniform(0, 255, (3, 3, 1))
        label = int(rng.integers(0, 3))
        analytic = clf.input_gradient(params, img, label)
        assert max_relative_error(analytic, fd_gradient(params, img, label)) <= 1e-4


def test_batch_gradient_equals_per_image():
    params = random_params(2)
    imgs = np.random.default_rng(2).integers(0, 256, (5, 4, 4, 1))
    labels = [0, 1, 2, 3, 0]
    batch = clf.input_gradient(params, imgs, labels)
    for i in range(5):
        np.testing.assert_allclose(batch[i], clf.input_gradient(params, imgs[i], labels[i]), atol=1e-15)


def test_gradient_sign_scale_invariant():
    params = random_params(4)
    g = clf.input_gradient(params, np.full((4, 4, 1), 30), 1)
    for c in (1e-6, 0.5, 3.0, 1e6):
        np.testing.assert_array_equal(np.sign(c * g), np.sign(g))


def _small_data():
    return synth_shapes(5, 6, 16)


def test_train_zero_epochs_is_identity():
    data = _small_data()
    params = clf.init_params(0, clf.Architecture((16, 16, 1), (12,)), 10)
    assert clf.train(params, data, clf.TrainConfig(epochs=0)) is params


def test_train_deterministic_and_pure():
    data = _small_data()
    params = clf.init_params(0, clf.Architecture((16, 16, 1), (12,)), 10)
    before = [w.copy() for w in params.weights]
    cfg = clf.TrainConfig(seed=1, epochs=2, batch_size=7, learning_rate=0.1, momentum=0.5)
    a = clf.train(params, data, cfg)
    b = clf.train(params, data, cfg)
    for wa, wb, w0, wp in zip(a.weights, b.weights, before, params.weights):
        np.testing.assert_array_equal(wa, wb)
        np.testing.assert_array_equal(w0, wp)
        assert not np.array_equal(wa, w0)


def test_train_config_validation():
    with pytest.raises(ValueError):
        clf.TrainConfig(momentum=1.0)
    with pytest.raises(ValueError):
        clf.TrainConfig(batch_size=0)


def test_topk_range(micro):
    with pytest.raises(ValueError):
        clf.predict_topk(micro, np.array([[[3]]]), 3)
    params = random_params(3)
    ranked = clf.predict_topk(params, np.full((4, 4, 1), 9), 4)
    assert sorted(ranked.tolist()) == [0, 1, 2, 3]


def test_checkpoint_roundtrip(tmp_path):
    params = random_params(8, hidden=(5,))
    path = tmp_path / "m.ckpt"
    clf.save_checkpoint(path, params)
    text = path.read_text()
    assert text.splitlines()[0] == "ADVBENCH-CKPT 1"
    loaded = clf.load_checkpoint(path)
    assert loaded.arch == params.arch
    for a, b in zip(loaded.weights + loaded.biases, params.weights + params.biases):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(clf.CheckpointError):
        clf.parse_checkpoint("NOPE\n")


def test_estimator_api():
    data = _small_data()
    est = clf.SoftmaxMLPClassifier(hidden_layer_sizes=(16,), epochs=3, random_state=0)
    assert clone(est).get_params() == est.get_params()
    est.fit(data.images, data.labels)
    proba = est.predict_proba(data.images)
    assert proba.shape == (len(data), 10)
    assert est.predict(data.images).shape == (len(data),)
    assert 0.0 <= est.score(data.images, data.labels) <= 1.0
    wrapped = clf.SoftmaxMLPClassifier.from_params(est.params_)
    np.testing.assert_array_equal(wrapped.predict_proba(data.images), proba)
