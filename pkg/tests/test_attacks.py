import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advbench import attacks as atk
from advbench import classifier as clf
from advbench.attacks import AttackConfig
from advbench.core import linf_distance

from conftest import random_params, uniform_params
from test_classifier import micro_grad_oracle, micro_oracle


def sgn(v):
    return (v > 0) - (v < 0)


def clip_oracle(x, cand, eps):
    lo, hi = max(0, x - eps), min(255, x + eps)
    return min(max(cand, lo), hi)


def simulate(pixel, label, eps, alpha, iters, direction):
    """Step-by-step scripted trajectory for the 1-pixel micro-model."""
    x = cur = pixel
    path = []
    for _ in range(iters):
        cur = clip_oracle(x, cur + direction * alpha * sgn(micro_grad_oracle(cur, label)), eps)
        path.append(cur)
    return path


def px(v):
    return np.array([[[v]]])


def test_clip_examples():
    src = np.array([10, 250, 0])
    np.testing.assert_array_equal(atk.clip_eps(src, src, 7), src)
    assert atk.clip_eps(np.array([250]), np.array([270]), 10).tolist() == [255]
    assert atk.clip_eps(np.array([5]), np.array([-20]), 10).tolist() == [0]
    with pytest.raises(ValueError):
        atk.clip_eps(np.zeros(2), np.zeros(3), 1)


@pytest.mark.parametrize("eps, expected", [(16, 20), (8, 10), (2, 3), (1, 2), (4, 5), (20, 24)])
def test_default_iterations(eps, expected):
    assert atk.default_iterations(eps) == expected


def test_default_iterations_rejects_zero():
    with pytest.raises(ValueError):
        atk.default_iterations(0)


def test_fast_eps_zero_identity(micro):
    assert atk.fast(micro, px(200), 0, 0).tolist() == [[[200]]]


def test_fast_positive_gradient_adds_eps():
    params = random_params(0)
    img = np.random.default_rng(0).integers(0, 256, (4, 4, 1))
    out = atk.fast(params, img, 1, 10, gradient_fn=lambda p, x, y: np.ones(x.shape))
    np.testing.assert_array_equal(out, np.minimum(img + 10, 255))


@pytest.mark.parametrize("pixel, label", [(255, 0), (100, 1), (3, 0), (254, 1)])
def test_fast_micro_oracle(micro, pixel, label):
    expected = min(255, max(0, pixel + 4 * sgn(micro_grad_oracle(pixel, label))))
    assert atk.fast(micro, px(pixel), label, 4)[0, 0, 0] == expected


@pytest.mark.parametrize("pixel, label", [(100, 0), (254, 1), (1, 0), (128, 1)])
def test_basic_iterative_micro_trajectory(micro, pixel, label):
    path = simulate(pixel, label, 3, 1, 3, +1)
    for n in (1, 2, 3):
        cfg = AttackConfig("basic_iterative", 3, 1, n)
        assert atk.basic_iterative(micro, px(pixel), label, cfg)[0, 0, 0] == path[n - 1]


def test_basic_iterative_eps_zero():
    params = random_params(1)
    img = np.random.default_rng(1).integers(0, 256, (4, 4, 1))
    out = atk.basic_iterative(params, img, 2, AttackConfig("basic_iterative", 0, 1, 7))
    np.testing.assert_array_equal(out, img)


def test_basic_iterative_single_step_equals_fast():
    params = random_params(2)
    imgs = np.random.default_rng(2).integers(0, 256, (6, 4, 4, 1))
    labels = [0, 1, 2, 3, 1, 0]
    for eps in (1, 4, 16):
        a = atk.basic_iterative(params, imgs, labels, AttackConfig("basic_iterative", eps, eps, 1))
        np.testing.assert_array_equal(a, atk.fast(params, imgs, labels, eps))
        b = atk.basic_iterative(params, imgs, labels, AttackConfig("basic_iterative", eps, eps + 3, 1))
        np.testing.assert_array_equal(b, atk.fast(params, imgs, labels, eps))


def test_least_likely_label():
    assert atk.least_likely_label(uniform_params(10), np.zeros((4, 4, 1), int)) == 0
    params = random_params(5)
    for img in np.random.default_rng(5).integers(0, 256, (10, 4, 4, 1)):
        probs = clf.predict_proba(params, img)
        if np.unique(probs).size == probs.size:
            assert atk.least_likely_label(params, img) == clf.forward(params, img).ranked_labels[-1]


def test_least_likely_micro(micro):
    _, p = micro_oracle(255)
    assert p[1] < p[0]
    assert atk.least_likely_label(micro, px(255)) == 1
    cfg = AttackConfig("least_likely", 4, 4, 1)
    out = atk.least_likely_class_attack(micro, px(200), cfg)[0, 0, 0]
    assert out == 200 - 4 * sgn(micro_grad_oracle(200, 1)) == 196
    assert micro_oracle(out)[1][1] > micro_oracle(200)[1][1]


def test_least_likely_one_step_unrolled():
    params = random_params(6)
    img = np.random.default_rng(6).integers(0, 256, (4, 4, 1))
    y_ll = atk.least_likely_label(params, img)
    expected = atk.clip_eps(img, img - 2 * np.sign(clf.input_gradient(params, img, y_ll)), 8)
    out = atk.least_likely_class_attack(params, img, AttackConfig("least_likely", 8, 2, 1))
    np.testing.assert_array_equal(out, expected)


def test_least_likely_micro_trajectory(micro):
    path = simulate(130, 1, 6, 1, 6, -1)
    out = atk.least_likely_class_attack(micro, px(130), AttackConfig("least_likely", 6, 1, 6))
    assert out[0, 0, 0] == path[-1] == 124


def test_attack_config_validation():
    with pytest.raises(ValueError):
        AttackConfig("pgd", 4)
    with pytest.raises(ValueError):
        AttackConfig("basic_iterative", -1)
    with pytest.raises(ValueError):
        AttackConfig("basic_iterative", 4, alpha=0)
    assert AttackConfig("basic_iterative", 16).iterations == 20


def test_attacks_do_not_mutate_inputs():
    params = random_params(7)
    img = np.random.default_rng(7).integers(0, 256, (4, 4, 1))
    keep = img.copy()
    for cfg in (AttackConfig("fast", 8), AttackConfig("basic_iterative", 8),
                AttackConfig("least_likely", 8)):
        first = atk.generate(params, img, 1, cfg)
        np.testing.assert_array_equal(img, keep)
        np.testing.assert_array_equal(first, atk.generate(params, img, 1, cfg))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), eps=st.sampled_from([0, 2, 4, 8, 16]),
       method=st.sampled_from(atk.METHODS))
def test_linf_ball_property(seed, eps, method):
    rng = np.random.default_rng(seed)
    params = random_params(seed, (5, 5, 3), (6,), 5)
    imgs = rng.integers(0, 256, (4, 5, 5, 3))
    imgs[0] = 0
    imgs[1] = 255
    out = atk.generate(params, imgs, rng.integers(0, 5, 4), AttackConfig(method, eps))
    assert out.dtype == np.uint8
    for a, b in zip(out, imgs):
        assert linf_distance(a, b) <= eps


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(1e-3, 1e3))
def test_gradient_scaling_leaves_attack_unchanged(seed, c):
    params = random_params(seed)
    img = np.random.default_rng(seed).integers(0, 256, (4, 4, 1))
    scaled = lambda p, x, y: c * clf.input_gradient(p, x, y)  # noqa: E731
    cfg = AttackConfig("basic_iterative", 8)
    np.testing.assert_array_equal(atk.fast(params, img, 2, 8, gradient_fn=scaled),
                                  atk.fast(params, img, 2, 8))
    np.testing.assert_array_equal(atk.basic_iterative(params, img, 2, cfg, gradient_fn=scaled),
                                  atk.basic_iterative(params, img, 2, cfg))


def test_transformer_api():
    params = random_params(9)
    imgs = np.random.default_rng(9).integers(0, 256, (3, 4, 4, 1))
    model = clf.SoftmaxMLPClassifier.from_params(params)
    attack = atk.GradientSignAttack(model, "fast", epsilon=8)
    out = attack.fit_transform(imgs, [0, 1, 2])
    np.testing.assert_array_equal(out, atk.fast(params, imgs, [0, 1, 2], 8))
    with pytest.raises(ValueError):
        attack.transform(imgs)
    ll = atk.GradientSignAttack(params, "least_likely", epsilon=4).fit(imgs)
    assert ll.transform(imgs).shape == imgs.shape
