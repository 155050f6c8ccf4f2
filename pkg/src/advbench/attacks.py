"""Gradient-sign adversarial attacks in integer pixel space.

Three generators share one projection, ``clip_eps``, which keeps every
iterate inside both ``[0, 255]`` and the L-inf ball of radius ``epsilon``
around the original image:

    clip(X, X')[p] = min(255, X[p] + eps, max(0, X[p] - eps, X'[p]))

All functions accept a single image ``(H, W, C)`` or a batch ``(n, H, W, C)``
and return uint8 arrays of the same shape. Iterates stay integral: the
gradient is evaluated on the integer iterate and each step is ``+-alpha``.
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import classifier as clf
from ._validation import check_images, check_labels, check_same_shape

__all__ = [
    "METHODS",
    "AttackConfig",
    "clip_eps",
    "default_iterations",
    "fast",
    "basic_iterative",
    "least_likely_label",
    "least_likely_class_attack",
    "generate",
    "GradientSignAttack",
]

METHODS = ("fast", "basic_iterative", "least_likely")


def _check_eps(epsilon):
    if int(epsilon) != epsilon or epsilon < 0:
        raise ValueError(f"epsilon must be a non-negative integer, got {epsilon}")
    return int(epsilon)


def default_iterations(epsilon):
    """ceil(min(eps + 4, 1.25 * eps)), at least 1."""
    if epsilon < 1:
        raise ValueError(f"default_iterations needs epsilon >= 1, got {epsilon}")
    return max(1, math.ceil(min(epsilon + 4, 1.25 * epsilon)))


@dataclass(frozen=True)
class AttackConfig:
    method: str
    epsilon: int
    alpha: int = 1
    iterations: int = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown attack method {self.method!r}; expected one of {METHODS}")
        object.__setattr__(self, "epsilon", _check_eps(self.epsilon))
        if self.method != "fast":
            if int(self.alpha) != self.alpha or self.alpha < 1:
                raise ValueError(f"alpha must be an integer >= 1, got {self.alpha}")
            if self.iterations is None:
                iters = default_iterations(self.epsilon) if self.epsilon >= 1 else 1
                object.__setattr__(self, "iterations", iters)
            elif int(self.iterations) != self.iterations or self.iterations < 1:
                raise ValueError(f"iterations must be an integer >= 1, got {self.iterations}")


def clip_eps(source, candidate, epsilon):
    """Project ``candidate`` into the eps-ball around ``source`` and [0, 255]."""
    epsilon = _check_eps(epsilon)
    x = np.asarray(source, dtype=np.int64)
    cand = np.asarray(candidate, dtype=np.int64)
    check_same_shape(x, cand)
    return np.minimum(np.minimum(255, x + epsilon), np.maximum(np.maximum(0, x - epsilon), cand))


def _prepare(params, images, labels=None):
    batch, single = check_images(images)
    batch = batch.astype(np.int64)
    if batch.shape[1:] != params.arch.input_shape:
        raise ValueError(f"image shape {batch.shape[1:]} != model input {params.arch.input_shape}")
    y = None if labels is None else check_labels(labels, len(batch), params.num_classes)
    return batch, y, single


def _finish(batch, single):
    out = batch.astype(np.uint8)
    return out[0] if single else out


def fast(params, images, labels, epsilon, gradient_fn=None):
    """One step ``X + eps * sign(grad J(X, y_true))``, clamped to [0, 255].

    ``gradient_fn(params, X, y)`` overrides the model gradient; it exists so
    callers can check sign invariance without touching the model.
    """
    epsilon = _check_eps(epsilon)
    x, y, single = _prepare(params, images, labels)
    grad_fn = gradient_fn or clf.input_gradient
    if epsilon == 0:
        return _finish(x, single)
    step = np.sign(grad_fn(params, x, y)).astype(np.int64)
    return _finish(np.clip(x + epsilon * step, 0, 255), single)


def _iterate(params, x, target, epsilon, alpha, iterations, direction, grad_fn):
    adv = x.copy()
    if epsilon == 0:
        return adv
    for _ in range(iterations):
        step = np.sign(grad_fn(params, adv, target)).astype(np.int64)
        adv = clip_eps(x, adv + direction * alpha * step, epsilon)
    return adv


def _iter_settings(cfg, method):
    if cfg.method != method:
        raise ValueError(f"config method is {cfg.method!r}, expected {method!r}")
    return cfg.epsilon, int(cfg.alpha), int(cfg.iterations)


def basic_iterative(params, images, labels, cfg, gradient_fn=None):
    """Repeated ascent steps on J(., y_true), clipped against the original."""
    eps, alpha, iters = _iter_settings(cfg, "basic_iterative")
    x, y, single = _prepare(params, images, labels)
    adv = _iterate(params, x, y, eps, alpha, iters, +1, gradient_fn or clf.input_gradient)
    return _finish(adv, single)


def least_likely_label(params, images):
    """argmin_y p(y | X); ties go to the lowest class index."""
    x, _, single = _prepare(params, images)
    probs = clf.predict_proba(params, x)
    ll = np.argmin(probs, axis=1)
    return int(ll[0]) if single else ll


def least_likely_class_attack(params, images, cfg, gradient_fn=None):
    """Descent on J(., y_LL) with y_LL fixed from the clean image."""
    eps, alpha, iters = _iter_settings(cfg, "least_likely")
    x, _, single = _prepare(params, images)
    target = least_likely_label(params, x)
    adv = _iterate(params, x, target, eps, alpha, iters, -1, gradient_fn or clf.input_gradient)
    return _finish(adv, single)


def generate(params, images, labels, cfg):
    """Dispatch on ``cfg.method``. ``labels`` is ignored for least_likely."""
    if cfg.method == "fast":
        return fast(params, images, labels, cfg.epsilon)
    if cfg.method == "basic_iterative":
        return basic_iterative(params, images, labels, cfg)
    return least_likely_class_attack(params, images, cfg)


class GradientSignAttack(TransformerMixin, BaseEstimator):
    """Transformer that maps clean images to adversarial images.

    Parameters
    ----------
    model : SoftmaxMLPClassifier or ModelParams
        The fixed, already trained target.
    method : {"fast", "basic_iterative", "least_likely"}
    epsilon : int
        L-inf budget in pixel units.
    alpha : int
        Step size for the iterative methods.
    iterations : int or None
        Defaults to ``default_iterations(epsilon)``.

    ``transform(X, y)`` needs the true labels for fast and basic_iterative.
    """

    def __init__(self, model=None, method="fast", epsilon=16, alpha=1, iterations=None):
        self.model = model
        self.method = method
        self.epsilon = epsilon
        self.alpha = alpha
        self.iterations = iterations

    def _params(self):
        if isinstance(self.model, clf.ModelParams):
            return self.model
        params = getattr(self.model, "params_", None)
        if params is None:
            raise ValueError("GradientSignAttack needs a fitted model or ModelParams")
        return params

    def fit(self, X=None, y=None):
        self.config_ = AttackConfig(self.method, self.epsilon, self.alpha, self.iterations)
        self.params_ = self._params()
        return self

    def transform(self, X, y=None):
        if not hasattr(self, "config_"):
            self.fit()
        if y is None and self.config_.method != "least_likely":
            raise ValueError(f"{self.config_.method} attack needs true labels y")
        return generate(self.params_, X, y, self.config_)

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).transform(X, y)
