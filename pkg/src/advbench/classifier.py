"""Feedforward softmax classifier with exact backpropagation to the input.

The attacks only need three things from a model: class probabilities, the
cross-entropy loss ``J(X, y) = -log p(y | X)`` and its gradient with respect
to the raw ``[0, 255]`` pixels. All arithmetic is float64.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_images, check_labels

__all__ = [
    "Architecture",
    "REFERENCE_ARCH",
    "ModelParams",
    "Prediction",
    "TrainConfig",
    "CheckpointError",
    "init_params",
    "forward",
    "predict_proba",
    "loss",
    "input_gradient",
    "train",
    "predict_topk",
    "rank_labels",
    "save_checkpoint",
    "load_checkpoint",
    "dump_checkpoint",
    "parse_checkpoint",
    "SoftmaxMLPClassifier",
]

PIXEL_SCALE = 1.0 / 255.0
PIXEL_OFFSET = 0.0
_ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass(frozen=True)
class Architecture:
    input_shape: tuple
    hidden: tuple = (256, 128)
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if len(self.input_shape) != 3 or min(self.input_shape) < 1 or self.input_shape[2] not in (1, 3):
            raise ValueError(f"input_shape must be (H, W, 1|3), got {self.input_shape}")
        if any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden layer sizes must be positive, got {self.hidden}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}")

    @property
    def input_dim(self):
        h, w, c = self.input_shape
        return h * w * c


REFERENCE_ARCH = Architecture((28, 28, 1), (256, 128), "relu")


@dataclass(frozen=True)
class ModelParams:
    arch: Architecture
    weights: tuple  # weights[i] has shape (fan_in, fan_out)
    biases: tuple
    scale: float = PIXEL_SCALE
    offset: float = PIXEL_OFFSET

    def __post_init__(self):
        weights = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.array(b, dtype=np.float64).ravel() for b in self.biases)
        if len(weights) != len(biases) or len(weights) != len(self.arch.hidden) + 1:
            raise ValueError("number of weight/bias arrays does not match the architecture")
        fan_in = self.arch.input_dim
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or w.shape[0] != fan_in or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i} shapes {w.shape}/{b.shape} do not chain from {fan_in}")
            if i < len(self.arch.hidden) and w.shape[1] != self.arch.hidden[i]:
                raise ValueError(f"layer {i} width {w.shape[1]} != {self.arch.hidden[i]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} contains non-finite values")
            w.setflags(write=False)
            b.setflags(write=False)
            fan_in = w.shape[1]
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def num_classes(self):
        return self.weights[-1].shape[1]

    @property
    def layer_sizes(self):
        return (self.arch.input_dim,) + tuple(w.shape[1] for w in self.weights)


@dataclass(frozen=True)
class Prediction:
    probabilities: np.ndarray
    logits: np.ndarray
    ranked_labels: np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0, batch_size >= 1 and learning_rate > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")


def init_params(seed, arch, num_classes):
    """Glorot-uniform weights, zero biases, drawn from ``default_rng(seed)``."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    rng = np.random.default_rng(seed)
    sizes = (arch.input_dim,) + arch.hidden + (int(num_classes),)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(arch, tuple(weights), tuple(biases))


def _activate(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activate_grad(kind, z, a):
    if kind == "relu":
        return (z > 0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def _flatten(params, images, allow_float=True):
    batch, single = check_images(images, allow_float=allow_float)
    if batch.shape[1:] != params.arch.input_shape:
        raise ValueError(f"image shape {batch.shape[1:]} != model input {params.arch.input_shape}")
    x = batch.reshape(len(batch), params.arch.input_dim).astype(np.float64)
    return x * params.scale + params.offset, batch.shape, single


def _logits(params, x):
    """Forward pass on normalized rows; returns logits and per-layer cache."""
    cache = []
    a = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        if i < last:
            out = _activate(params.arch.activation, z)
            cache.append((a, z, out))
            a = out
        else:
            cache.append((a, z, z))
            a = z
    return a, cache


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def rank_labels(probabilities):
    """Labels by descending probability, ties by ascending class index."""
    p = np.asarray(probabilities)
    return np.argsort(-p, axis=-1, kind="stable")


def forward(params, image):
    """Prediction for a single image."""
    x, _, single = _flatten(params, image)
    if not single:
        raise ValueError("forward takes a single image; use predict_proba for batches")
    logits, _ = _logits(params, x)
    probs = _softmax(logits)[0]
    return Prediction(probs, logits[0], rank_labels(probs))


def predict_proba(params, images):
    """Class probabilities, ``(n, num_classes)`` for a batch or a vector."""
    x, _, single = _flatten(params, images)
    probs = _softmax(_logits(params, x)[0])
    return probs[0] if single else probs


def loss(params, images, labels):
    """Cross-entropy ``-log p(label | image)``; scalar for a single image."""
    x, _, single = _flatten(params, images)
    y = check_labels(labels, len(x), params.num_classes)
    logp = _log_softmax(_logits(params, x)[0])
    out = -logp[np.arange(len(y)), y]
    return float(out[0]) if single else out


def _backprop(params, x, y):
    logits, cache = _logits(params, x)
    probs = _softmax(logits)
    delta = probs.copy()
    delta[np.arange(len(y)), y] -= 1.0
    grads_w, grads_b = [], []
    for i in range(len(params.weights) - 1, -1, -1):
        a_in, _, _ = cache[i]
        grads_w.append(a_in.T @ delta)
        grads_b.append(delta.sum(axis=0))
        delta = delta @ params.weights[i].T
        if i > 0:
            _, z, a = cache[i - 1]
            delta = delta * _activate_grad(params.arch.activation, z, a)
    return delta, grads_w[::-1], grads_b[::-1], logits


def input_gradient(params, images, labels):
    """Gradient of each image's own loss w.r.t. its raw pixel values.

    Rows are independent, so a batch call returns the stacked per-image
    gradients. The chain rule includes the pixel normalization scale.
    """
    x, shape, single = _flatten(params, images)
    y = check_labels(labels, len(x), params.num_classes)
    dx, _, _, _ = _backprop(params, x, y)
    grad = (dx * params.scale).reshape(shape)
    return grad[0] if single else grad


def train(params, data, cfg):
    """Minibatch SGD with momentum on the mean cross-entropy.

    Shuffling uses ``default_rng(cfg.seed)``; the input params are not
    modified and the result is a new ModelParams.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if cfg.epochs == 0:
        return params
    x, _, _ = _flatten(params, data.images, allow_float=False)
    y = check_labels(data.labels, len(x), params.num_classes)
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            work = _unchecked(params, weights, biases)
            _, gw, gb, _ = _backprop(work, x[idx], y[idx])
            m = len(idx)
            for i in range(len(weights)):
                vel_w[i] = cfg.momentum * vel_w[i] - cfg.learning_rate * gw[i] / m
                vel_b[i] = cfg.momentum * vel_b[i] - cfg.learning_rate * gb[i] / m
                weights[i] += vel_w[i]
                biases[i] += vel_b[i]
    return ModelParams(params.arch, tuple(weights), tuple(biases), params.scale, params.offset)


def _unchecked(template, weights, biases):
    # skips __post_init__ validation inside the hot loop
    obj = object.__new__(ModelParams)
    object.__setattr__(obj, "arch", template.arch)
    object.__setattr__(obj, "weights", weights)
    object.__setattr__(obj, "biases", biases)
    object.__setattr__(obj, "scale", template.scale)
    object.__setattr__(obj, "offset", template.offset)
    return obj


def predict_topk(params, images, k):
    """First ``k`` ranked labels; shape ``(k,)`` or ``(n, k)``."""
    if not 1 <= k <= params.num_classes:
        raise ValueError(f"k must lie in [1, {params.num_classes}], got {k}")
    probs = predict_proba(params, images)
    return rank_labels(probs)[..., :k]


# Checkpoint text format:
#   ADVBENCH-CKPT 1
#   arch <H> <W> <C> <activation> <layer sizes...>
#   norm <scale> <offset>
#   then per layer: "layer <i> <fan_in> <fan_out>", fan_in weight rows, one bias row
_CKPT_MAGIC = "ADVBENCH-CKPT 1"


class CheckpointError(ValueError):
    pass


def _fmt(values):
    return " ".join("%.17g" % v for v in values)


def dump_checkpoint(params):
    h, w, c = params.arch.input_shape
    lines = [
        _CKPT_MAGIC,
        f"arch {h} {w} {c} {params.arch.activation} " + " ".join(map(str, params.layer_sizes)),
        f"norm {_fmt([params.scale, params.offset])}",
    ]
    for i, (wt, b) in enumerate(zip(params.weights, params.biases)):
        lines.append(f"layer {i} {wt.shape[0]} {wt.shape[1]}")
        lines.extend(_fmt(row) for row in wt)
        lines.append(_fmt(b))
    return "\n".join(lines) + "\n"


def parse_checkpoint(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != _CKPT_MAGIC:
        raise CheckpointError("missing ADVBENCH-CKPT 1 magic line")
    try:
        head = lines[1].split()
        if head[0] != "arch":
            raise CheckpointError("expected arch line")
        h, w, c = (int(t) for t in head[1:4])
        activation = head[4]
        sizes = [int(t) for t in head[5:]]
        norm = lines[2].split()
        if norm[0] != "norm":
            raise CheckpointError("expected norm line")
        scale, offset = float(norm[1]), float(norm[2])
        arch = Architecture((h, w, c), tuple(sizes[1:-1]), activation)
        pos = 3
        weights, biases = [], []
        for i in range(len(sizes) - 1):
            tag = lines[pos].split()
            if tag != ["layer", str(i), str(sizes[i]), str(sizes[i + 1])]:
                raise CheckpointError(f"bad layer header {lines[pos]!r}")
            rows = lines[pos + 1:pos + 1 + sizes[i]]
            wt = np.array([[float(v) for v in r.split()] for r in rows])
            b = np.array([float(v) for v in lines[pos + 1 + sizes[i]].split()])
            if wt.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise CheckpointError(f"layer {i} payload has wrong shape")
            weights.append(wt)
            biases.append(b)
            pos += sizes[i] + 2
    except (IndexError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"malformed checkpoint: {exc}") from None
    return ModelParams(arch, tuple(weights), tuple(biases), scale, offset)


def save_checkpoint(path, params):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dump_checkpoint(params))


def load_checkpoint(path):
    with open(path, encoding="ascii") as fh:
        return parse_checkpoint(fh.read())


class SoftmaxMLPClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper around the functional MLP.

    ``X`` is a batch of images ``(n, H, W, C)`` with integer pixels; ``y``
    holds class indices ``0..K-1``. After ``fit`` the trained weights live in
    ``params_``.
    """

    def __init__(self, hidden_layer_sizes=(256, 128), activation="relu", epochs=10,
                 batch_size=64, learning_rate=0.05, momentum=0.9, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.random_state = random_state

    def fit(self, X, y):
        from .data import Dataset

        images, _ = check_images(X)
        y = np.asarray(y, dtype=np.int64)
        num_classes = int(y.max()) + 1
        arch = Architecture(images.shape[1:], tuple(self.hidden_layer_sizes), self.activation)
        params = init_params(self.random_state, arch, num_classes)
        cfg = TrainConfig(self.random_state, self.epochs, self.batch_size,
                          self.learning_rate, self.momentum)
        self.params_ = train(params, Dataset(images, y, num_classes, "train"), cfg)
        self.classes_ = np.arange(num_classes)
        return self

    @classmethod
    def from_params(cls, params):
        """Wrap already trained ModelParams without refitting."""
        est = cls(hidden_layer_sizes=params.arch.hidden, activation=params.arch.activation)
        est.params_ = params
        est.classes_ = np.arange(params.num_classes)
        return est

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        return predict_proba(self.params_, check_images(X, allow_float=True)[0])

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def predict_topk(self, X, k):
        check_is_fitted(self, "params_")
        return predict_topk(self.params_, check_images(X, allow_float=True)[0], k)

    def loss(self, X, y):
        check_is_fitted(self, "params_")
        return loss(self.params_, check_images(X, allow_float=True)[0], y)

    def input_gradient(self, X, y):
        check_is_fitted(self, "params_")
        return input_gradient(self.params_, check_images(X, allow_float=True)[0], y)
