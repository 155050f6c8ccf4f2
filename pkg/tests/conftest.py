import os
import time

import numpy as np
import pytest

from advbench import classifier as clf
from advbench.config import load_config
from advbench.experiment import load_datasets, load_model

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PAPER_TRENDS = os.path.join(ROOT, "configs", "paper-trends.json")

_ACCEPTANCE_LINES = []
REFERENCE_BUILD = {}


def record_acceptance(line):
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def micro_params(w=(0.02, -0.02), b=(0.0, 0.0)):
    """One pixel, two classes, no hidden layer: logits = w * (v / 255) + b."""
    arch = clf.Architecture((1, 1, 1), (), "identity")
    return clf.ModelParams(arch, (np.array([w], dtype=float),), (np.array(b, dtype=float),))


def random_params(seed, input_shape=(4, 4, 1), hidden=(8, 6), num_classes=4, activation="relu",
                  bias_scale=0.1):
    rng = np.random.default_rng(seed)
    params = clf.init_params(seed, clf.Architecture(input_shape, hidden, activation), num_classes)
    biases = tuple(rng.normal(0, bias_scale, b.shape) for b in params.biases)
    return clf.ModelParams(params.arch, params.weights, biases)


def uniform_params(num_classes=10, input_shape=(4, 4, 1)):
    arch = clf.Architecture(input_shape, (), "identity")
    dim = arch.input_dim
    return clf.ModelParams(arch, (np.zeros((dim, num_classes)),), (np.zeros(num_classes),))


@pytest.fixture
def micro():
    return micro_params()


@pytest.fixture(scope="session")
def paper_trends_cfg():
    return load_config(PAPER_TRENDS)


@pytest.fixture(scope="session")
def reference(paper_trends_cfg):
    """(params, train_set, test_set) of the frozen reference configuration."""
    start = time.perf_counter()
    train_set, test_set = load_datasets(paper_trends_cfg)
    params = load_model(paper_trends_cfg, train_set)
    REFERENCE_BUILD["seconds"] = time.perf_counter() - start
    return params, train_set, test_set
