"""Correctness indicators, top-k accuracy, destruction rate and image
selection protocols."""

from dataclasses import dataclass

import numpy as np

from . import classifier as clf
from ._validation import check_labels

__all__ = [
    "EvalRecord",
    "DestructionRateResult",
    "UndefinedDestructionRate",
    "CONFIDENCE_THRESHOLD",
    "indicator",
    "indicators",
    "accuracy",
    "destruction_rate",
    "make_records",
    "sample_average_case",
    "prefilter",
    "PrefilterResult",
]

CONFIDENCE_THRESHOLD = 0.8


class UndefinedDestructionRate(ValueError):
    """No record was clean-correct and adversarially misclassified."""


@dataclass(frozen=True)
class EvalRecord:
    clean_correct: int
    adv_correct: int
    transformed_adv_correct: int
    k: int = 1

    def __post_init__(self):
        for name in ("clean_correct", "adv_correct", "transformed_adv_correct"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class DestructionRateResult:
    d: float
    numerator: int
    denominator: int
    n: int


def indicators(params, images, labels, k):
    """Vectorized C(X, y): 1 where ``y`` is in the top-k for ``X``."""
    topk = clf.predict_topk(params, images, k)
    topk = np.atleast_2d(topk)
    y = check_labels(labels, len(topk), params.num_classes)
    return (topk == y[:, None]).any(axis=1).astype(np.int64)


def indicator(params, image, label, k):
    """C(X, y) for a single image; the complement is ``1 - indicator``."""
    return int(indicators(params, image, label, k)[0])


def accuracy(params, dataset, k):
    if len(dataset) == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    return float(indicators(params, dataset.images, dataset.labels, k).mean())


def make_records(clean, adv, transformed, k):
    """Zip three aligned indicator vectors into EvalRecords."""
    return [EvalRecord(int(a), int(b), int(c), k) for a, b, c in zip(clean, adv, transformed)]


def destruction_rate(records):
    """Fraction of clean-correct, adversarially-wrong images that the
    transformation restores to correct classification."""
    records = list(records)
    if not records:
        raise ValueError("destruction_rate needs at least one record")
    if len({r.k for r in records}) != 1:
        raise ValueError("records mix different k values")
    num = den = 0
    for r in records:
        attacked = r.clean_correct * (1 - r.adv_correct)
        den += attacked
        num += attacked * r.transformed_adv_correct
    if den == 0:
        raise UndefinedDestructionRate(
            "undefined destruction rate: no image is clean-correct and adversarially misclassified")
    return DestructionRateResult(num / den, num, den, len(records))


def sample_average_case(dataset_size, n, seed):
    """Seeded uniform sample of ``n`` distinct indices (average case)."""
    size = dataset_size if isinstance(dataset_size, (int, np.integer)) else len(dataset_size)
    if n < 1 or n > size:
        raise ValueError(f"cannot sample {n} of {size} images")
    return np.random.default_rng(seed).choice(size, size=n, replace=False)


@dataclass(frozen=True)
class PrefilterResult:
    indices: np.ndarray
    candidates: int
    requested: int

    @property
    def short(self):
        return len(self.indices) < self.requested


def prefilter(params, dataset, adv_images, n, k_top, seed, threshold=CONFIDENCE_THRESHOLD):
    """Prefiltered-case selection.

    Candidates are clean-correct at top-1 and top-``k_top``, adversarially
    wrong at both, with the clean top prediction's probability at least
    ``threshold``. Returns up to ``n`` of them sampled with ``seed``; a short
    set is reported through ``PrefilterResult.short`` rather than raised.
    """
    adv_images = np.asarray(adv_images)
    if len(adv_images) != len(dataset):
        raise ValueError(f"{len(adv_images)} adversarial images for {len(dataset)} clean images")
    probs = clf.predict_proba(params, dataset.images)
    adv_probs = clf.predict_proba(params, adv_images)
    y = dataset.labels
    clean_rank = clf.rank_labels(probs)
    adv_rank = clf.rank_labels(adv_probs)
    clean_ok = (clean_rank[:, 0] == y) & (clean_rank[:, :k_top] == y[:, None]).any(axis=1)
    adv_ok = (adv_rank[:, 0] == y) | (adv_rank[:, :k_top] == y[:, None]).any(axis=1)
    confident = probs.max(axis=1) >= threshold
    candidates = np.flatnonzero(clean_ok & ~adv_ok & confident)
    take = min(n, len(candidates))
    if take == 0:
        chosen = np.empty(0, dtype=np.int64)
    else:
        chosen = candidates[np.random.default_rng(seed).choice(len(candidates), size=take, replace=False)]
    return PrefilterResult(chosen, len(candidates), n)
