import struct

import numpy as np
import pytest

from advbench import rng
from advbench.data import Dataset, IdxError, load_idx, synth_shapes


def idx3(n, rows, cols, magic=0x803):
    pixels = np.arange(n * rows * cols, dtype=np.uint32) % 256
    return struct.pack(">IIII", magic, n, rows, cols) + pixels.astype(np.uint8).tobytes()


def idx1(labels, magic=0x801):
    return struct.pack(">II", magic, len(labels)) + bytes(labels)


def test_load_idx_example():
    ds = load_idx(idx3(10, 28, 28), idx1(list(range(10))))
    assert len(ds) == 10
    assert ds.images.shape == (10, 28, 28, 1)
    assert ds.num_classes == 10
    assert ds.images[0, 0, :5, 0].tolist() == [0, 1, 2, 3, 4]


def test_load_idx_bad_magic():
    with pytest.raises(IdxError, match="unexpected IDX magic"):
        load_idx(idx3(10, 28, 28, magic=0x802), idx1([0] * 10))


def test_load_idx_count_mismatch():
    with pytest.raises(IdxError, match="count mismatch"):
        load_idx(idx3(10, 28, 28), idx1([0] * 9))


def test_load_idx_truncated():
    with pytest.raises(IdxError, match="truncated"):
        load_idx(idx3(10, 28, 28)[:-1], idx1([0] * 10))


def test_synth_deterministic():
    a = synth_shapes(3, 2, 20)
    b = synth_shapes(3, 2, 20)
    assert a.images.tobytes() == b.images.tobytes()
    assert not np.array_equal(a.images, synth_shapes(4, 2, 20).images)


def test_synth_balanced():
    ds = synth_shapes(0, 5, 16)
    assert len(ds) == 50
    assert np.bincount(ds.labels).tolist() == [5] * 10
    assert ds.images.dtype == np.uint8 and ds.image_shape == (16, 16, 1)


def test_synth_rejects_small_side():
    with pytest.raises(ValueError):
        synth_shapes(0, 1, 15)
    with pytest.raises(ValueError):
        synth_shapes(0, 0, 28)


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 4, 4, 1), np.uint8), [0, 5], 3)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 4, 4, 1), np.uint8), [0], 3)


def test_rng_is_keyed_by_counter():
    whole = rng.uniform(7, 1, np.arange(100))
    part = rng.uniform(7, 1, np.arange(40, 60))
    np.testing.assert_array_equal(whole[40:60], part)
    assert np.all((whole >= 0) & (whole < 1))
    assert not np.array_equal(whole, rng.uniform(8, 1, np.arange(100)))
    assert not np.array_equal(whole, rng.uniform(7, 2, np.arange(100)))


def test_rng_normal_moments():
    z = rng.normal(123, 1, np.arange(200_000))
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1) < 0.01


def test_derive_seed_stable_and_distinct():
    assert rng.derive_seed(0, "a", 1) == rng.derive_seed(0, "a", 1)
    assert rng.derive_seed(0, "a", 1) != rng.derive_seed(0, "a", 2)
    assert 0 <= rng.derive_seed(5, "x") < 2 ** 63
