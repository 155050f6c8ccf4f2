"""Desk-scale labeled image datasets: IDX ingestion and procedural shapes."""

import struct
from dataclasses import dataclass

import numpy as np

from ._validation import check_images, check_labels

__all__ = [
    "Dataset",
    "IdxError",
    "load_idx",
    "load_idx_files",
    "synth_shapes",
    "SHAPE_NAMES",
]

SHAPE_NAMES = (
    "disk",
    "square",
    "triangle",
    "cross",
    "ring",
    "hbar",
    "vbar",
    "diagonal",
    "checker",
    "dotgrid",
)


class IdxError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Images ``(n, H, W, C)`` uint8 with aligned integer labels."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split_tag: str = "test"

    def __post_init__(self):
        images, _ = check_images(self.images)
        labels = check_labels(self.labels, len(images), self.num_classes)
        if self.split_tag not in ("train", "test"):
            raise ValueError(f"split_tag must be 'train' or 'test', got {self.split_tag!r}")
        images = images.astype(np.uint8)
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], self.num_classes, self.split_tag)


def _idx_header(data, magic, ndim, what):
    if len(data) < 4 + 4 * ndim:
        raise IdxError(f"{what} file truncated in header")
    (got,) = struct.unpack(">I", data[:4])
    if got != magic:
        raise IdxError(f"unexpected IDX magic 0x{got:08x} in {what} file (want 0x{magic:08x})")
    return struct.unpack(">" + "I" * ndim, data[4:4 + 4 * ndim])


def load_idx(image_bytes, label_bytes, split_tag="test"):
    """Parse IDX3 images (ubyte) and IDX1 labels into a grayscale Dataset."""
    n_img, rows, cols = _idx_header(image_bytes, 0x00000803, 3, "image")
    (n_lab,) = _idx_header(label_bytes, 0x00000801, 1, "label")
    if n_img != n_lab:
        raise IdxError(f"count mismatch: {n_img} images vs {n_lab} labels")
    if n_img == 0:
        raise IdxError("IDX files contain no items")
    size = n_img * rows * cols
    pixels = image_bytes[16:16 + size]
    labels = label_bytes[8:8 + n_lab]
    if len(pixels) < size:
        raise IdxError(f"image payload truncated: {len(pixels)} of {size} bytes")
    if len(labels) < n_lab:
        raise IdxError(f"label payload truncated: {len(labels)} of {n_lab} bytes")
    images = np.frombuffer(pixels, dtype=np.uint8).reshape(n_img, rows, cols, 1)
    labels = np.frombuffer(labels, dtype=np.uint8).astype(np.int64)
    return Dataset(images.copy(), labels, int(labels.max()) + 1, split_tag)


def load_idx_files(image_path, label_path, split_tag="test"):
    with open(image_path, "rb") as fi, open(label_path, "rb") as fl:
        return load_idx(fi.read(), fl.read(), split_tag)


# Fixed-point renderer. Coordinates are integers in units of 1/8 pixel; each
# pixel is sampled on a 4x4 grid at offsets 1, 3, 5, 7. Coverage is the count
# of inside samples, and the pixel value is
#     (16 * bg + (fg - bg) * count + 8) // 16
# which keeps rendering in exact integer arithmetic.
_SUB = 4
_UNIT = 8


def _inside(kind, dx, dy, r):
    adx, ady = np.abs(dx), np.abs(dy)
    if kind == "disk":
        return dx * dx + dy * dy <= r * r
    if kind == "square":
        h = (r * 4) // 5
        return (adx <= h) & (ady <= h)
    if kind == "triangle":
        return (dy <= r) & (2 * adx <= dy + r)
    if kind == "cross":
        t = r // 4
        return ((adx <= t) & (ady <= r)) | ((ady <= t) & (adx <= r))
    if kind == "ring":
        inner = (r * 3) // 5
        d2 = dx * dx + dy * dy
        return (d2 <= r * r) & (d2 >= inner * inner)
    if kind == "hbar":
        return (adx <= r) & (ady <= r // 3)
    if kind == "vbar":
        return (ady <= r) & (adx <= r // 3)
    if kind == "diagonal":
        return (np.abs(dx - dy) <= r // 2) & (np.abs(dx + dy) <= (3 * r) // 2)
    if kind == "checker":
        cell = max(r // 2, 1)
        box = (adx < r) & (ady < r)
        return box & ((((dx + r) // cell) + ((dy + r) // cell)) % 2 == 0)
    if kind == "dotgrid":
        pitch = (2 * r) // 3
        dot = max(r // 5, 1)
        hit = np.zeros(dx.shape, dtype=bool)
        for oy in (-pitch, 0, pitch):
            for ox in (-pitch, 0, pitch):
                hit |= (dx - ox) ** 2 + (dy - oy) ** 2 <= dot * dot
        return hit
    raise ValueError(f"unknown shape {kind!r}")


def _render(kind, side, cx, cy, r, bg, fg):
    sub = np.arange(side * _SUB, dtype=np.int64)
    coords = (sub // _SUB) * _UNIT + (sub % _SUB) * 2 + 1
    dx, dy = np.meshgrid(coords - cx, coords - cy)
    inside = _inside(kind, dx, dy, r)
    count = inside.reshape(side, _SUB, side, _SUB).sum(axis=(1, 3))
    return ((16 * bg + (fg - bg) * count + 8) // 16).astype(np.uint8)


def synth_shapes(seed, count_per_class, side=28, split_tag="train"):
    """Render a balanced 10-class dataset of antialiased grayscale shapes.

    Each sample draws its center, size, background level and foreground
    level from ``np.random.default_rng(seed)``; samples are emitted class by
    class in blocks of ``count_per_class``.
    """
    if side < 16:
        raise ValueError(f"side must be >= 16, got {side}")
    if count_per_class < 1:
        raise ValueError(f"count_per_class must be >= 1, got {count_per_class}")
    rng = np.random.default_rng(seed)
    n = count_per_class * len(SHAPE_NAMES)
    images = np.empty((n, side, side, 1), dtype=np.uint8)
    labels = np.repeat(np.arange(len(SHAPE_NAMES)), count_per_class)
    extent = side * _UNIT
    for i, label in enumerate(labels):
        r = int(rng.integers(extent * 22 // 100, extent * 36 // 100 + 1))
        cx = int(rng.integers(r + _UNIT, extent - r - _UNIT + 1))
        cy = int(rng.integers(r + _UNIT, extent - r - _UNIT + 1))
        bg = int(rng.integers(0, 61))
        fg = int(rng.integers(150, 256))
        images[i, :, :, 0] = _render(SHAPE_NAMES[label], side, cx, cy, r, bg, fg)
    return Dataset(images, labels, len(SHAPE_NAMES), split_tag)
