"""Input validation helpers shared by the estimators and functional API.

Images are numpy arrays of shape ``(height, width, channels)``, i.e. row-major
with channels interleaved, which is exactly the netpbm payload order. Batches
carry one extra leading axis.
"""

import numpy as np


def round_half_away(x):
    """Round to the nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_pixels(x):
    """Round, clamp to [0, 255] and cast to uint8."""
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)


def check_image(image, allow_float=False):
    """Validate a single image and return it as an ndarray.

    Integer images must lie in [0, 255]. With ``allow_float`` real-valued
    inputs are accepted unchanged (used by finite-difference checks).
    """
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected image of shape (H, W, 1|3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"image has empty extent {arr.shape}")
    return _check_values(arr, allow_float)


def check_images(images, allow_float=False):
    """Validate an image or a batch; returns ``(batch, was_single)``."""
    arr = np.asarray(images)
    if arr.ndim in (2, 3) and not (arr.ndim == 3 and arr.shape[2] not in (1, 3)):
        return check_image(arr, allow_float)[None], True
    if arr.ndim == 3:
        # (n, H, W) grayscale batch
        arr = arr[..., None]
    if arr.ndim != 4 or arr.shape[3] not in (1, 3):
        raise ValueError(f"expected images of shape (n, H, W, 1|3), got {arr.shape}")
    return _check_values(arr, allow_float), False


def _check_values(arr, allow_float):
    if np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("pixel values must lie in [0, 255]")
        return arr
    if not np.issubdtype(arr.dtype, np.floating):
        raise TypeError(f"unsupported pixel dtype {arr.dtype}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if allow_float:
        return arr
    if np.any(arr != np.round(arr)) or (arr.size and (arr.min() < 0 or arr.max() > 255)):
        raise ValueError("pixel values must be integers in [0, 255]")
    return arr.astype(np.int64)


def check_labels(labels, n, num_classes):
    """Broadcast ``labels`` to an int array of length ``n`` and range-check."""
    y = np.asarray(labels)
    if y.ndim == 0:
        y = np.full(n, int(y))
    y = y.astype(np.int64, copy=False).ravel()
    if len(y) != n:
        raise ValueError(f"got {len(y)} labels for {n} images")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ValueError(f"label out of range [0, {num_classes})")
    return y


def check_same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
