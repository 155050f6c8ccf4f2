"""Deterministic image transformations used to probe adversarial robustness.

Each transform maps uint8 images to uint8 images of the same shape, and
rounds once at the end with round-half-away-from-zero. Stochastic
transforms draw from the counter-based generator in :mod:`advbench.rng`,
keyed by pixel index, so results do not depend on evaluation order.

Every function accepts one image ``(H, W, C)`` or a batch ``(n, H, W, C)``
unless noted. Stochastic ones use the same seed for every image of a batch;
use :func:`apply_batch` to key seeds per image.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dctn, idctn
from sklearn.base import BaseEstimator, TransformerMixin

from . import rng
from ._validation import check_images, round_half_away, to_pixels

__all__ = [
    "KINDS",
    "TransformSpec",
    "brightness",
    "contrast",
    "gaussian_blur",
    "gaussian_kernel",
    "gaussian_noise",
    "jpeg_roundtrip",
    "quality_table",
    "LUMINANCE_TABLE",
    "solve_homography",
    "photo_sim",
    "apply",
    "apply_batch",
    "image_seed",
    "ImageTransformer",
]

KINDS = ("brightness", "contrast", "gaussian_blur", "gaussian_noise", "jpeg", "photo_sim", "compose")

# stream ids for the counter-based generator
_NOISE = 1
_WARP = 2
_JITTER = 3
_PER_IMAGE = 4


def _check_range(name, value, lo, hi):
    if not lo <= value <= hi:
        raise ValueError(f"{name} must lie in [{lo}, {hi}], got {value}")


def _batch(images):
    batch, single = check_images(images)
    return batch.astype(np.float64), single


def _out(values, single):
    out = to_pixels(values)
    return out[0] if single else out


def brightness(image, delta):
    if int(delta) != delta:
        raise ValueError(f"brightness delta must be an integer, got {delta}")
    _check_range("brightness delta", delta, -255, 255)
    x, single = _batch(image)
    return _out(x + delta, single)


def contrast(image, factor):
    """Scale about the fixed pivot 128: ``128 + factor * (v - 128)``."""
    _check_range("contrast factor", factor, 0, 4)
    x, single = _batch(image)
    return _out(128.0 + factor * (x - 128.0), single)


def gaussian_kernel(sigma):
    radius = math.ceil(3 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def _convolve_axis(x, kernel, axis):
    radius = len(kernel) // 2
    pad = [(0, 0)] * x.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(x, pad, mode="edge")
    n = x.shape[axis]
    out = np.zeros_like(x)
    for j, w in enumerate(kernel):
        out += w * np.take(padded, np.arange(j, j + n), axis=axis)
    return out


def gaussian_blur(image, sigma):
    """Separable Gaussian blur, radius ceil(3 sigma), clamp-to-edge borders."""
    _check_range("blur sigma", sigma, 0, 8)
    x, single = _batch(image)
    if sigma < 0.01:
        return _out(x, single)
    kernel = gaussian_kernel(sigma)
    x = _convolve_axis(x, kernel, axis=2)  # width
    x = _convolve_axis(x, kernel, axis=1)  # height
    return _out(x, single)


def _noise_field(shape, sigma, seed):
    counters = np.arange(int(np.prod(shape)), dtype=np.uint64)
    return sigma * rng.normal(seed, _NOISE, counters).reshape(shape)


def gaussian_noise(image, sigma, seed):
    """Add i.i.d. N(0, sigma^2) noise keyed by (seed, pixel index)."""
    _check_range("noise sigma", sigma, 0, 64)
    x, single = _batch(image)
    if sigma == 0:
        return _out(x, single)
    return _out(x + _noise_field(x.shape[1:], sigma, seed), single)


LUMINANCE_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.int64)


def quality_table(quality):
    """Luminance table scaled by the usual IJG quality rule, clamped to [1, 255]."""
    if int(quality) != quality:
        raise ValueError(f"JPEG quality must be an integer, got {quality}")
    _check_range("JPEG quality", quality, 1, 100)
    quality = int(quality)
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    return np.clip((LUMINANCE_TABLE * scale + 50) // 100, 1, 255)


def jpeg_roundtrip(image, quality):
    """Lossy 8x8 DCT quantization round trip (no entropy coding, no chroma
    subsampling; every channel uses the luminance table)."""
    table = quality_table(quality).astype(np.float64)
    x, single = _batch(image)
    n, h, w, c = x.shape
    ph, pw = -h % 8, -w % 8
    x = np.pad(x, ((0, 0), (0, ph), (0, pw), (0, 0)), mode="edge") - 128.0
    H, W = h + ph, w + pw
    # (n, by, 8, bx, 8, c) -> (n, by, bx, c, 8, 8)
    blocks = x.reshape(n, H // 8, 8, W // 8, 8, c).transpose(0, 1, 3, 5, 2, 4)
    coef = dctn(blocks, type=2, norm="ortho", axes=(-2, -1))
    coef = round_half_away(coef / table) * table
    blocks = idctn(coef, type=2, norm="ortho", axes=(-2, -1))
    x = blocks.transpose(0, 1, 4, 2, 5, 3).reshape(n, H, W, c)[:, :h, :w, :] + 128.0
    return _out(x, single)


def solve_homography(src, dst):
    """3x3 projective matrix H (H[2,2] = 1) with H @ src_i ~ dst_i.

    ``src`` and ``dst`` are four (x, y) pairs; solved as the usual 8x8
    linear system.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != (4, 2) or dst.shape != (4, 2):
        raise ValueError("solve_homography needs four (x, y) point pairs")
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i], b[2 * i + 1] = u, v
    h = np.linalg.solve(a, b)
    return np.append(h, 1.0).reshape(3, 3)


_UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _bilinear(img, sx, sy):
    h, w = img.shape[:2]
    sx = np.clip(sx, 0, w - 1)
    sy = np.clip(sy, 0, h - 1)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def _photo_one(img, warp_strength, jitter, seed):
    h, w, _ = img.shape
    out = img
    if warp_strength > 0:
        # corner offsets, as fractions of the side, in [-warp, warp]
        offsets = (2.0 * rng.uniform(seed, _WARP, np.arange(8)) - 1.0) * warp_strength
        corners = _UNIT_SQUARE + offsets.reshape(4, 2)
        hom = solve_homography(_UNIT_SQUARE, corners)
        # output pixel -> normalized coords -> source pixel through H
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        u = xs / max(w - 1, 1)
        v = ys / max(h - 1, 1)
        den = hom[2, 0] * u + hom[2, 1] * v + hom[2, 2]
        su = (hom[0, 0] * u + hom[0, 1] * v + hom[0, 2]) / den
        sv = (hom[1, 0] * u + hom[1, 1] * v + hom[1, 2]) / den
        out = _bilinear(img, su * (w - 1), sv * (h - 1))
    if jitter > 0:
        u1, u2 = rng.uniform(seed, _JITTER, np.arange(2))
        delta = 16.0 * jitter * (2.0 * u1 - 1.0)
        factor = 1.0 + 0.25 * jitter * (2.0 * u2 - 1.0)
        out = 128.0 + factor * (out + delta - 128.0)
        out = out + _noise_field(out.shape, 4.0 * jitter, seed)
    return out


def photo_sim(image, warp_strength, jitter, seed):
    """Synthetic stand-in for print-photograph-crop.

    Steps: seeded corner displacement up to ``warp_strength`` of the side;
    homography from the unit square to the displaced corners, used as the
    output-to-source map; bilinear resampling with clamp-to-edge; brightness
    shift of up to 16 * jitter and contrast factor within 1 +- 0.25 * jitter;
    Gaussian noise with sigma 4 * jitter. One rounding at the end.
    """
    _check_range("warp_strength", warp_strength, 0, 0.1)
    _check_range("jitter", jitter, 0, 1)
    x, single = _batch(image)
    out = np.stack([_photo_one(img, warp_strength, jitter, seed) for img in x])
    return _out(out, single)


_PARAMS = {
    "brightness": {"delta": (-255, 255)},
    "contrast": {"factor": (0, 4)},
    "gaussian_blur": {"sigma": (0, 8)},
    "gaussian_noise": {"sigma": (0, 64)},
    "jpeg": {"quality": (1, 100)},
    "photo_sim": {"warp_strength": (0, 0.1), "jitter": (0, 1)},
    "compose": {},
}
_STOCHASTIC = ("gaussian_noise", "photo_sim")


@dataclass(frozen=True)
class TransformSpec:
    """One transformation and its parameters, serializable to JSON.

    ``seed`` is only meaningful for gaussian_noise and photo_sim; compose
    applies ``children`` left to right.
    """

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    children: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        params = dict(self.params)
        expected = _PARAMS[self.kind]
        if set(params) != set(expected):
            raise ValueError(f"{self.kind} takes parameters {sorted(expected)}, got {sorted(params)}")
        for name, (lo, hi) in expected.items():
            _check_range(f"{self.kind} {name}", params[name], lo, hi)
        if self.kind in ("brightness", "jpeg") and any(int(v) != v for v in params.values()):
            raise ValueError(f"{self.kind} parameters must be integers")
        children = tuple(self.children)
        if self.kind == "compose":
            if not children:
                raise ValueError("compose needs at least one child transform")
            if not all(isinstance(ch, TransformSpec) for ch in children):
                raise TypeError("compose children must be TransformSpec instances")
        elif children:
            raise ValueError(f"{self.kind} does not take children")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def stochastic(self):
        if self.kind == "compose":
            return any(ch.stochastic for ch in self.children)
        return self.kind in _STOCHASTIC

    @classmethod
    def from_dict(cls, obj):
        obj = dict(obj)
        kind = obj.pop("kind", None)
        seed = obj.pop("seed", 0)
        children = tuple(cls.from_dict(ch) for ch in obj.pop("children", ()))
        return cls(kind, obj, seed, children)

    def to_dict(self):
        out = {"kind": self.kind, **self.params}
        if self.stochastic:
            out["seed"] = self.seed
        if self.kind == "compose":
            out["children"] = [ch.to_dict() for ch in self.children]
        return out

    def with_seed(self, seed):
        """Copy with ``seed`` propagated (children get distinct subkeys)."""
        children = tuple(ch.with_seed(image_seed(seed, i)) for i, ch in enumerate(self.children))
        return TransformSpec(self.kind, self.params, seed, children)

    def label(self):
        """Short parameter string for report tables."""
        if self.kind == "compose":
            return "+".join(f"{ch.kind}({ch.label()})" for ch in self.children)
        return "/".join("%g" % v for v in self.params.values())


def apply(spec, image):
    """Apply a TransformSpec to one image (or a batch, same seed for all)."""
    p = spec.params
    if spec.kind == "brightness":
        return brightness(image, p["delta"])
    if spec.kind == "contrast":
        return contrast(image, p["factor"])
    if spec.kind == "gaussian_blur":
        return gaussian_blur(image, p["sigma"])
    if spec.kind == "gaussian_noise":
        return gaussian_noise(image, p["sigma"], spec.seed)
    if spec.kind == "jpeg":
        return jpeg_roundtrip(image, p["quality"])
    if spec.kind == "photo_sim":
        return photo_sim(image, p["warp_strength"], p["jitter"], spec.seed)
    out = image
    for child in spec.children:
        out = apply(child, out)
    return out


def image_seed(seed, key):
    """Per-image seed derived from a transform seed and an image key."""
    return int(rng.random_bits(seed, _PER_IMAGE, key) >> np.uint64(1))


def apply_batch(spec, images, keys=None):
    """Apply ``spec`` to a batch; stochastic kinds reseed per image by key.

    ``keys`` (default ``0..n-1``) are stable image identifiers such as
    dataset indices, so an image's noise does not depend on its batch
    position.
    """
    batch, _ = check_images(images)
    if not spec.stochastic:
        return apply(spec, batch)
    keys = np.arange(len(batch)) if keys is None else np.asarray(keys)
    if len(keys) != len(batch):
        raise ValueError(f"got {len(keys)} keys for {len(batch)} images")
    return np.stack([apply(spec.with_seed(image_seed(spec.seed, k)), img)
                     for k, img in zip(keys, batch)])


class ImageTransformer(TransformerMixin, BaseEstimator):
    """Stateless transformer applying a TransformSpec (or its dict form)."""

    def __init__(self, spec=None):
        self.spec = spec

    def _spec(self):
        if isinstance(self.spec, TransformSpec):
            return self.spec
        if isinstance(self.spec, dict):
            return TransformSpec.from_dict(self.spec)
        raise ValueError("ImageTransformer needs a TransformSpec or dict")

    def fit(self, X=None, y=None):
        self.spec_ = self._spec()
        return self

    def transform(self, X, keys=None):
        spec = getattr(self, "spec_", None) or self._spec()
        return apply_batch(spec, X, keys)
