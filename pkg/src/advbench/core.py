"""Lossless binary netpbm I/O (P5 grayscale, P6 RGB) and L-inf distance."""

import numpy as np

from ._validation import check_image, check_same_shape

__all__ = [
    "NetpbmError",
    "BadMagicError",
    "BadHeaderError",
    "UnsupportedMaxvalError",
    "TruncatedPayloadError",
    "netpbm_read",
    "netpbm_write",
    "read_image",
    "write_image",
    "linf_distance",
]


class NetpbmError(ValueError):
    """Base class for netpbm parse failures."""


class BadMagicError(NetpbmError):
    pass


class BadHeaderError(NetpbmError):
    pass


class UnsupportedMaxvalError(NetpbmError):
    pass


class TruncatedPayloadError(NetpbmError):
    pass


_MAGIC = {b"P5": 1, b"P6": 3}
_WHITESPACE = b" \t\r\n\v\f"


def _header_tokens(data, count, pos):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos] in _WHITESPACE:
            pos += 1
        if pos < n and data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < n and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise BadHeaderError("header ended early")
        tokens.append(bytes(data[start:pos]))
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or data[pos] not in _WHITESPACE:
        raise BadHeaderError("missing whitespace after maxval")
    return tokens, pos + 1


def netpbm_read(data):
    """Decode a binary PGM/PPM byte string into a ``(H, W, C)`` uint8 array."""
    data = bytes(data)
    magic = data[:2]
    if magic not in _MAGIC:
        raise BadMagicError(f"unsupported netpbm magic {magic!r}")
    channels = _MAGIC[magic]
    if len(data) < 3 or data[2] not in _WHITESPACE:
        raise BadHeaderError("missing whitespace after magic")
    tokens, pos = _header_tokens(data, 3, 2)
    try:
        width, height, maxval = (int(t.decode("ascii")) for t in tokens)
    except (UnicodeDecodeError, ValueError):
        raise BadHeaderError(f"non-numeric header field in {tokens!r}") from None
    if width < 1 or height < 1:
        raise BadHeaderError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"unsupported maxval {maxval}")
    size = width * height * channels
    payload = data[pos:pos + size]
    if len(payload) < size:
        raise TruncatedPayloadError(f"payload has {len(payload)} of {size} bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels).copy()


def netpbm_write(image):
    """Encode an image with the canonical header ``P5\\nW H\\n255\\n``."""
    arr = check_image(image)
    height, width, channels = arr.shape
    magic = b"P5" if channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, width, height)
    return header + arr.astype(np.uint8).tobytes()


def read_image(path):
    with open(path, "rb") as fh:
        return netpbm_read(fh.read())


def write_image(path, image):
    with open(path, "wb") as fh:
        fh.write(netpbm_write(image))


def linf_distance(a, b):
    """Max absolute per-pixel difference between two equally shaped images."""
    a = np.asarray(a)
    b = np.asarray(b)
    check_same_shape(a, b)
    if a.size == 0:
        return 0
    return int(np.max(np.abs(a.astype(np.int64) - b.astype(np.int64))))
