"""Image ingestion, 8-bit standardization, histograms and breast masking.

Supported inputs are PGM (plain ``P2`` and raw ``P5``, maxval up to 65535)
and grayscale PNG at 8 or 16 bits per sample. Everything downstream works on
8-bit rasters produced by :func:`standardize`.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import (CorruptFile, DimensionMismatch, EmptyImage,
                     UnsupportedFormat)

__all__ = [
    "GrayImage", "Histogram", "load_image", "save_image", "standardize",
    "histogram", "otsu_threshold", "breast_mask", "largest_component",
    "EIGHT_CONNECTED",
]

# 8-connectivity is used for every connected-component operation.
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_OTHER_CONTAINERS = (
    b"\xff\xd8\xff",  # JPEG
    b"II*\x00", b"MM\x00*",  # TIFF
    b"BM", b"GIF8", b"DICM",
    b"P1", b"P3", b"P4", b"P6", b"P7",
)


@dataclass(frozen=True)
class GrayImage:
    """A single-channel raster.

    ``data`` is a 2-D array of shape ``(height, width)``; dtype is
    ``uint8`` for 8-bit images and ``uint16`` for 16-bit ones.
    """
    data: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"image data must be a non-empty 2-D array, got shape {data.shape}")
        if self.bit_depth not in (8, 16):
            raise ValueError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        if data.size and (data.min() < 0 or data.max() > 2 ** self.bit_depth - 1):
            raise ValueError(f"sample values exceed the {self.bit_depth}-bit range")
        dtype = np.uint8 if self.bit_depth == 8 else np.uint16
        object.__setattr__(self, "data", np.ascontiguousarray(data, dtype=dtype))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True)
class Histogram:
    """256-bin gray-level histogram with its normalized density."""
    counts: np.ndarray
    pdf: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_counts(cls, counts) -> "Histogram":
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (256,) or (counts < 0).any():
            raise ValueError("counts must be 256 nonnegative integers")
        total = counts.sum()
        pdf = counts / total if total > 0 else np.zeros(256)
        return cls(counts=counts, pdf=pdf)


# --------------------------------------------------------------------------
# reading and writing

def _read_pgm(raw: bytes) -> GrayImage:
    magic = raw[:2]
    # header: magic, width, height, maxval, separated by whitespace/comments
    pos = 2
    fields = []
    token = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\d+)")
    for _ in range(3):
        m = token.match(raw, pos)
        if m is None:
            raise CorruptFile("malformed PGM header")
        fields.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = fields
    if width < 1 or height < 1 or not 0 < maxval <= 65535:
        raise CorruptFile(f"invalid PGM header values {fields}")
    n = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        pos += 1
        if maxval < 256:
            payload = np.frombuffer(raw[pos:], dtype=np.uint8)
        else:
            body = raw[pos:]
            payload = np.frombuffer(body[:2 * (len(body) // 2)], dtype=">u2")
        if payload.size < n:
            raise CorruptFile(f"truncated PGM raster: {payload.size} of {n} samples")
        data = payload[:n].astype(np.int64)
    else:
        body = raw[pos:]
        body = re.sub(rb"#[^\n]*", b" ", body)
        try:
            data = np.array(body.split(), dtype=np.int64)
        except ValueError as exc:
            raise CorruptFile("non-numeric sample in plain PGM") from exc
        if data.size < n:
            raise CorruptFile(f"truncated PGM raster: {data.size} of {n} samples")
        data = data[:n]
    if data.max(initial=0) > maxval:
        raise CorruptFile("sample exceeds declared maxval")
    bit_depth = 8 if maxval < 256 else 16
    return GrayImage(data.reshape(height, width), bit_depth)


def _read_png(path) -> GrayImage:
    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode not in ("L", "I;16", "I;16B", "I;16L", "I"):
                raise UnsupportedFormat(f"PNG mode {mode!r} is not 8/16-bit grayscale")
            im.load()
            arr = np.array(im)
    except UnsupportedFormat:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise CorruptFile(f"cannot decode PNG: {exc}") from exc
    if mode == "L":
        return GrayImage(arr, 8)
    if arr.min() < 0 or arr.max() > 65535:
        raise UnsupportedFormat("PNG samples exceed 16 bits")
    return GrayImage(arr.astype(np.uint16), 16)


def load_image(path) -> GrayImage:
    """Read a PGM or grayscale PNG file.

    The returned image keeps the sample depth of the file: 8-bit when the
    PGM maxval or PNG bit depth is at most 255/8, 16-bit otherwise.
    """
    path = os.fspath(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw.startswith(_PNG_MAGIC):
        return _read_png(path)
    if raw[:2] in (b"P2", b"P5"):
        return _read_pgm(raw)
    if raw.startswith(_OTHER_CONTAINERS):
        raise UnsupportedFormat(f"{path}: only PGM (P2/P5) and grayscale PNG are supported")
    raise CorruptFile(f"{path}: unrecognized file signature")


def save_image(img: GrayImage, path, plain: bool = False) -> None:
    """Write ``img`` as PNG or PGM, chosen by the file suffix.

    PGM output is raw (``P5``) unless ``plain`` is set. Sample depth is
    preserved, so save/load round trips are bit-exact.
    """
    path = os.fspath(path)
    suffix = os.path.splitext(path)[1].lower()
    if suffix == ".png":
        Image.fromarray(img.data).save(path, format="PNG")
    elif suffix in (".pgm", ".pnm"):
        maxval = 255 if img.bit_depth == 8 else 65535
        header = f"{'P2' if plain else 'P5'}\n{img.width} {img.height}\n{maxval}\n".encode()
        if plain:
            rows = (" ".join(map(str, row)) for row in img.data.tolist())
            body = ("\n".join(rows) + "\n").encode()
        elif img.bit_depth == 8:
            body = img.data.tobytes()
        else:
            body = img.data.astype(">u2").tobytes()
        with open(path, "wb") as fh:
            fh.write(header + body)
    else:
        raise UnsupportedFormat(f"cannot write {suffix!r}; use .png or .pgm")


# --------------------------------------------------------------------------
# standardization and statistics

def standardize(img: GrayImage) -> GrayImage:
    """Map an image to 8 bits.

    8-bit input is returned unchanged. 16-bit input is linearly rescaled so
    its minimum goes to 0 and its maximum to 255, rounding half up; a
    constant 16-bit image maps to all zeros.
    """
    if img.bit_depth == 8:
        return img
    data = img.data.astype(np.int64)
    lo, hi = int(data.min()), int(data.max())
    span = hi - lo
    if span == 0:
        return GrayImage(np.zeros(img.shape, dtype=np.uint8), 8)
    # floor((v - lo) * 255 / span + 1/2) in exact integer arithmetic
    out = (2 * 255 * (data - lo) + span) // (2 * span)
    return GrayImage(out.astype(np.uint8), 8)


def _check_mask(img: GrayImage, mask) -> Optional[np.ndarray]:
    if mask is None:
        return None
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != img.shape:
        raise DimensionMismatch(f"mask {mask.shape} does not match image {img.shape}")
    return mask


def histogram(img: GrayImage, mask=None) -> Histogram:
    """Gray-level histogram of an 8-bit image, optionally over ``mask`` only."""
    if img.bit_depth != 8:
        raise ValueError("histogram requires an 8-bit image; call standardize first")
    mask = _check_mask(img, mask)
    values = img.data if mask is None else img.data[mask]
    return Histogram.from_counts(np.bincount(values.ravel(), minlength=256))


def otsu_threshold(counts) -> int:
    """Two-class discriminant threshold: class 0 is ``<= t``, class 1 is ``> t``.

    Returns the smallest ``t`` maximizing between-class variance. With a
    single occupied level ``c`` the result is ``c - 1`` so that the level is
    treated as foreground.
    """
    counts = np.asarray(counts, dtype=np.float64)
    occupied = np.flatnonzero(counts)
    if occupied.size == 0:
        raise EmptyImage("histogram is empty")
    if occupied.size == 1:
        return int(occupied[0]) - 1
    levels = np.arange(counts.size)
    w0 = np.cumsum(counts)
    s0 = np.cumsum(counts * levels)
    total, stotal = w0[-1], s0[-1]
    w1 = total - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (stotal * w0 - total * s0) ** 2 / (w0 * w1)
    between[(w0 == 0) | (w1 == 0)] = -1.0
    return int(np.argmax(between))


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Largest 8-connected component of a binary raster (ties: lowest label)."""
    labels, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = np.bincount(labels.ravel())[1:]
    return labels == (int(np.argmax(sizes)) + 1)


def breast_mask(img: GrayImage) -> np.ndarray:
    """Binary mask of the breast region.

    Pixels above the two-class discriminant threshold of the histogram are
    kept; only the largest 8-connected component survives (removing film
    labels and markers) and interior holes are filled.
    """
    if img.bit_depth != 8:
        raise ValueError("breast_mask requires an 8-bit image")
    if not img.data.any():
        raise EmptyImage("image has no nonzero pixels")
    t = otsu_threshold(np.bincount(img.data.ravel(), minlength=256))
    mask = largest_component(img.data > t)
    return ndimage.binary_fill_holes(mask)
