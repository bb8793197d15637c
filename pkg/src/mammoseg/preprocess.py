"""Gaussian-pyramid smoothing and CLAHE contrast enhancement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidTiling, TooManyLevels
from .imaging import GrayImage

__all__ = ["PyramidLevel", "BINOMIAL_5", "pyramid_reduce", "tile_mapping", "gaussian_pyramid", "clahe"]

BINOMIAL_5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

MIN_TOP_SIZE = 8


@dataclass(frozen=True)
class PyramidLevel:
    level_index: int
    image: GrayImage

    @property
    def scale_factor(self) -> int:
        return 2 ** self.level_index


def pyramid_reduce(data: np.ndarray) -> np.ndarray:
    """One pyramid step: separable 5-tap binomial blur, then keep even rows/cols.

    Borders are mirrored without repeating the edge sample (``a b c | b a``).
    Returns floats; callers decide how to quantize.
    """
    blurred = ndimage.convolve1d(np.asarray(data, dtype=np.float64), BINOMIAL_5, axis=0, mode="mirror")
    blurred = ndimage.convolve1d(blurred, BINOMIAL_5, axis=1, mode="mirror")
    return blurred[::2, ::2]


def gaussian_pyramid(img: GrayImage, levels: int) -> list:
    """Build ``levels`` pyramid levels, level 0 being ``img`` itself.

    Each level is quantized back to the input bit depth with
    round-half-up before the next reduction.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    h, w = img.shape
    for _ in range(levels - 1):
        h, w = -(-h // 2), -(-w // 2)
    if h < MIN_TOP_SIZE or w < MIN_TOP_SIZE:
        raise TooManyLevels(f"{levels} levels shrink {img.shape} to {(h, w)}, below {MIN_TOP_SIZE}x{MIN_TOP_SIZE}")
    out = [PyramidLevel(0, img)]
    current = img
    for k in range(1, levels):
        reduced = np.floor(pyramid_reduce(current.data) + 0.5)
        current = GrayImage(reduced, current.bit_depth)
        out.append(PyramidLevel(k, current))
    return out


def tile_mapping(tile: np.ndarray, clip_limit: float) -> np.ndarray:
    """Clipped-histogram equalization lookup table for one tile.

    The clip ceiling is ``clip_limit`` times the uniform bin height. Excess
    counts are spread evenly over all 256 bins. The table stretches the
    clipped CDF so the darkest occupied level maps to 0 and 255 to 255.
    """
    n = tile.size
    hist = np.bincount(tile.ravel(), minlength=256).astype(np.float64)
    ceiling = max(clip_limit * n / 256.0, 1.0)
    excess = np.clip(hist - ceiling, 0, None).sum()
    clipped = np.minimum(hist, ceiling) + excess / 256.0
    cdf = np.cumsum(clipped)
    # the darkest occupied bin anchors the stretch
    base = cdf[int(tile.min())]
    span = cdf[-1] - base
    if span <= 0:
        return np.zeros(256)
    return np.clip((cdf - base) / span * 255.0, 0.0, 255.0)


def clahe(img: GrayImage, clip_limit: float = 2.0, tiles=(8, 8)) -> GrayImage:
    """Contrast-limited adaptive histogram equalization.

    The image is split into a ``tiles[0] x tiles[1]`` grid (mirror-padded
    when the size does not divide evenly). Each tile gets its own clipped
    equalization table, and each output pixel bilinearly blends the tables
    of the four nearest tile centers.
    """
    if img.bit_depth != 8:
        raise ValueError("clahe requires an 8-bit image")
    if clip_limit <= 0:
        raise ValueError("clip_limit must be positive")
    ty, tx = int(tiles[0]), int(tiles[1])
    if ty < 1 or tx < 1:
        raise InvalidTiling("tile grid must be at least 1x1")
    h, w = img.shape
    th, tw = -(-h // ty), -(-w // tx)
    if th < 2 or tw < 2 or (ty - 1) * th >= h or (tx - 1) * tw >= w:
        raise InvalidTiling(f"{ty}x{tx} tiles do not fit a {h}x{w} image with tiles of at least 2x2")
    data = img.data
    padded = np.pad(data, ((0, ty * th - h), (0, tx * tw - w)), mode="symmetric")

    luts = np.empty((ty, tx, 256))
    for i in range(ty):
        for j in range(tx):
            luts[i, j] = tile_mapping(padded[i * th:(i + 1) * th, j * tw:(j + 1) * tw], clip_limit)

    # fractional tile coordinates of each pixel relative to tile centers
    gy = (np.arange(h) + 0.5) / th - 0.5
    gx = (np.arange(w) + 0.5) / tw - 0.5
    y0 = np.clip(np.floor(gy).astype(int), 0, ty - 1)
    x0 = np.clip(np.floor(gx).astype(int), 0, tx - 1)
    y1 = np.minimum(y0 + 1, ty - 1)
    x1 = np.minimum(x0 + 1, tx - 1)
    wy = np.clip(gy - y0, 0.0, 1.0)[:, None]
    wx = np.clip(gx - x0, 0.0, 1.0)[None, :]

    def lookup(yi, xi):
        return luts[yi[:, None], xi[None, :], data]

    top = lookup(y0, x0) * (1 - wx) + lookup(y0, x1) * wx
    bottom = lookup(y1, x0) * (1 - wx) + lookup(y1, x1) * wx
    out = top * (1 - wy) + bottom * wy
    return GrayImage(np.clip(np.floor(out + 0.5), 0, 255), 8)
