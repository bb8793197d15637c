"""Gray-level co-occurrence matrix used by the clustering distance."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, EmptyOverlap, InvalidRange
from .imaging import GrayImage

__all__ = ["GLCM_OFFSETS", "CooccurrenceMatrix", "build_glcm", "cluster_cooccurrence"]

# (row, col) deltas for 0, 45, 90 and 135 degrees at distance one.
# The opposite directions are deliberately not accumulated.
GLCM_OFFSETS = ((0, 1), (-1, 1), (-1, 0), (-1, -1))

LEVELS = 256


@dataclass(frozen=True)
class CooccurrenceMatrix:
    """Normalized 256x256 co-occurrence table.

    ``entries[s, t]`` is the fraction of accumulated (source, target) pixel
    pairs whose source has level ``s`` and target level ``t``.
    """
    entries: np.ndarray
    pair_count: int

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def _integral(self) -> np.ndarray:
        out = np.zeros((self.size + 1, self.size + 1))
        out[1:, 1:] = self.entries.cumsum(axis=0).cumsum(axis=1)
        return out

    def block_sum(self, rows, cols) -> float:
        """Sum of ``entries`` over inclusive row range ``rows`` x column range ``cols``."""
        (r0, r1), (c0, c1) = rows, cols
        s = self._integral
        return float(s[r1 + 1, c1 + 1] - s[r0, c1 + 1] - s[r1 + 1, c0] + s[r0, c0])


def build_glcm(img: GrayImage, mask=None) -> CooccurrenceMatrix:
    """Accumulate pair counts over the four offsets and normalize to unit sum.

    When ``mask`` is given, a pair counts only if both pixels lie inside it.
    """
    if img.bit_depth != 8:
        raise ValueError("build_glcm requires an 8-bit image")
    data = img.data.astype(np.int64)
    h, w = data.shape
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != data.shape:
            raise DimensionMismatch(f"mask {mask.shape} does not match image {data.shape}")
    codes = []
    for dr, dc in GLCM_OFFSETS:
        # source rows/cols such that (r + dr, c + dc) stays in bounds
        rs = slice(max(0, -dr), h - max(0, dr))
        cs = slice(max(0, -dc), w - max(0, dc))
        rt = slice(rs.start + dr, rs.stop + dr)
        ct = slice(cs.start + dc, cs.stop + dc)
        src, tgt = data[rs, cs], data[rt, ct]
        if mask is not None:
            keep = mask[rs, cs] & mask[rt, ct]
            src, tgt = src[keep], tgt[keep]
        codes.append((src * LEVELS + tgt).ravel())
    codes = np.concatenate(codes)
    if codes.size == 0:
        raise EmptyOverlap("no valid pixel pair for the co-occurrence matrix")
    counts = np.bincount(codes, minlength=LEVELS * LEVELS).reshape(LEVELS, LEVELS)
    return CooccurrenceMatrix(entries=counts / codes.size, pair_count=int(codes.size))


def _check_range(r):
    lo, hi = int(r[0]), int(r[1])
    if not 0 <= lo <= hi < LEVELS:
        raise InvalidRange(f"gray-level range {r} is empty or outside [0, 255]")
    return lo, hi


def cluster_cooccurrence(cm: CooccurrenceMatrix, range_i, range_j) -> float:
    """Co-occurrence mass from levels in ``range_i`` to levels in ``range_j``,
    divided by the width of ``range_i``.

    Ranges are inclusive ``(lo, hi)`` pairs and must not overlap.
    """
    ri, rj = _check_range(range_i), _check_range(range_j)
    if ri[0] <= rj[1] and rj[0] <= ri[1]:
        raise InvalidRange(f"ranges {ri} and {rj} overlap")
    return cm.block_sum(ri, rj) / (ri[1] - ri[0] + 1)
