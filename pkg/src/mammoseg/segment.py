"""Nested threshold layers, connected regions, prestige merging, upsampling."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Sequence

import numpy as np
from scipy import ndimage

from .imaging import EIGHT_CONNECTED, GrayImage

__all__ = [
    "LabeledRegion", "RoiCandidate", "threshold_layers", "label_components",
    "propagate_prestige", "accumulate_prestige", "upsample_roi",
]


@dataclass(frozen=True)
class LabeledRegion:
    """An 8-connected region of one threshold layer at working resolution.

    ``coords`` is an ``(n, 2)`` integer array of ``(row, col)`` pixels in
    raster order. ``level_index`` counts from 1 (least dense layer).
    """
    level_index: int
    label: int
    coords: np.ndarray
    prestige: int = 1

    @property
    def area(self) -> int:
        return len(self.coords)

    @property
    def bbox(self) -> tuple:
        r0, c0 = self.coords.min(axis=0)
        r1, c1 = self.coords.max(axis=0)
        return int(r0), int(c0), int(r1), int(c1)

    @property
    def centroid(self) -> tuple:
        r, c = self.coords.mean(axis=0)
        return float(r), float(c)


@dataclass(frozen=True)
class RoiCandidate:
    """A region mapped back to full resolution.

    The mask is stored as a boolean ``patch`` covering the inclusive
    ``bbox = (min_row, min_col, max_row, max_col)`` of a full image of size
    ``shape``; :meth:`full_mask` expands it.
    """
    patch: np.ndarray
    bbox: tuple
    shape: tuple
    prestige: int = 1
    level: int = 0

    @property
    def area(self) -> int:
        return int(self.patch.sum())

    @property
    def centroid(self) -> tuple:
        rows, cols = np.nonzero(self.patch)
        return float(rows.mean() + self.bbox[0]), float(cols.mean() + self.bbox[1])

    def full_mask(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        r0, c0, r1, c1 = self.bbox
        out[r0:r1 + 1, c0:c1 + 1] = self.patch
        return out

    def contains(self, row: float, col: float) -> bool:
        """Whether the pixel containing ``(row, col)`` belongs to the mask."""
        r, c = int(np.floor(row)), int(np.floor(col))
        r0, c0, r1, c1 = self.bbox
        if not (r0 <= r <= r1 and c0 <= c <= c1):
            return False
        return bool(self.patch[r - r0, c - c0])

    @classmethod
    def from_mask(cls, mask: np.ndarray, prestige: int = 1, level: int = 0) -> "RoiCandidate":
        mask = np.asarray(mask, dtype=bool)
        rows, cols = np.nonzero(mask)
        if rows.size == 0:
            raise ValueError("ROI mask is empty")
        r0, r1, c0, c1 = rows.min(), rows.max(), cols.min(), cols.max()
        bbox = (int(r0), int(c0), int(r1), int(c1))
        return cls(mask[r0:r1 + 1, c0:c1 + 1].copy(), bbox, mask.shape, prestige, level)


def threshold_layers(img: GrayImage, thresholds, mask=None) -> List[np.ndarray]:
    """Binary layers ``img > t_k`` for each threshold, ascending.

    Layer ``k + 1`` is contained in layer ``k`` because thresholds increase.
    ``mask`` restricts every layer to a region (e.g. the breast).
    """
    data = img.data
    layers = []
    for t in thresholds:
        layer = data > t
        if mask is not None:
            layer &= np.asarray(mask, dtype=bool)
        layers.append(layer)
    return layers


def label_components(layer: np.ndarray, level_index: int = 0) -> List[LabeledRegion]:
    """8-connected components of ``layer``, labelled 1.. in raster-scan order."""
    labels, n = ndimage.label(layer, structure=EIGHT_CONNECTED)
    if n == 0:
        return []
    rows, cols = np.nonzero(labels)
    ids = labels[rows, cols]
    order = np.argsort(ids, kind="stable")
    bounds = np.searchsorted(ids[order], np.arange(1, n + 2))
    coords = np.stack([rows[order], cols[order]], axis=1)
    return [
        LabeledRegion(level_index, k + 1, coords[bounds[k]:bounds[k + 1]])
        for k in range(n)
    ]


def _pixel_codes(coords: np.ndarray, stride: int) -> np.ndarray:
    return coords[:, 0].astype(np.int64) * stride + coords[:, 1]


def _coverage_parent(child: LabeledRegion, parent_codes, parent_ids, n_parents, stride, coverage):
    codes = _pixel_codes(child.coords, stride)
    pos = np.searchsorted(parent_codes, codes)
    pos = np.minimum(pos, len(parent_codes) - 1)
    hit = parent_codes[pos] == codes
    if not hit.any():
        return None
    overlap = np.bincount(parent_ids[pos[hit]], minlength=n_parents)
    best = int(np.argmax(overlap))
    return best if overlap[best] >= coverage * child.area else None


def _distance_parent(child: LabeledRegion, parents: Sequence[LabeledRegion], max_distance):
    best, best_d = None, np.inf
    cr, cc = child.centroid
    for k, p in enumerate(parents):
        pr, pc = p.centroid
        radius = np.sqrt(p.area / np.pi)
        d = np.hypot(cr - pr, cc - pc) / radius
        if d < best_d:
            best, best_d = k, d
    return best if best_d < max_distance else None


def propagate_prestige(levels: Sequence[Sequence[LabeledRegion]], coverage: float = 0.8,
                       legacy_distance: bool = False, max_distance: float = 0.2) -> List[List[LabeledRegion]]:
    """Forward prestige from each region to its enclosing region one layer out.

    ``levels`` runs from the densest layer outward. A region forwards its
    accumulated prestige to the single region of the next layer that covers
    at least ``coverage`` of its pixels. With ``legacy_distance`` the parent
    is instead the next-layer region whose centroid is nearest, provided the
    distance divided by that region's equivalent-circle radius is below
    ``max_distance``. Returns every region with its final prestige, in the
    same nesting as ``levels``.
    """
    out = [[replace(r, prestige=1) for r in levels[0]]] if levels else []
    if not levels:
        return out
    stride = 1 + max((int(r.coords[:, 1].max()) for lvl in levels for r in lvl), default=0)
    for parents in levels[1:]:
        children = out[-1]
        gained = np.zeros(len(parents), dtype=np.int64)
        if parents and children:
            if legacy_distance:
                for child in children:
                    k = _distance_parent(child, parents, max_distance)
                    if k is not None:
                        gained[k] += child.prestige
            else:
                codes = np.concatenate([_pixel_codes(p.coords, stride) for p in parents])
                ids = np.concatenate([np.full(p.area, k) for k, p in enumerate(parents)])
                order = np.argsort(codes)
                codes, ids = codes[order], ids[order]
                for child in children:
                    k = _coverage_parent(child, codes, ids, len(parents), stride, coverage)
                    if k is not None:
                        gained[k] += child.prestige
        out.append([replace(p, prestige=1 + int(g)) for p, g in zip(parents, gained)])
    return out


def accumulate_prestige(levels: Sequence[Sequence[LabeledRegion]], coverage: float = 0.8,
                        min_prestige: int = 3, legacy_distance: bool = False) -> List[LabeledRegion]:
    """Regions whose accumulated prestige reaches ``min_prestige``.

    The result is ordered from the least dense layer inward, then by label.
    """
    scored = propagate_prestige(levels, coverage, legacy_distance)
    return [r for lvl in reversed(scored) for r in lvl if r.prestige >= min_prestige]


def upsample_roi(region: LabeledRegion, pyramid_depth: int, full_dims) -> RoiCandidate:
    """Map a working-resolution region to a full-resolution ROI.

    Every working pixel becomes a ``2**depth`` square block; the result is
    clipped to ``full_dims``.
    """
    s = 2 ** int(pyramid_depth)
    H, W = int(full_dims[0]), int(full_dims[1])
    r0, c0, r1, c1 = region.bbox
    work = np.zeros((r1 - r0 + 1, c1 - c0 + 1), dtype=bool)
    work[region.coords[:, 0] - r0, region.coords[:, 1] - c0] = True
    patch = np.kron(work, np.ones((s, s), dtype=bool)) if s > 1 else work
    fr0, fc0 = r0 * s, c0 * s
    fr1, fc1 = min((r1 + 1) * s, H) - 1, min((c1 + 1) * s, W) - 1
    patch = patch[:fr1 - fr0 + 1, :fc1 - fc0 + 1]
    return RoiCandidate(patch, (fr0, fc0, fr1, fc1), (H, W), region.prestige, region.level_index)
