"""Five per-ROI features used to separate masses from normal tissue."""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass
from typing import Iterable, List, Optional

import numpy as np
from scipy import ndimage

from .errors import DegenerateShape, EmptyBackground
from .imaging import EIGHT_CONNECTED, GrayImage, largest_component
from .segment import RoiCandidate

__all__ = [
    "FeatureVector", "ShapeStats", "FEATURE_NAMES", "gradient_magnitude",
    "boundary_pixels", "trace_contour", "shape_stats", "region_contrast",
    "mean_gradient", "entropy", "std_dev", "compactness", "extract_features",
    "FeatureRow", "write_feature_table", "read_feature_table",
]

FEATURE_NAMES = ("region_contrast", "mean_gradient", "entropy", "std_dev", "compactness")

# clockwise starting north, (row, col) steps
_MOORE = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
_ALMOST_ONE = math.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class FeatureVector:
    region_contrast: float
    mean_gradient: float
    entropy: float
    std_dev: float
    compactness: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @property
    def rejected(self) -> bool:
        """ROIs that are not brighter than their surroundings are dropped."""
        return self.region_contrast <= 0


@dataclass(frozen=True)
class ShapeStats:
    area: float
    perimeter: float


def _window(shape, bbox, margin):
    r0, c0, r1, c1 = bbox
    return (max(r0 - margin, 0), max(c0 - margin, 0),
            min(r1 + margin, shape[0] - 1), min(c1 + margin, shape[1] - 1))


def _roi_in_window(roi: RoiCandidate, win) -> np.ndarray:
    wr0, wc0, wr1, wc1 = win
    out = np.zeros((wr1 - wr0 + 1, wc1 - wc0 + 1), dtype=bool)
    r0, c0, r1, c1 = roi.bbox
    out[r0 - wr0:r1 - wr0 + 1, c0 - wc0:c1 - wc0 + 1] = roi.patch
    return out


def _values(img: GrayImage, roi: RoiCandidate) -> np.ndarray:
    r0, c0, r1, c1 = roi.bbox
    return img.data[r0:r1 + 1, c0:c1 + 1][roi.patch].astype(np.float64)


def gradient_magnitude(data: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude with replicated borders."""
    p = np.pad(np.asarray(data, dtype=np.float64), 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) / 2.0
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) / 2.0
    return np.hypot(gx, gy)


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """Mask pixels with at least one 4-neighbour outside the mask (or image)."""
    p = np.pad(np.asarray(mask, dtype=bool), 1)
    interior = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return p[1:-1, 1:-1] & ~interior


def trace_contour(mask: np.ndarray) -> np.ndarray:
    """Outer boundary of the first 8-connected object in raster order.

    Moore-neighbour tracing; returns the ``(row, col)`` boundary pixels in
    clockwise order (as seen on screen), without repeating the start pixel.
    """
    p = np.pad(np.asarray(mask, dtype=bool), 1)
    nz = np.argwhere(p)
    if nz.size == 0:
        return np.empty((0, 2), dtype=int)
    start = tuple(nz[0])
    # west of the first raster pixel is always background
    contour = [start]
    cur, back_dir = start, 6
    first_move = None
    while True:
        for k in range(1, 9):
            d = (back_dir + k) % 8
            nxt = (cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1])
            if p[nxt]:
                break
        else:
            break  # isolated pixel
        # the last background neighbour examined, seen from nxt
        prev = (cur[0] + _MOORE[(d - 1) % 8][0], cur[1] + _MOORE[(d - 1) % 8][1])
        move = (cur, nxt)
        if first_move is None:
            first_move = move
        elif move == first_move:
            break
        back_dir = _MOORE.index((prev[0] - nxt[0], prev[1] - nxt[1]))
        cur = nxt
        contour.append(cur)
    if len(contour) > 1 and contour[-1] == start:
        contour.pop()
    return np.array(contour, dtype=int) - 1


def shape_stats(mask: np.ndarray) -> ShapeStats:
    """Area enclosed by, and length of, the traced outer contour.

    Steps along the contour count 1 (axial) or sqrt(2) (diagonal). The area
    is the polygon area of the same contour, so ``A`` and ``P`` describe
    one closed curve through boundary pixel centres.
    """
    mask = largest_component(np.asarray(mask, dtype=bool))
    pts = trace_contour(mask).astype(np.float64)
    if len(pts) < 2:
        return ShapeStats(0.0, 0.0)
    nxt = np.roll(pts, -1, axis=0)
    steps = nxt - pts
    perimeter = float(np.hypot(steps[:, 0], steps[:, 1]).sum())
    area = 0.5 * abs(float((pts[:, 1] * nxt[:, 0] - nxt[:, 1] * pts[:, 0]).sum()))
    return ShapeStats(area, perimeter)


# --------------------------------------------------------------------------
# the five features

def region_contrast(img: GrayImage, roi: RoiCandidate, breast=None, ring_width: int = 10) -> float:
    """Mean inside the ROI minus mean of the surrounding ring.

    The ring is the ROI dilated by ``ring_width`` pixels (square structuring
    element), minus the ROI itself, restricted to ``breast`` when given.
    """
    win = _window(img.shape, roi.bbox, ring_width)
    wr0, wc0, wr1, wc1 = win
    inside = _roi_in_window(roi, win)
    grown = ndimage.binary_dilation(inside, structure=EIGHT_CONNECTED, iterations=ring_width)
    ring = grown & ~inside
    if breast is not None:
        ring &= np.asarray(breast, dtype=bool)[wr0:wr1 + 1, wc0:wc1 + 1]
    if not ring.any():
        raise EmptyBackground("no background pixels around the ROI")
    data = img.data[wr0:wr1 + 1, wc0:wc1 + 1].astype(np.float64)
    return float(data[inside].mean() - data[ring].mean())


def mean_gradient(img: GrayImage, roi: RoiCandidate) -> float:
    """Average gradient magnitude over the ROI boundary pixels."""
    r0, c0, r1, c1 = roi.bbox
    # one extra pixel of context; replicate where the image ends
    H, W = img.shape
    pad = ((1 if r0 == 0 else 0, 1 if r1 == H - 1 else 0), (1 if c0 == 0 else 0, 1 if c1 == W - 1 else 0))
    sub = img.data[max(r0 - 1, 0):r1 + 2, max(c0 - 1, 0):c1 + 2]
    sub = np.pad(sub, pad, mode="edge")
    grad = gradient_magnitude(sub)[1:-1, 1:-1]
    edge = boundary_pixels(roi.patch)
    return float(grad[edge].mean())


def entropy(img: GrayImage, roi: RoiCandidate) -> float:
    """Shannon entropy in bits of the ROI intensity histogram."""
    values = _values(img, roi).astype(np.int64)
    p = np.bincount(values)
    p = p[p > 0] / values.size
    return float(max(-(p * np.log2(p)).sum(), 0.0))


def std_dev(img: GrayImage, roi: RoiCandidate) -> float:
    """Population standard deviation of ROI intensities."""
    return float(_values(img, roi).std())


def compactness(roi: RoiCandidate) -> float:
    """``1 - 4*pi*A / P**2`` of the outer contour, clipped into ``[0, 1)``."""
    if roi.area < 4:
        raise DegenerateShape(f"ROI of {roi.area} pixels is too small for a shape measure")
    stats = shape_stats(roi.patch)
    if stats.perimeter <= 0:
        raise DegenerateShape("ROI has no measurable perimeter")
    value = 1.0 - 4.0 * math.pi * stats.area / stats.perimeter ** 2
    return min(max(value, 0.0), _ALMOST_ONE)


def extract_features(img: GrayImage, roi: RoiCandidate, breast=None, ring_width: int = 10) -> FeatureVector:
    return FeatureVector(
        region_contrast=region_contrast(img, roi, breast, ring_width),
        mean_gradient=mean_gradient(img, roi),
        entropy=entropy(img, roi),
        std_dev=std_dev(img, roi),
        compactness=compactness(roi),
    )


# --------------------------------------------------------------------------
# feature table

@dataclass(frozen=True)
class FeatureRow:
    image_id: str
    roi_id: int
    features: FeatureVector
    label: Optional[int] = None


TABLE_COLUMNS = ("image_id", "roi_id") + FEATURE_NAMES + ("label",)


def write_feature_table(path, rows: Iterable[FeatureRow]) -> None:
    """CSV with columns ``image_id, roi_id, <5 features>, label``.

    ``label`` is +1 (mass), -1 (normal) or empty when unknown.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for row in rows:
            w.writerow([row.image_id, row.roi_id, *map(repr, astuple(row.features)),
                        "" if row.label is None else int(row.label)])


def read_feature_table(path) -> List[FeatureRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TABLE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"feature table lacks columns {sorted(missing)}")
        for rec in reader:
            fv = FeatureVector(*(float(rec[name]) for name in FEATURE_NAMES))
            label = int(rec["label"]) if rec["label"].strip() else None
            rows.append(FeatureRow(rec["image_id"], int(rec["roi_id"]), fv, label))
    return rows
