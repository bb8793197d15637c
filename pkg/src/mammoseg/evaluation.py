"""Ground-truth matching, ROC/AUC, rates and false positives per image."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .classify import EvalMetrics, harmonic_mean
from .errors import NoNormals, SingleClass
from .segment import RoiCandidate

__all__ = [
    "GroundTruthCircle", "RocCurve", "match_detection", "roc",
    "fp_per_image", "sensitivity_specificity", "detection_accuracy",
    "read_truth", "write_truth", "write_roc_csv",
]


@dataclass(frozen=True)
class GroundTruthCircle:
    """One truth-file entry.

    ``x`` is the column and ``y`` the row in top-left image coordinates
    (conversion from the MIAS bottom-left origin happens when reading).
    Normal images carry ``normal=True`` and no circle.
    """
    image_id: str
    x: Optional[float] = None
    y: Optional[float] = None
    radius: Optional[float] = None
    severity: Optional[str] = None
    tissue: str = ""
    abnormality: str = "NORM"

    @property
    def normal(self) -> bool:
        return self.abnormality == "NORM"

    @property
    def has_circle(self) -> bool:
        return self.radius is not None and self.radius > 0


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def match_detection(roi: RoiCandidate, truth: GroundTruthCircle) -> bool:
    """A hit when the ROI centroid falls in the circle or the circle centre in the ROI."""
    if not truth.has_circle:
        return False
    r, c = roi.centroid
    if (r - truth.y) ** 2 + (c - truth.x) ** 2 <= truth.radius ** 2:
        return True
    return roi.contains(truth.y, truth.x)


def roc(scores: Sequence[Tuple[float, int]]) -> RocCurve:
    """ROC curve from ``(score, label)`` pairs; labels are +1 / -1 (or 1 / 0).

    One vertex per distinct score, swept from the highest down, so tied
    scores move the curve diagonally. AUC is the trapezoid area, computed in
    integer arithmetic before the final division.
    """
    s = np.array([float(v) for v, _ in scores])
    lab = np.array([int(l) > 0 for _, l in scores])
    P, N = int(lab.sum()), int((~lab).sum())
    if P == 0 or N == 0:
        raise SingleClass("ROC needs both positive and negative samples")
    order = np.argsort(-s, kind="stable")
    s, lab = s[order], lab[order]
    distinct = np.flatnonzero(np.diff(s)) if len(s) > 1 else np.array([], dtype=int)
    ends = np.r_[distinct, len(s) - 1]
    tp = np.r_[0, np.cumsum(lab)[ends]].astype(np.int64)
    fp = np.r_[0, np.cumsum(~lab)[ends]].astype(np.int64)
    twice_area = int(((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])).sum())
    return RocCurve(fpr=fp / N, tpr=tp / P, thresholds=np.r_[np.inf, s[ends]],
                    auc=twice_area / (2 * P * N))


def fp_per_image(detections: Mapping[str, int], normal_ids: Iterable[str]) -> float:
    """Mean number of positive ROIs over the normal images.

    ``detections`` maps image id to its count of positive (post-classification)
    ROIs; images that are not normal are ignored.
    """
    normal_ids = list(normal_ids)
    if not normal_ids:
        raise NoNormals("no normal image to average false positives over")
    return float(sum(detections.get(i, 0) for i in normal_ids) / len(normal_ids))


def sensitivity_specificity(predictions: Iterable[Tuple[int, int]]) -> EvalMetrics:
    """Rates from ``(predicted, actual)`` label pairs (+1 mass, -1 normal).

    A rate with an empty denominator is NaN and sets ``undefined``.
    """
    tp = fn = tn = fp = 0
    for pred, actual in predictions:
        if actual > 0:
            tp += pred > 0
            fn += pred <= 0
        else:
            tn += pred <= 0
            fp += pred > 0
    sens = tp / (tp + fn) if tp + fn else math.nan
    spec = tn / (tn + fp) if tn + fp else math.nan
    undefined = math.isnan(sens) or math.isnan(spec)
    return EvalMetrics(sens, spec, math.nan if undefined else harmonic_mean(sens, spec), undefined)


def detection_accuracy(rois: Mapping[str, Sequence[RoiCandidate]],
                       truths: Sequence[GroundTruthCircle]) -> float:
    """Fraction of truth circles hit by at least one ROI of the same image."""
    circles = [t for t in truths if t.has_circle]
    if not circles:
        return math.nan
    hit = sum(any(match_detection(r, t) for r in rois.get(t.image_id, ())) for t in circles)
    return hit / len(circles)


# --------------------------------------------------------------------------
# files

def read_truth(path, heights: Optional[Mapping[str, int]] = None, default_height: int = 1024,
               origin: str = "bottom-left") -> List[GroundTruthCircle]:
    """Parse MIAS-style lines ``id tissue class [severity x y radius]``.

    With the default ``origin="bottom-left"`` the y coordinate is measured
    up from the bottom edge and is converted to a row as ``height - y``,
    using ``heights[id]`` or ``default_height``. ``origin="top-left"``
    keeps y as the row. Lines starting with ``#`` are ignored.
    """
    if origin not in ("bottom-left", "top-left"):
        raise ValueError("origin must be 'bottom-left' or 'top-left'")
    out = []
    with open(path) as fh:
        for raw in fh:
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) < 3:
                raise ValueError(f"malformed truth line: {raw.rstrip()!r}")
            image_id, tissue, abnormality = parts[:3]
            severity = parts[3] if len(parts) > 3 else None
            x = y = radius = None
            if len(parts) >= 7:
                try:
                    x, y, radius = float(parts[4]), float(parts[5]), float(parts[6])
                except ValueError:
                    x = y = radius = None
            if y is not None and origin == "bottom-left":
                height = (heights or {}).get(image_id, default_height)
                y = height - y
            out.append(GroundTruthCircle(image_id, x, y, radius, severity, tissue, abnormality))
    return out


def write_truth(path, truths: Iterable[GroundTruthCircle], heights: Mapping[str, int]) -> None:
    """Write MIAS-style truth lines (bottom-left origin)."""
    with open(path, "w") as fh:
        for t in truths:
            if t.normal:
                fh.write(f"{t.image_id} {t.tissue or 'F'} NORM\n")
            else:
                y = heights[t.image_id] - t.y
                fh.write(f"{t.image_id} {t.tissue or 'F'} {t.abnormality} {t.severity or 'B'} "
                         f"{t.x:g} {y:g} {t.radius:g}\n")


def write_roc_csv(path, curve: RocCurve) -> None:
    """Two columns ``fpr,tpr`` per vertex, then an ``auc,<value>`` line."""
    with open(path, "w") as fh:
        fh.write("fpr,tpr\n")
        for f, t in zip(curve.fpr, curve.tpr):
            fh.write(f"{float(f)!r},{float(t)!r}\n")
        fh.write(f"auc,{float(curve.auc)!r}\n")
