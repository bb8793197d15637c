"""End-to-end orchestration: detection, training and evaluation runs."""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import classify
from .classify import SvmModel
from .errors import (DegenerateShape, EmptyBackground, IdMismatch, InsufficientData,
                     MammosegError)
from .evaluation import (GroundTruthCircle, detection_accuracy, fp_per_image,
                         match_detection, roc, sensitivity_specificity,
                         write_roc_csv)
from .features import (FeatureRow, FeatureVector, boundary_pixels,
                       extract_features, read_feature_table, write_feature_table)
from .hcluster import agglomerate, cut, init_clusters
from .imaging import GrayImage, breast_mask, histogram, load_image, save_image, standardize
from .preprocess import clahe, gaussian_pyramid
from .segment import (RoiCandidate, accumulate_prestige, label_components,
                      threshold_layers, upsample_roi)
from .texture import build_glcm

log = logging.getLogger(__name__)

__all__ = [
    "PipelineConfig", "Detection", "ImageResult", "detect_image", "detect",
    "label_detections", "train", "evaluate", "write_records", "read_records",
    "save_masks", "load_masks", "overlay", "rescore", "results_from_run",
    "EvaluationReport",
]


@dataclass(frozen=True)
class PipelineConfig:
    pyramid_depth: int = 2
    clahe_clip: float = 2.0
    clahe_tiles: tuple = (8, 8)
    level_parameter: int = 5
    coverage: float = 0.8
    min_prestige: int = 3
    ring_width: int = 10
    otsu_weighting: bool = False
    legacy_distance_merge: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.pyramid_depth < 0:
            raise ValueError("pyramid_depth must be >= 0")
        if self.clahe_clip <= 0:
            raise ValueError("clahe_clip must be positive")
        if len(self.clahe_tiles) != 2 or min(self.clahe_tiles) < 1:
            raise ValueError("clahe_tiles must be two positive integers")
        if self.level_parameter < 2:
            raise ValueError("level_parameter must be >= 2")
        if not 0.5 < self.coverage <= 1.0:
            raise ValueError("coverage must lie in (0.5, 1]")
        if self.min_prestige < 1 or self.ring_width < 1:
            raise ValueError("min_prestige and ring_width must be >= 1")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = "x".join(map(str, v))
            elif isinstance(v, bool):
                v = str(v).lower()
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        """Parse flat ``key=value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (s.strip() for s in line.partition("="))
            if not sep or key not in types:
                raise ValueError(f"unknown or malformed config line: {raw!r}")
            default = getattr(cls, key)
            if isinstance(default, bool):
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(f"{key} expects a boolean, got {value!r}")
                kw[key] = value.lower() in ("true", "1", "yes")
            elif isinstance(default, tuple):
                kw[key] = tuple(int(v) for v in value.lower().split("x"))
            else:
                kw[key] = type(default)(value)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())


@dataclass
class Detection:
    roi_id: int
    roi: RoiCandidate
    features: Optional[FeatureVector] = None
    rejected: bool = False
    score: Optional[float] = None

    @property
    def positive(self) -> bool:
        return not self.rejected and self.score is not None and self.score > 0


@dataclass
class ImageResult:
    image_id: str
    shape: tuple
    detections: List[Detection] = field(default_factory=list)
    thresholds: tuple = ()
    image: Optional[GrayImage] = None

    @property
    def candidates(self) -> List[RoiCandidate]:
        return [d.roi for d in self.detections]

    @property
    def positives(self) -> List[Detection]:
        return [d for d in self.detections if d.positive]


def _segment(std: GrayImage, breast: np.ndarray, config: PipelineConfig):
    levels = gaussian_pyramid(std, config.pyramid_depth + 1)
    work = levels[-1].image
    s = 2 ** config.pyramid_depth
    work_mask = breast[::s, ::s]
    enhanced = clahe(work, config.clahe_clip, config.clahe_tiles)
    h = histogram(enhanced, work_mask)
    clusters = init_clusters(h)
    m = min(config.level_parameter, len(clusters))
    if m < 2:
        return (), []
    cm = build_glcm(enhanced, work_mask)
    dend = agglomerate(clusters, h, cm, m, config.otsu_weighting)
    thresholds = cut(dend, m).thresholds
    layers = threshold_layers(enhanced, thresholds, work_mask)
    per_level = [label_components(layer, k + 1) for k, layer in enumerate(layers)]
    regions = accumulate_prestige(per_level[::-1], config.coverage, config.min_prestige,
                                  config.legacy_distance_merge)
    return thresholds, regions


def detect_image(img: GrayImage, config: PipelineConfig = PipelineConfig(),
                 model: Optional[SvmModel] = None, image_id: str = "image") -> ImageResult:
    """Run the detection pipeline on one image.

    Every ROI with enough prestige becomes a :class:`Detection`. ROIs whose
    features cannot be computed, or whose region contrast is not positive,
    are kept but marked ``rejected``. With a ``model`` the remaining ROIs get
    an SVM decision value.
    """
    std = standardize(img)
    result = ImageResult(image_id, std.shape, image=std)
    if not std.data.any():
        return result
    breast = breast_mask(std)
    thresholds, regions = _segment(std, breast, config)
    result.thresholds = tuple(thresholds)
    for k, region in enumerate(regions):
        roi = upsample_roi(region, config.pyramid_depth, std.shape)
        det = Detection(k, roi)
        try:
            det.features = extract_features(std, roi, breast, config.ring_width)
            det.rejected = det.features.rejected
        except (EmptyBackground, DegenerateShape):
            det.rejected = True
        result.detections.append(det)
    if model is not None:
        kept = [d for d in result.detections if not d.rejected]
        if kept:
            scores = classify.decision_values(model, np.array([d.features.as_array() for d in kept]))
            for d, s in zip(kept, scores):
                d.score = float(s)
    return result


# --------------------------------------------------------------------------
# record files

RECORD_COLUMNS = ("image_id", "roi_id", "min_row", "min_col", "max_row", "max_col",
                  "centroid_row", "centroid_col", "area", "prestige", "level",
                  "rejected", "score")


def write_records(path, results: Sequence[ImageResult]) -> None:
    """One CSV line per ROI candidate, in input-image order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for res in results:
            for d in res.detections:
                r, c = d.roi.centroid
                w.writerow([res.image_id, d.roi_id, *d.roi.bbox, f"{r:.3f}", f"{c:.3f}",
                            d.roi.area, d.roi.prestige, d.roi.level, int(d.rejected),
                            "" if d.score is None else repr(d.score)])


def read_records(path) -> List[dict]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rec = dict(rec)
            for key in ("roi_id", "min_row", "min_col", "max_row", "max_col", "area",
                        "prestige", "level", "rejected"):
                rec[key] = int(rec[key])
            rec["centroid_row"] = float(rec["centroid_row"])
            rec["centroid_col"] = float(rec["centroid_col"])
            rec["score"] = float(rec["score"]) if rec["score"] else None
            out.append(rec)
    return out


def save_masks(path, result: ImageResult) -> None:
    """All ROI patches of one image in a compressed ``.npz``."""
    arrays = {"shape": np.array(result.shape)}
    for d in result.detections:
        arrays[f"bbox_{d.roi_id}"] = np.array(d.roi.bbox)
        arrays[f"patch_{d.roi_id}"] = d.roi.patch
        arrays[f"meta_{d.roi_id}"] = np.array([d.roi.prestige, d.roi.level])
    np.savez_compressed(path, **arrays)


def load_masks(path) -> Dict[int, RoiCandidate]:
    with np.load(path) as z:
        shape = tuple(int(v) for v in z["shape"])
        out = {}
        for key in z.files:
            if key.startswith("patch_"):
                k = int(key[6:])
                prestige, level = (int(v) for v in z[f"meta_{k}"])
                out[k] = RoiCandidate(z[key].astype(bool), tuple(int(v) for v in z[f"bbox_{k}"]),
                                      shape, prestige, level)
    return out


def overlay(result: ImageResult) -> GrayImage:
    """The standardized image with every candidate boundary drawn in white."""
    data = result.image.data.copy()
    for d in result.detections:
        r0, c0, r1, c1 = d.roi.bbox
        edge = boundary_pixels(d.roi.patch)
        data[r0:r1 + 1, c0:c1 + 1][edge] = 255
    return GrayImage(data, 8)


# --------------------------------------------------------------------------
# batch runs

def detect(inputs: Sequence, out_dir, config: PipelineConfig = PipelineConfig(),
           model: Optional[SvmModel] = None) -> dict:
    """Detect ROIs in every input and write the run directory.

    ``inputs`` holds file paths or ``(image_id, GrayImage)`` pairs. Written
    files: ``records.csv``, ``features.csv``, ``config.txt``,
    ``manifest.txt``, ``overlays/<id>.png`` and ``masks/<id>.npz``. A
    failing image is listed in the manifest and the batch continues.
    """
    os.makedirs(os.path.join(out_dir, "overlays"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(config.to_text())
    results, failures = [], []
    for item in inputs:
        if isinstance(item, tuple):
            image_id, img = item
        else:
            image_id = os.path.splitext(os.path.basename(os.fspath(item)))[0]
            img = None
        try:
            if img is None:
                img = load_image(item)
            res = detect_image(img, config, model, image_id)
        except (MammosegError, OSError) as exc:
            log.warning("%s failed: %s", image_id, exc)
            failures.append((image_id, f"{type(exc).__name__}: {exc}"))
            continue
        save_image(overlay(res), os.path.join(out_dir, "overlays", f"{image_id}.png"))
        save_masks(os.path.join(out_dir, "masks", f"{image_id}.npz"), res)
        results.append(res)
    write_records(os.path.join(out_dir, "records.csv"), results)
    write_feature_table(os.path.join(out_dir, "features.csv"), [
        FeatureRow(r.image_id, d.roi_id, d.features)
        for r in results for d in r.detections if d.features is not None and not d.rejected
    ])
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        for r in results:
            fh.write(f"ok {r.image_id} {len(r.detections)}\n")
        for image_id, msg in failures:
            fh.write(f"failed {image_id} {msg}\n")
    return {"results": results, "failures": failures}


def label_detections(results: Sequence[ImageResult], truths: Sequence[GroundTruthCircle]) -> List[FeatureRow]:
    """Feature rows labelled +1 when the ROI hits a truth circle, -1 otherwise."""
    by_image: Dict[str, List[GroundTruthCircle]] = {}
    for t in truths:
        by_image.setdefault(t.image_id, []).append(t)
    rows = []
    for res in results:
        circles = [t for t in by_image.get(res.image_id, []) if t.has_circle]
        for d in res.detections:
            if d.rejected or d.features is None:
                continue
            label = 1 if any(match_detection(d.roi, t) for t in circles) else -1
            rows.append(FeatureRow(res.image_id, d.roi_id, d.features, label))
    return rows


def train(rows: Sequence[FeatureRow], out_dir=None, seed: int = 0, grid=classify.DEFAULT_GRID,
          n_folds: int = 10):
    """Grid-search (C, sigma), refit on all rows, optionally write model and report.

    Returns ``(model, grid_result)``.
    """
    rows = [r for r in rows if r.label is not None]
    if not rows:
        raise InsufficientData("feature table has no labelled rows")
    X = np.array([r.features.as_array() for r in rows])
    y = np.array([r.label for r in rows])
    if len(np.unique(y)) < 2:
        raise InsufficientData("feature table holds a single class")
    gs = classify.grid_search(X, y, grid=grid, n_folds=n_folds, seed=seed)
    model = classify.train_svm(X, y, gs.params)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        classify.save_model(model, os.path.join(out_dir, "model.txt"))
        with open(os.path.join(out_dir, "cv_report.txt"), "w") as fh:
            fh.write(f"seed {seed}\nfolds {len(np.unique(gs.folds))}\n")
            fh.write(f"selected C={gs.params.C!r} sigma={gs.params.sigma!r} mean_hm={gs.metrics.harmonic_mean!r}\n")
            fh.write("fold sensitivity specificity harmonic_mean\n")
            for k, m in enumerate(gs.table[(gs.params.C, gs.params.sigma)]):
                fh.write(f"{k} {m.sensitivity!r} {m.specificity!r} {m.harmonic_mean!r}\n")
            fh.write("grid C sigma mean_hm\n")
            for (C, sigma) in gs.table:
                fh.write(f"{C!r} {sigma!r} {gs.mean_hm(C, sigma)!r}\n")
    return model, gs


@dataclass
class EvaluationReport:
    detection_accuracy: float
    sensitivity: float
    specificity: float
    harmonic_mean: float
    auc: float
    fp_per_image: float
    n_images: int
    n_candidates: int

    def to_text(self) -> str:
        return "".join(f"{f.name} {getattr(self, f.name)!r}\n" for f in fields(self))


def evaluate(results: Sequence[ImageResult], truths: Sequence[GroundTruthCircle],
             out_dir=None) -> EvaluationReport:
    """Detection accuracy, ROI-level rates and AUC, and FP per normal image."""
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    truth_ids = {t.image_id for t in truths}
    unknown = [r.image_id for r in results if r.image_id not in truth_ids]
    if unknown:
        raise IdMismatch(f"no ground truth for images {unknown[:5]}")
    result_ids = {r.image_id for r in results}
    truths = [t for t in truths if t.image_id in result_ids]
    rois = {r.image_id: r.candidates for r in results}
    acc = detection_accuracy(rois, truths)

    rows = label_detections(results, truths)
    scored = {(r.image_id, d.roi_id): d for r in results for d in r.detections}
    pairs = [(1 if scored[(row.image_id, row.roi_id)].positive else -1, row.label) for row in rows]
    rates = sensitivity_specificity(pairs)
    scores = [(scored[(row.image_id, row.roi_id)].score, row.label) for row in rows
              if scored[(row.image_id, row.roi_id)].score is not None]
    auc = math.nan
    if scores and len({lab for _, lab in scores}) == 2:
        curve = roc(scores)
        auc = curve.auc
        if out_dir is not None:
            write_roc_csv(os.path.join(out_dir, "roc.csv"), curve)
    normals = sorted({t.image_id for t in truths if t.normal} - {t.image_id for t in truths if not t.normal})
    fp = fp_per_image({r.image_id: len(r.positives) for r in results}, normals) if normals else math.nan
    report = EvaluationReport(acc, rates.sensitivity, rates.specificity, rates.harmonic_mean,
                              auc, fp, len(results), sum(len(r.detections) for r in results))
    if out_dir is not None:
        with open(os.path.join(out_dir, "report.txt"), "w") as fh:
            fh.write(report.to_text())
    return report


def rescore(results: Sequence[ImageResult], model: SvmModel) -> None:
    """Replace the scores of all non-rejected detections with ``model`` outputs."""
    for res in results:
        kept = [d for d in res.detections if not d.rejected and d.features is not None]
        if kept:
            X = np.array([d.features.as_array() for d in kept])
            for d, s in zip(kept, classify.decision_values(model, X)):
                d.score = float(s)


def results_from_run(run_dir) -> List[ImageResult]:
    """Rebuild per-image results (masks, rejection flags, scores) from a detect run."""
    records = read_records(os.path.join(run_dir, "records.csv"))
    feats = {(r.image_id, r.roi_id): r.features
             for r in read_feature_table(os.path.join(run_dir, "features.csv"))}
    order, by_image = [], {}
    for rec in records:
        if rec["image_id"] not in by_image:
            order.append(rec["image_id"])
            by_image[rec["image_id"]] = []
        by_image[rec["image_id"]].append(rec)
    manifest = os.path.join(run_dir, "manifest.txt")
    if os.path.exists(manifest):
        with open(manifest) as fh:
            for line in fh:
                parts = line.split()
                if parts and parts[0] == "ok" and parts[1] not in by_image:
                    order.append(parts[1])
                    by_image[parts[1]] = []
    out = []
    for image_id in order:
        path = os.path.join(run_dir, "masks", f"{image_id}.npz")
        masks = load_masks(path)
        with np.load(path) as z:
            shape = tuple(int(v) for v in z["shape"])
        res = ImageResult(image_id, shape)
        for rec in by_image[image_id]:
            k = rec["roi_id"]
            res.detections.append(Detection(k, masks[k], feats.get((image_id, k)),
                                            bool(rec["rejected"]), rec["score"]))
        out.append(res)
    return out
