import numpy as np
import pytest

from mammoseg.classify import KernelParams, load_model, train_svm
from mammoseg.errors import IdMismatch, InsufficientData
from mammoseg.evaluation import GroundTruthCircle
from mammoseg.features import FeatureRow, FeatureVector
from mammoseg.imaging import GrayImage, load_image, save_image
from mammoseg.phantoms import make_phantom, make_phantoms
from mammoseg.pipeline import (Detection, ImageResult, PipelineConfig, detect, detect_image,
                               evaluate, label_detections, load_masks, read_records,
                               results_from_run, train)
from mammoseg.segment import RoiCandidate

from conftest import disc_mask, gray


def nested_gaussian(size=256, center=(120, 100), sigma=18.0, peak=90.0):
    rr, cc = np.mgrid[0:size, 0:size]
    breast = disc_mask((size, size), (size // 2, 0), int(size * 0.45))
    blob = peak * np.exp(-((rr - center[0]) ** 2 + (cc - center[1]) ** 2) / (2 * sigma ** 2))
    return gray(np.where(breast, np.rint(90 + blob), 0)), center


# ---------------------------------------------------------------- config

def test_config_round_trip():
    cfg = PipelineConfig(pyramid_depth=1, clahe_tiles=(4, 6), otsu_weighting=True, seed=9)
    assert PipelineConfig.from_text(cfg.to_text()) == cfg
    assert "clahe_tiles=8x8" in PipelineConfig().to_text()


def test_config_parsing_and_validation():
    cfg = PipelineConfig.from_text("# comment\nlevel_parameter = 4\nlegacy_distance_merge=yes\n")
    assert cfg.level_parameter == 4 and cfg.legacy_distance_merge
    for bad in ("nonsense=1", "coverage=0.2", "level_parameter=1", "otsu_weighting=maybe", "oops"):
        with pytest.raises(ValueError):
            PipelineConfig.from_text(bad)


# ---------------------------------------------------------------- single image

def test_nested_gaussian_detected():
    img, (r, c) = nested_gaussian()
    res = detect_image(img)
    assert len(res.detections) >= 1
    assert any(d.roi.contains(r, c) for d in res.detections)
    assert all(d.roi.prestige >= 3 for d in res.detections)
    assert len(res.thresholds) == 4


@pytest.mark.parametrize("value", [0, 117])
def test_flat_image_has_no_rois(value):
    assert detect_image(gray(np.full((128, 128), value))).detections == []


def test_detect_16bit_input():
    img, (r, c) = nested_gaussian()
    wide = GrayImage(img.data.astype(np.uint16) * 200, 16)
    res = detect_image(wide)
    assert any(d.roi.contains(r, c) for d in res.detections)


def test_detect_with_model_scores_kept_rois():
    img, _ = nested_gaussian()
    X = np.random.default_rng(0).normal(size=(20, 5))
    model = train_svm(X, np.r_[np.ones(10), -np.ones(10)].astype(int), KernelParams(1, 1))
    res = detect_image(img, model=model)
    for d in res.detections:
        assert (d.score is None) == d.rejected
    assert {d.positive for d in res.detections} <= {True, False}


def test_legacy_merge_and_otsu_options_run():
    img, _ = nested_gaussian()
    for cfg in (PipelineConfig(legacy_distance_merge=True), PipelineConfig(otsu_weighting=True),
                PipelineConfig(pyramid_depth=1, level_parameter=3)):
        res = detect_image(img, cfg)
        assert all(d.roi.area > 0 for d in res.detections)


# ---------------------------------------------------------------- batch runs

def test_batch_outputs_and_determinism(tmp_path):
    img, _ = nested_gaussian()
    paths = []
    for k in range(2):
        p = tmp_path / f"img{k}.png"
        save_image(img, p)
        paths.append(p)
    bad = tmp_path / "broken.pgm"
    bad.write_bytes(b"P5 10 10 255\n\x00")
    out1 = detect(paths + [bad], tmp_path / "run1")
    out2 = detect(paths + [bad], tmp_path / "run2")
    assert out2["failures"] == out1["failures"]
    assert [f[0] for f in out1["failures"]] == ["broken"]
    for name in ("records.csv", "features.csv", "config.txt", "manifest.txt"):
        assert (tmp_path / "run1" / name).read_bytes() == (tmp_path / "run2" / name).read_bytes()
    assert PipelineConfig.from_text((tmp_path / "run1" / "config.txt").read_text()) == PipelineConfig()
    manifest = (tmp_path / "run1" / "manifest.txt").read_text().splitlines()
    assert manifest[-1].startswith("failed broken CorruptFile")
    overlay = load_image(tmp_path / "run1" / "overlays" / "img0.png")
    assert overlay.bit_depth == 8 and overlay.shape == img.shape
    records = read_records(tmp_path / "run1" / "records.csv")
    assert [r["image_id"] for r in records][:1] == ["img0"]
    masks = load_masks(tmp_path / "run1" / "masks" / "img0.npz")
    res = out1["results"][0]
    for d in res.detections:
        assert np.array_equal(masks[d.roi_id].full_mask(), d.roi.full_mask())


def test_results_from_run_round_trip(tmp_path):
    img, _ = nested_gaussian()
    out = detect([("x", img), ("flat", gray(np.zeros((64, 64))))], tmp_path)
    back = results_from_run(tmp_path)
    assert [r.image_id for r in back] == ["x", "flat"]
    assert back[1].detections == [] and back[1].shape == (64, 64)
    for a, b in zip(out["results"][0].detections, back[0].detections):
        assert a.rejected == b.rejected and a.roi.bbox == b.roi.bbox
        assert (a.features is None and b.features is None) or a.rejected or a.features == b.features


# ---------------------------------------------------------------- train / evaluate

def toy_rows(n=30, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n):
        label = 1 if k % 2 == 0 else -1
        fv = FeatureVector(*(rng.normal(3 * label, 0.5, 5)))
        rows.append(FeatureRow(f"i{k}", 0, fv, label))
    return rows


def test_train_separable_table(tmp_path):
    model, gs = train(toy_rows(), tmp_path / "a", seed=3)
    assert gs.metrics.harmonic_mean == 1.0
    report = (tmp_path / "a" / "cv_report.txt").read_text().splitlines()
    assert report[0] == "seed 3"
    assert report[3] == "fold sensitivity specificity harmonic_mean"
    train(toy_rows(), tmp_path / "b", seed=3)
    assert (tmp_path / "a" / "model.txt").read_bytes() == (tmp_path / "b" / "model.txt").read_bytes()
    assert load_model(tmp_path / "a" / "model.txt").n_support == model.n_support


def test_train_single_class():
    rows = [r for r in toy_rows() if r.label == 1]
    with pytest.raises(InsufficientData):
        train(rows)
    with pytest.raises(InsufficientData):
        train([FeatureRow("a", 0, FeatureVector(1, 1, 1, 1, 1), None)])


def _result(image_id, masks_scores, shape=(50, 50)):
    res = ImageResult(image_id, shape)
    for k, (mask, score) in enumerate(masks_scores):
        res.detections.append(Detection(k, RoiCandidate.from_mask(mask),
                                        FeatureVector(1, 1, 1, 1, 0.1), False, score))
    return res


def test_evaluate_batch(tmp_path):
    shape = (50, 50)
    hit = disc_mask(shape, (20, 20), 4)
    far = disc_mask(shape, (5, 40), 3)
    results = [
        _result("a", [(hit, 0.9), (far, 0.8)]),
        _result("b", [(hit, 0.7)]),
        _result("n1", [(far, 0.6), (hit, -0.5)]),
        _result("n2", []),
    ]
    truths = [GroundTruthCircle("a", 20, 20, 5, abnormality="CIRC"),
              GroundTruthCircle("b", 20, 20, 5, abnormality="CIRC"),
              GroundTruthCircle("n1"), GroundTruthCircle("n2"), GroundTruthCircle("unused")]
    rep = evaluate(results, truths, tmp_path)
    assert rep.detection_accuracy == 1.0
    # positives: a0 (hit), a1 (miss), b0 (hit), n1-0 (miss); n1-1 scored negative
    assert rep.sensitivity == 1.0 and rep.specificity == pytest.approx(1 / 3)
    # mass scores 0.9, 0.7 against normal scores 0.8, 0.6, -0.5: 5 of 6 pairs concordant
    assert rep.auc == 5 / 6
    assert rep.fp_per_image == 0.5
    assert (tmp_path / "roc.csv").read_text().splitlines()[-1] == f"auc,{5 / 6!r}"
    assert (tmp_path / "report.txt").exists()


def test_evaluate_id_mismatch():
    with pytest.raises(IdMismatch):
        evaluate([ImageResult("zzz", (4, 4))], [GroundTruthCircle("a")])


def test_label_detections():
    shape = (50, 50)
    res = _result("a", [(disc_mask(shape, (20, 20), 4), None), (disc_mask(shape, (5, 40), 3), None)])
    rows = label_detections([res], [GroundTruthCircle("a", 20, 20, 5, abnormality="CIRC")])
    assert [r.label for r in rows] == [1, -1]


# ---------------------------------------------------------------- phantoms

def test_phantoms_deterministic_and_balanced():
    a = make_phantoms(4, seed=11, size=128)
    b = make_phantoms(4, seed=11, size=128)
    assert all(p.image == q.image for p, q in zip(a, b))
    assert [p.normal for p in a] == [False, True, False, True]
    assert a[0].image.shape == (128, 128)
    with pytest.raises(ValueError):
        make_phantoms(0)


def test_phantom_blob_contrast_and_circles():
    for s in range(6):
        with_mass = make_phantom("p", np.random.default_rng(s), abnormal=True)
        without = make_phantom("p", np.random.default_rng(s), abnormal=False)
        for t in with_mass.truths:
            assert 30 <= t.radius <= 80           # ceil(2 sigma) with sigma in [15, 40]
            r, c = int(t.y), int(t.x)
            assert with_mass.breast[r, c]
            lift = int(with_mass.image.data[r, c]) - int(without.image.data[r, c])
            room = 255 - int(without.image.data[r, c])
            assert lift >= min(29, room)          # peak >= 30 before rounding and clipping
        assert np.array_equal(with_mass.breast, without.breast)
        assert not with_mass.image.data[~with_mass.breast].any()
