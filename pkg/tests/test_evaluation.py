import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mammoseg.errors import NoNormals, SingleClass
from mammoseg.evaluation import (GroundTruthCircle, detection_accuracy, fp_per_image,
                                 match_detection, read_truth, roc, sensitivity_specificity,
                                 write_roc_csv, write_truth)
from mammoseg.segment import RoiCandidate

from conftest import disc_mask


def concordance(scores):
    """(2 * concordant + ties) / (2 P N) by pair enumeration, as an exact fraction."""
    pos = [s for s, l in scores if l > 0]
    neg = [s for s, l in scores if l <= 0]
    twice = sum(2 if p > n else 1 if p == n else 0 for p in pos for n in neg)
    return twice, 2 * len(pos) * len(neg)


# ---------------------------------------------------------------- matching

def test_centroid_at_centre():
    roi = RoiCandidate.from_mask(disc_mask((50, 50), (20, 30), 5))
    assert match_detection(roi, GroundTruthCircle("a", x=30, y=20, radius=3, abnormality="CIRC"))


def test_far_roi_misses():
    roi = RoiCandidate.from_mask(disc_mask((50, 50), (10, 10), 3))
    assert not match_detection(roi, GroundTruthCircle("a", x=40, y=40, radius=5, abnormality="CIRC"))


def test_ring_roi_hits():
    shape = (60, 60)
    ring = disc_mask(shape, (30, 30), 12) & ~disc_mask(shape, (30, 30), 6)
    roi = RoiCandidate.from_mask(ring)
    truth_inside_hole = GroundTruthCircle("a", x=30, y=30, radius=4, abnormality="CIRC")
    assert match_detection(roi, truth_inside_hole)
    assert not roi.contains(30, 30)
    # centre on the ring itself and centroid outside the small circle: hit via the mask
    on_ring = GroundTruthCircle("a", x=30, y=39, radius=2, abnormality="CIRC")
    assert roi.contains(39, 30) and match_detection(roi, on_ring)


def test_normal_truth_never_matches():
    roi = RoiCandidate.from_mask(np.ones((5, 5), bool))
    assert not match_detection(roi, GroundTruthCircle("a"))


# ---------------------------------------------------------------- ROC

def test_roc_perfect_and_inverted():
    scores = [(0.9, 1), (0.8, 1), (0.3, -1), (0.1, -1)]
    assert roc(scores).auc == 1.0
    assert roc([(s, -l) for s, l in scores]).auc == 0.0


def test_roc_interleaved_three_quarters():
    curve = roc([(0.9, 1), (0.8, -1), (0.7, 1), (0.6, -1)])
    assert curve.auc == 0.75
    assert curve.fpr.tolist() == [0, 0, 0.5, 0.5, 1]
    assert curve.tpr.tolist() == [0, 0.5, 0.5, 1, 1]


def test_roc_ties_move_diagonally():
    curve = roc([(0.5, 1), (0.5, -1)])
    assert curve.fpr.tolist() == [0, 1] and curve.tpr.tolist() == [0, 1]
    assert curve.auc == 0.5


def test_roc_single_class():
    with pytest.raises(SingleClass):
        roc([(0.1, 1), (0.2, 1)])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 8), st.sampled_from([1, -1])), min_size=2, max_size=50))
def test_auc_equals_concordance(pairs):
    if len({l for _, l in pairs}) < 2:
        return
    scores = [(s / 4.0, l) for s, l in pairs]
    curve = roc(scores)
    num, den = concordance(scores)
    assert curve.auc == num / den
    assert curve.fpr[0] == 0 and curve.tpr[0] == 0 and curve.fpr[-1] == 1 and curve.tpr[-1] == 1
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)


def test_roc_csv(tmp_path):
    path = tmp_path / "roc.csv"
    write_roc_csv(path, roc([(0.9, 1), (0.8, -1), (0.7, 1), (0.6, -1)]))
    lines = path.read_text().splitlines()
    assert lines[0] == "fpr,tpr" and lines[1] == "0.0,0.0" and lines[-1] == "auc,0.75"
    assert len(lines) == 2 + 5


# ---------------------------------------------------------------- rates

def test_fp_per_image():
    assert fp_per_image({"a": 0, "b": 0}, ["a", "b"]) == 0.0
    assert fp_per_image({"n1": 2, "n2": 4, "n3": 8}, ["n1", "n2", "n3"]) == pytest.approx(14 / 3)
    assert fp_per_image({"n1": 2, "n2": 4, "n3": 8, "abn": 50}, ["n1", "n2", "n3"]) == pytest.approx(14 / 3)
    with pytest.raises(NoNormals):
        fp_per_image({"a": 1}, [])


def test_sensitivity_specificity():
    m = sensitivity_specificity([(1, 1), (-1, -1)])
    assert (m.sensitivity, m.specificity, m.harmonic_mean) == (1.0, 1.0, 1.0)
    assert sensitivity_specificity([(-1, 1), (-1, -1)]).sensitivity == 0.0
    pairs = [(1, 1)] * 19 + [(-1, 1)] * 2 + [(-1, -1)] * 73 + [(1, -1)] * 12
    m = sensitivity_specificity(pairs)
    assert m.sensitivity == 19 / 21 and m.specificity == 73 / 85
    assert m.sensitivity == pytest.approx(0.9048, abs=1e-4)
    assert m.specificity == pytest.approx(0.8588, abs=1e-4)


def test_undefined_rate_flag():
    m = sensitivity_specificity([(1, -1), (-1, -1)])
    assert math.isnan(m.sensitivity) and m.undefined and math.isnan(m.harmonic_mean)
    assert m.specificity == 0.5


def test_detection_accuracy_counts_each_circle_once():
    shape = (50, 50)
    rois = {"a": [RoiCandidate.from_mask(disc_mask(shape, (20, 20), 4)),
                  RoiCandidate.from_mask(disc_mask(shape, (21, 21), 4))]}
    truths = [GroundTruthCircle("a", 20, 20, 5, abnormality="CIRC"),
              GroundTruthCircle("a", 45, 45, 3, abnormality="CIRC"),
              GroundTruthCircle("b", 10, 10, 3, abnormality="CIRC"),
              GroundTruthCircle("n")]
    assert detection_accuracy(rois, truths) == pytest.approx(1 / 3)


# ---------------------------------------------------------------- truth files

def test_truth_bottom_left_origin(tmp_path):
    path = tmp_path / "truth.txt"
    path.write_text("mdb001 G CIRC B 535 425 197\nmdb003 D NORM\n# comment\n")
    a, n = read_truth(path)
    assert (a.x, a.y, a.radius, a.severity, a.tissue) == (535.0, 1024 - 425.0, 197.0, "B", "G")
    assert n.normal and not n.has_circle
    (a,) = [t for t in read_truth(path, {"mdb001": 600}) if not t.normal]
    assert a.y == 175.0
    (a,) = [t for t in read_truth(path, origin="top-left") if not t.normal]
    assert a.y == 425.0


def test_truth_round_trip(tmp_path):
    truths = [GroundTruthCircle("p0", 30.0, 100.0, 12.0, "M", "F", "CIRC"),
              GroundTruthCircle("p1", tissue="F")]
    path = tmp_path / "t.txt"
    write_truth(path, truths, {"p0": 512, "p1": 512})
    assert read_truth(path, {"p0": 512, "p1": 512}) == truths


def test_truth_malformed(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("mdb001 G\n")
    with pytest.raises(ValueError):
        read_truth(path)
