import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mammoseg.errors import EmptyHistogram, InvalidCut, NotAdjacent, TooFewLevels
from mammoseg.hcluster import (ClusterStats, Dendrogram, ThresholdSet, agglomerate,
                               cluster_from_range, cut, init_clusters, merge_distance,
                               multilevel_thresholds)
from mammoseg.imaging import Histogram
from mammoseg.texture import CooccurrenceMatrix

ZERO_CM = CooccurrenceMatrix(np.zeros((256, 256)), 1)


def hist(levels_counts):
    counts = np.zeros(256, dtype=np.int64)
    for level, n in levels_counts.items():
        counts[level] = n
    return Histogram.from_counts(counts)


def random_hist(rng, occupied=None):
    counts = np.zeros(256, dtype=np.int64)
    k = occupied or int(rng.integers(10, 120))
    counts[rng.choice(256, k, replace=False)] = rng.integers(1, 500, k)
    return Histogram.from_counts(counts)


def eq1(a, b, h, cm_entries, otsu=False):
    """Dissimilarity written out term by term."""
    cp = cm_entries[a.lo:a.hi + 1, b.lo:b.hi + 1].sum() / (a.hi - a.lo + 1)
    cp = min(max(cp, 0.0), 1.0)
    cx = (a.mass * a.mean + b.mass * b.mean) / (a.mass + b.mass)
    var = sum((l - cx) ** 2 * h.pdf[l] for l in range(a.lo, b.hi + 1))
    if var < 1e-12:
        return 0.0
    w = a.mass * b.mass if otsu else (a.mass - b.mass) ** 2
    return (1 - cp) * w * (a.mean - b.mean) ** 2 / var


# ---------------------------------------------------------------- init_clusters

def test_init_two_spikes():
    cs = init_clusters(hist({10: 5, 200: 5}))
    assert [(c.lo, c.hi) for c in cs] == [(10, 10), (200, 200)]


def test_init_uniform():
    assert len(init_clusters(Histogram.from_counts(np.ones(256, dtype=np.int64)))) == 256


def test_init_masses_and_means():
    cs = init_clusters(hist({3: 2, 4: 3, 5: 5}))
    assert [c.mean for c in cs] == [3, 4, 5]
    assert [c.mass for c in cs] == pytest.approx([0.2, 0.3, 0.5])


def test_init_empty():
    with pytest.raises(EmptyHistogram):
        init_clusters(Histogram.from_counts(np.zeros(256, dtype=np.int64)))


# ---------------------------------------------------------------- merge_distance

def test_distance_equal_masses_is_zero():
    h = hist({10: 1, 20: 1})
    a, b = init_clusters(h)
    # pooled mean 15, spread 25, but the (P_a - P_b)^2 factor vanishes
    assert eq1(a, b, h, ZERO_CM.entries) == 0.0
    assert merge_distance(a, b, h, ZERO_CM) == 0.0
    assert merge_distance(a, b, h, ZERO_CM, otsu_weighting=True) == pytest.approx(0.25 * 100 / 25)


def test_distance_full_cooccurrence_is_zero():
    h = hist({10: 1, 20: 3})
    e = np.zeros((256, 256))
    e[10, 20] = 1.0
    a, b = init_clusters(h)
    assert merge_distance(a, b, h, CooccurrenceMatrix(e, 1)) == 0.0


def test_distance_equal_means_is_zero():
    h = hist({10: 1, 20: 1, 30: 1})
    a = ClusterStats(10, 10, 1 / 3, 20.0)
    b = ClusterStats(20, 30, 2 / 3, 20.0)
    assert merge_distance(a, b, h, ZERO_CM) == 0.0


def test_distance_not_adjacent():
    h = hist({10: 1, 20: 1, 30: 1})
    a, b, c = init_clusters(h)
    with pytest.raises(NotAdjacent):
        merge_distance(a, c, h, ZERO_CM)
    with pytest.raises(NotAdjacent):
        merge_distance(b, a, h, ZERO_CM)


def test_distance_matches_term_by_term(rng):
    for _ in range(20):
        h = random_hist(rng)
        e = rng.random((256, 256)) ** 4
        e /= e.sum()
        cm = CooccurrenceMatrix(e, 1)
        cs = init_clusters(h)
        i = int(rng.integers(0, len(cs) - 3))
        a = cluster_from_range(cs[i].lo, cs[i + 1].hi, h)
        b = cluster_from_range(cs[i + 2].lo, cs[i + 3].hi, h)
        for otsu in (False, True):
            assert merge_distance(a, b, h, cm, otsu) == pytest.approx(eq1(a, b, h, e, otsu), rel=1e-9, abs=1e-15)


# ---------------------------------------------------------------- agglomerate / cut

def test_agglomerate_identity():
    h = hist({1: 1, 5: 2, 9: 3})
    d = agglomerate(init_clusters(h), h, ZERO_CM, 3)
    assert d.merges == [] and len(d.final) == 3


def test_agglomerate_three_spikes():
    h = hist({10: 1, 20: 1, 240: 1})
    cs = init_clusters(h)
    d01, d12 = (eq1(cs[0], cs[1], h, ZERO_CM.entries), eq1(cs[1], cs[2], h, ZERO_CM.entries))
    assert d01 == d12 == 0.0          # tie under the printed weighting
    d = agglomerate(cs, h, ZERO_CM, 2)
    assert (d.merges[0].left.lo, d.merges[0].right.lo) == (10, 20)
    assert cut(d, 2).thresholds == (20,)


def test_agglomerate_three_spikes_otsu_weighting():
    h = hist({10: 1, 20: 1, 240: 1})
    cs = init_clusters(h)
    # P_a * P_b * gap**2 / var does not depend on the gap for equal singletons
    d01 = eq1(cs[0], cs[1], h, ZERO_CM.entries, True)
    d12 = eq1(cs[1], cs[2], h, ZERO_CM.entries, True)
    assert d01 == pytest.approx(d12, rel=1e-12)
    d = agglomerate(cs, h, ZERO_CM, 2, otsu_weighting=True)
    assert (d.merges[0].left.lo, d.merges[0].right.lo) == (10, 20)


def test_agglomerate_too_few_levels():
    h = hist({1: 1, 2: 1})
    with pytest.raises(TooFewLevels):
        agglomerate(init_clusters(h), h, ZERO_CM, 3)
    with pytest.raises(ValueError):
        agglomerate(init_clusters(h), h, ZERO_CM, 1)


def test_agglomerate_greedy_choice_matches_oracle(rng):
    """Each recorded merge is the minimum over the current adjacent gaps."""
    h = random_hist(rng, 40)
    e = rng.random((256, 256)) ** 3
    e /= e.sum()
    d = agglomerate(init_clusters(h), h, CooccurrenceMatrix(e, 1), 2)
    clusters = list(d.initial)
    for rec in d.merges:
        gaps = [eq1(a, b, h, e) for a, b in zip(clusters, clusters[1:])]
        best = min(gaps)
        first = next(k for k, g in enumerate(gaps) if g <= best * (1 + 1e-12))
        assert rec.position == first
        assert rec.distance == pytest.approx(best, rel=1e-9, abs=1e-15)
        a, b = clusters[first], clusters[first + 1]
        clusters[first:first + 2] = [cluster_from_range(a.lo, b.hi, h)]


def test_cut_two_bands():
    counts = np.ones(256, dtype=np.int64)
    h = Histogram.from_counts(counts)
    d = Dendrogram(initial=[cluster_from_range(0, 100, h), cluster_from_range(101, 255, h)],
                   histogram=h)
    assert cut(d, 2).thresholds == (100,)


def test_cut_invalid():
    h = hist({1: 1, 2: 2, 3: 4})
    d = agglomerate(init_clusters(h), h, ZERO_CM, 2)
    with pytest.raises(InvalidCut):
        cut(d, 4)
    with pytest.raises(InvalidCut):
        cut(d, 1)


def test_cut_m_minus_one_drops_merged_boundary(rng):
    h = random_hist(rng, 60)
    d = agglomerate(init_clusters(h), h, ZERO_CM, 2)
    for m in range(8, 2, -1):
        upper = set(cut(d, m).thresholds)
        lower = set(cut(d, m - 1).thresholds)
        rec = d.merges[len(d.initial) - m]
        assert upper - lower == {rec.left.hi}
        assert lower <= upper


def test_threshold_set_validation():
    with pytest.raises(ValueError):
        ThresholdSet((5, 5))
    assert len(ThresholdSet((1, 2, 9))) == 3


def test_dendrogram_text_trace():
    h = hist({10: 1, 20: 1, 240: 1})
    d = agglomerate(init_clusters(h), h, ZERO_CM, 2)
    line = d.to_text().splitlines()[0].split()
    assert line[:3] == ["1", "10..10", "20..20"]
    assert float(line[3]) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=256, max_size=256), st.integers(2, 8),
       st.booleans())
def test_cluster_invariants(counts, m, otsu):
    counts = np.array(counts, dtype=np.int64)
    if np.count_nonzero(counts) < m:
        return
    h = Histogram.from_counts(counts)
    d = agglomerate(init_clusters(h), h, ZERO_CM, m, otsu)
    occupied = set(np.flatnonzero(counts))
    assert len(d.merges) == len(d.initial) - m
    for k in range(len(d.initial), m - 1, -1):
        cs = d.clusters_at(k)
        assert all(a.hi < b.lo for a, b in zip(cs, cs[1:]))
        covered = set()
        for c in cs:
            covered |= set(range(c.lo, c.hi + 1))
        assert occupied <= covered
        assert abs(sum(c.mass for c in cs) - 1.0) <= 1e-9
    for rec in d.merges:
        assert rec.distance >= 0.0
        merged = cluster_from_range(rec.left.lo, rec.right.hi, h)
        weighted = (rec.left.mass * rec.left.mean + rec.right.mass * rec.right.mean) / (rec.left.mass + rec.right.mass)
        assert merged.mean == pytest.approx(weighted, abs=1e-9)
    t = cut(d, m).thresholds
    assert len(t) == m - 1 and all(a < b for a, b in zip(t, t[1:]))
    assert d.to_text() == agglomerate(init_clusters(h), h, ZERO_CM, m, otsu).to_text()


def test_multilevel_thresholds_cardinality(rng):
    for m in range(2, 9):
        h = random_hist(rng)
        t = multilevel_thresholds(h, ZERO_CM, m)
        assert len(t) == m - 1
