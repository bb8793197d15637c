"""Agglomerative clustering of gray levels into multilevel thresholds.

Every occupied gray level starts as its own cluster. Adjacent clusters are
merged greedily, always taking the pair with the smallest dissimilarity

    (1 - CP) * W(P_a, P_b) * (mean_a - mean_b)**2 / var_ab

where ``CP`` is the cluster co-occurrence from the GLCM, ``W`` is the mass
weighting (``(P_a - P_b)**2`` by default, ``P_a * P_b`` with
``otsu_weighting``), and ``var_ab`` is the histogram-weighted spread of the
union around the mass-weighted mean of the two clusters. Merging stops when
``m`` clusters remain; their upper bounds give ``m - 1`` thresholds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .errors import EmptyHistogram, InvalidCut, NotAdjacent, TooFewLevels
from .imaging import Histogram
from .texture import CooccurrenceMatrix, cluster_cooccurrence

__all__ = [
    "ClusterStats", "MergeRecord", "Dendrogram", "ThresholdSet",
    "init_clusters", "cluster_from_range", "merge_distance", "agglomerate",
    "cut", "multilevel_thresholds",
]

VARIANCE_FLOOR = 1e-12
# distances this close (relative) count as ties, so rounding cannot override the tie rule
TIE_TOLERANCE = 1e-12

_LEVELS = np.arange(256, dtype=np.float64)


@dataclass(frozen=True)
class ClusterStats:
    """Contiguous gray-level band ``[lo, hi]`` with its mass and mean level."""
    lo: int
    hi: int
    mass: float
    mean: float

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class MergeRecord:
    step: int
    position: int
    left: ClusterStats
    right: ClusterStats
    distance: float


@dataclass
class Dendrogram:
    """Merge history over an ordered list of initial clusters."""
    initial: List[ClusterStats]
    merges: List[MergeRecord] = field(default_factory=list)
    histogram: Histogram = None

    @property
    def final(self) -> List[ClusterStats]:
        return self.clusters_at(len(self.initial) - len(self.merges))

    def clusters_at(self, m: int) -> List[ClusterStats]:
        """Replay merges until ``m`` clusters remain."""
        n0 = len(self.initial)
        if not n0 - len(self.merges) <= m <= n0:
            raise InvalidCut(f"dendrogram holds between {n0 - len(self.merges)} and {n0} clusters, not {m}")
        clusters = list(self.initial)
        for rec in self.merges[:n0 - m]:
            a, b = clusters[rec.position], clusters[rec.position + 1]
            clusters[rec.position:rec.position + 2] = [_merged(a, b, self.histogram)]
        return clusters

    def to_text(self) -> str:
        """One line per merge: step, left band, right band, distance."""
        lines = [
            f"{r.step} {r.left.lo}..{r.left.hi} {r.right.lo}..{r.right.hi} {r.distance!r}"
            for r in self.merges
        ]
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class ThresholdSet:
    thresholds: tuple

    def __post_init__(self):
        t = tuple(int(v) for v in self.thresholds)
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError(f"thresholds must be strictly increasing: {t}")
        object.__setattr__(self, "thresholds", t)

    def __len__(self):
        return len(self.thresholds)

    def __iter__(self):
        return iter(self.thresholds)


def cluster_from_range(lo: int, hi: int, h: Histogram) -> ClusterStats:
    """Statistics of band ``[lo, hi]`` computed directly from the histogram."""
    p = h.pdf[lo:hi + 1]
    mass = float(p.sum())
    mean = float((_LEVELS[lo:hi + 1] * p).sum() / mass) if mass > 0 else 0.5 * (lo + hi)
    return ClusterStats(lo, hi, mass, mean)


def _merged(a: ClusterStats, b: ClusterStats, h: Histogram) -> ClusterStats:
    return cluster_from_range(a.lo, b.hi, h)


def init_clusters(h: Histogram) -> List[ClusterStats]:
    """One singleton cluster per occupied gray level, ascending."""
    occupied = np.flatnonzero(h.counts)
    if occupied.size == 0:
        raise EmptyHistogram("histogram has no occupied level")
    return [ClusterStats(int(l), int(l), float(h.pdf[l]), float(l)) for l in occupied]


def merge_distance(a: ClusterStats, b: ClusterStats, h: Histogram, cm: CooccurrenceMatrix,
                   otsu_weighting: bool = False) -> float:
    """Dissimilarity of two range-adjacent clusters (``a`` below ``b``)."""
    if not a.hi < b.lo or h.counts[a.hi + 1:b.lo].any():
        raise NotAdjacent(f"clusters [{a.lo},{a.hi}] and [{b.lo},{b.hi}] are not adjacent")
    cp = cluster_cooccurrence(cm, (a.lo, a.hi), (b.lo, b.hi))
    cp = min(max(cp, 0.0), 1.0)
    pooled = (a.mass * a.mean + b.mass * b.mean) / (a.mass + b.mass)
    lv = _LEVELS[a.lo:b.hi + 1]
    variance = float((((lv - pooled) ** 2) * h.pdf[a.lo:b.hi + 1]).sum())
    if variance < VARIANCE_FLOOR:
        return 0.0
    weight = a.mass * b.mass if otsu_weighting else (a.mass - b.mass) ** 2
    return (1.0 - cp) * weight * (a.mean - b.mean) ** 2 / variance


def agglomerate(clusters: Sequence[ClusterStats], h: Histogram, cm: CooccurrenceMatrix, m: int,
                otsu_weighting: bool = False) -> Dendrogram:
    """Merge adjacent clusters, cheapest first, until ``m`` remain.

    Ties (equal up to a relative ``TIE_TOLERANCE``) go to the pair with the
    lower gray levels, so the result is fully determined by the inputs.
    """
    if m < 2:
        raise ValueError("m must be at least 2")
    clusters = list(clusters)
    if len(clusters) < m:
        raise TooFewLevels(f"{len(clusters)} occupied levels cannot form {m} clusters")
    dend = Dendrogram(initial=list(clusters), histogram=h)

    def dist(i):
        return merge_distance(clusters[i], clusters[i + 1], h, cm, otsu_weighting)

    # gaps[i] is the distance between clusters i and i + 1
    gaps = [dist(i) for i in range(len(clusters) - 1)]
    step = 0
    while len(clusters) > m:
        best = min(gaps)
        i = next(k for k, g in enumerate(gaps) if g <= best + TIE_TOLERANCE * abs(best))
        a, b = clusters[i], clusters[i + 1]
        step += 1
        dend.merges.append(MergeRecord(step, i, a, b, gaps[i]))
        clusters[i:i + 2] = [_merged(a, b, h)]
        del gaps[i]
        if i > 0:
            gaps[i - 1] = dist(i - 1)
        if i < len(clusters) - 1:
            gaps[i] = dist(i)
    return dend


def cut(d: Dendrogram, m: int) -> ThresholdSet:
    """Thresholds for an ``m``-cluster cut: upper bounds of all but the top cluster."""
    if m < 2:
        raise InvalidCut("a cut needs at least 2 clusters")
    clusters = d.clusters_at(m)
    return ThresholdSet(tuple(c.hi for c in clusters[:-1]))


def multilevel_thresholds(h: Histogram, cm: CooccurrenceMatrix, m: int,
                          otsu_weighting: bool = False) -> ThresholdSet:
    """Cluster ``h`` down to ``m`` bands and return the ``m - 1`` thresholds."""
    d = agglomerate(init_clusters(h), h, cm, m, otsu_weighting)
    return cut(d, m)
