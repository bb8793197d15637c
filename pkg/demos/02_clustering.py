"""How the gray-level agglomeration behaves on a simple bimodal image.

Usage: python demos/02_clustering.py

Prints the last merges of the dendrogram and compares the m=2 threshold
against an exhaustive Otsu search under both mass weightings.
"""
import numpy as np

from mammoseg.hcluster import agglomerate, cut, init_clusters
from mammoseg.imaging import GrayImage, histogram, otsu_threshold
from mammoseg.texture import build_glcm

rng = np.random.default_rng(3)
# two tissue classes, dark (60) and bright (190), arranged as a bright disc
rows, cols = np.mgrid[0:96, 0:96]
inside = (rows - 48) ** 2 + (cols - 48) ** 2 < 30 ** 2
values = np.where(inside, rng.normal(190, 10, inside.shape), rng.normal(60, 10, inside.shape))
img = GrayImage(np.clip(np.rint(values), 0, 255).astype(np.uint8), 8)

h = histogram(img)
cm = build_glcm(img)
print(f"{len(init_clusters(h))} occupied levels, bright fraction {inside.mean():.2f}")
print(f"exhaustive Otsu threshold: {otsu_threshold(h.counts)}")

for label, otsu_weighting in (("(Pa-Pb)^2 weighting", False), ("Pa*Pb weighting", True)):
    dend = agglomerate(init_clusters(h), h, cm, 2, otsu_weighting)
    print(f"\n{label}: last five merges (step left right distance)")
    for line in dend.to_text().splitlines()[-5:]:
        print("  " + line)
    for m in (2, 3, 5):
        print(f"  m={m}: thresholds {cut(dend, m).thresholds}")


valley = (int(values[~inside].max()), int(values[inside].min()))
print(f"\ndark class ends near {valley[0]}, bright class starts near {valley[1]}.")
print("(Pa-Pb)^2 sends equal-mass neighbours to distance 0, so the last merge")
print("need not be the dark/bright split; Pa*Pb keeps the two modes apart.")
