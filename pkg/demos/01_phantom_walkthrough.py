"""Walk one synthetic mammogram through every detection stage.

Usage: python demos/01_phantom_walkthrough.py [out_dir]

Writes the input, the enhanced working image, each threshold layer and the
final overlay as PNGs so the stages can be inspected side by side.
"""
import os
import sys

import numpy as np

from mammoseg.evaluation import match_detection
from mammoseg.hcluster import agglomerate, cut, init_clusters
from mammoseg.imaging import GrayImage, breast_mask, histogram, save_image, standardize
from mammoseg.phantoms import make_phantoms
from mammoseg.pipeline import PipelineConfig, detect_image, overlay
from mammoseg.preprocess import clahe, gaussian_pyramid
from mammoseg.segment import accumulate_prestige, label_components, threshold_layers
from mammoseg.texture import build_glcm

out = sys.argv[1] if len(sys.argv) > 1 else "demo_output/walkthrough"
os.makedirs(out, exist_ok=True)
cfg = PipelineConfig()

phantom = make_phantoms(3, seed=7)[2]
print(f"phantom {phantom.image_id}: {phantom.image.shape}, planted masses:")
for t in phantom.truths:
    print(f"  centre (x={t.x:.0f}, y={t.y:.0f}) radius {t.radius:.0f}")
save_image(phantom.image, os.path.join(out, "0_input.png"))

# 1. standardize and find the breast
std = standardize(phantom.image)
breast = breast_mask(std)
print(f"breast covers {breast.mean():.1%} of the frame")

# 2. smooth and subsample, then equalize locally
s = 2 ** cfg.pyramid_depth
work = gaussian_pyramid(std, cfg.pyramid_depth + 1)[-1].image
enhanced = clahe(work, cfg.clahe_clip, cfg.clahe_tiles)
work_mask = breast[::s, ::s]
save_image(enhanced, os.path.join(out, "1_enhanced.png"))
print(f"working resolution {enhanced.shape} (1/{s} scale)")

# 3. cluster gray levels with histogram + co-occurrence statistics
h = histogram(enhanced, work_mask)
cm = build_glcm(enhanced, work_mask)
clusters = init_clusters(h)
dend = agglomerate(clusters, h, cm, cfg.level_parameter)
thresholds = cut(dend, cfg.level_parameter).thresholds
print(f"{len(clusters)} occupied gray levels merged down to {cfg.level_parameter} bands; "
      f"thresholds {thresholds}")

# 4. nested density layers and prestige voting
layers = threshold_layers(enhanced, thresholds, work_mask)
for k, layer in enumerate(layers, start=1):
    save_image(GrayImage(layer.astype(np.uint8) * 255, 8), os.path.join(out, f"2_layer{k}.png"))
per_level = [label_components(layer, k + 1) for k, layer in enumerate(layers)]
for k, regions in enumerate(per_level, start=1):
    print(f"  layer {k}: {int(layers[k - 1].sum())} px in {len(regions)} component(s)")
kept = accumulate_prestige(per_level[::-1], cfg.coverage, cfg.min_prestige)
print(f"{len(kept)} region(s) reach prestige >= {cfg.min_prestige}")

# 5. the same thing in one call, plus features
result = detect_image(phantom.image, cfg, image_id=phantom.image_id)
print(f"detect_image: {len(result.detections)} candidate(s)")
for d in result.detections:
    r0, c0, r1, c1 = d.roi.bbox
    cy, cx = d.roi.centroid
    f = d.features
    desc = "rejected" if d.rejected else (
        f"contrast {f.region_contrast:5.1f}  gradient {f.mean_gradient:4.2f}  entropy {f.entropy:4.2f}"
        f"  std {f.std_dev:5.2f}  compactness {f.compactness:4.2f}")
    hit = "hit " if any(match_detection(d.roi, t) for t in phantom.truths) else "    "
    print(f"  roi {d.roi_id}: {hit}centroid ({cy:.0f}, {cx:.0f}) area {d.roi.area:6d}  {desc}")
save_image(overlay(result), os.path.join(out, "3_overlay.png"))
print(f"images written to {out}/")
