"""Synthetic mammogram-like phantoms with known mass locations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .evaluation import GroundTruthCircle
from .imaging import GrayImage

__all__ = ["Phantom", "fractal_noise", "make_phantom", "make_phantoms"]

SIZE = 512


@dataclass(frozen=True)
class Phantom:
    image_id: str
    image: GrayImage
    truths: List[GroundTruthCircle]
    breast: np.ndarray

    @property
    def normal(self) -> bool:
        return all(t.normal for t in self.truths)


def fractal_noise(shape, rng: np.random.Generator, beta: float = 3.0) -> np.ndarray:
    """Zero-mean, unit-variance noise with a ``1/f**beta`` power spectrum."""
    h, w = shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    f = np.hypot(fy, fx)
    f[0, 0] = 1.0
    spectrum = np.fft.rfft2(rng.standard_normal(shape)) * f ** (-beta / 2.0)
    spectrum[0, 0] = 0.0
    out = np.fft.irfft2(spectrum, s=shape)
    return out / out.std()


def make_phantom(image_id: str, rng: np.random.Generator, abnormal: bool, size: int = SIZE) -> Phantom:
    """One phantom: textured half-disc breast on black, plus 1-2 masses if ``abnormal``.

    Masses are isotropic Gaussian bumps (sigma 15-40 px, peak 30-80 gray
    levels) centred well inside the breast. Each truth circle has radius
    ``2 * sigma``.
    """
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    center_row = size / 2 + rng.uniform(-20, 20)
    radius = rng.uniform(0.80, 0.92) * size / 2
    dist = np.hypot(rows - center_row, cols) / radius
    breast = dist < 1.0

    base = rng.uniform(95, 125)
    # tissue thins toward the skin line
    falloff = np.sqrt(np.clip(1.0 - dist ** 2, 0.0, 1.0)) ** 0.3
    tissue = base * falloff + rng.uniform(9, 13) * fractal_noise((size, size), rng)

    truths = []
    if abnormal:
        centres = []
        for _ in range(int(rng.integers(1, 3))):
            sigma = rng.uniform(15, 40)
            for _attempt in range(100):
                r = rng.uniform(0.1, 0.65) * radius
                theta = rng.uniform(-np.pi / 2 * 0.8, np.pi / 2 * 0.8)
                cy, cx = center_row + r * np.sin(theta), r * np.cos(theta)
                if cx > 2 * sigma and all(np.hypot(cy - a, cx - b) > 2 * (sigma + s) for a, b, s in centres):
                    break
            centres.append((cy, cx, sigma))
            peak = rng.uniform(30, 80)
            tissue += peak * np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2 * sigma ** 2))
            truths.append(GroundTruthCircle(image_id, x=float(round(cx)), y=float(round(cy)),
                                            radius=float(np.ceil(2 * sigma)), severity="B",
                                            tissue="F", abnormality="CIRC"))
    else:
        truths.append(GroundTruthCircle(image_id, tissue="F"))
    data = np.where(breast, np.clip(np.rint(tissue), 1, 255), 0)
    return Phantom(image_id, GrayImage(data, 8), truths, breast)


def make_phantoms(count: int, seed: int = 0, size: int = SIZE) -> List[Phantom]:
    """``count`` phantoms; even indices are abnormal, odd ones normal."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return [
        make_phantom(f"ph{i:03d}", np.random.default_rng([seed, i]), abnormal=(i % 2 == 0), size=size)
        for i in range(count)
    ]
