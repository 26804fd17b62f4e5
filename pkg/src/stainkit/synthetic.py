"""Seeded synthetic histology-like images.

Used by the benchmark harness, the test suite and the demo scripts. Every
generator is a pure function of its seed, so corpora are reproducible
without shipping any image data.
"""

from __future__ import annotations

import numpy as np

from .config import OD_BASE_TEN
from .imaging import od_to_rgb
from .separation import recompose

__all__ = [
    "random_stain_matrix",
    "two_stain_concentrations",
    "synth_image",
    "synth_corpus",
]


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def random_stain_matrix(rng: np.random.Generator) -> np.ndarray:
    """A plausible two-stain colour basis with a completed third column.

    Jitters a typical haematoxylin / eosin pair, keeps all entries
    non-negative, orders the columns by red component and completes the
    basis with the normalised cross product, matching the estimator's
    output conventions.
    """
    while True:
        s1 = _unit(np.abs(np.array([0.65, 0.70, 0.29]) + rng.normal(0.0, 0.08, 3)))
        s2 = _unit(np.abs(np.array([0.07, 0.99, 0.11]) + rng.normal(0.0, 0.05, 3)))
        cosang = float(np.clip(s1 @ s2, -1.0, 1.0))
        angle = np.degrees(np.arccos(cosang))
        if 20.0 <= angle <= 70.0:
            break
    if s2[0] > s1[0]:
        s1, s2 = s2, s1
    s3 = _unit(np.cross(s1, s2))
    if s3.sum() < 0:
        s3 = -s3
    return np.column_stack([s1, s2, s3])


def two_stain_concentrations(
    n: int, rng: np.random.Generator, pure_fraction: float = 0.1
) -> np.ndarray:
    """Concentration map with mixed pixels plus near-pure anchors.

    A fraction of pixels is almost purely one stain so the angular
    extremes of the OD cloud sit at the true stain directions; the rest
    are mixtures. The third channel stays zero.
    """
    conc = np.zeros((3, n))
    u = rng.uniform(0.0, 1.0, n)
    strength = rng.uniform(0.4, 1.2, n)
    n_pure = max(1, int(n * pure_fraction / 2))
    conc[0] = strength * u
    conc[1] = strength * (1.0 - u)
    # anchors: nearly pure first and second stain
    conc[0, :n_pure] = rng.uniform(0.6, 1.1, n_pure)
    conc[1, :n_pure] = rng.uniform(0.0, 0.01, n_pure)
    conc[0, n_pure : 2 * n_pure] = rng.uniform(0.0, 0.01, n_pure)
    conc[1, n_pure : 2 * n_pure] = rng.uniform(0.6, 1.1, n_pure)
    return conc


def synth_image(
    height: int,
    width: int,
    rng: np.random.Generator,
    colour: np.ndarray | None = None,
    background_fraction: float = 0.2,
    od_base: str = OD_BASE_TEN,
) -> tuple[np.ndarray, np.ndarray]:
    """Compose a synthetic stained image.

    Returns (image, colour matrix). A trailing block of pixels is left
    near-white to mimic background.
    """
    if colour is None:
        colour = random_stain_matrix(rng)
    n = height * width
    conc = two_stain_concentrations(n, rng)
    n_bg = int(n * background_fraction)
    if n_bg:
        conc[:, n - n_bg :] = rng.uniform(0.0, 0.01, (3, n_bg))
    od = recompose(colour, conc, (height, width))
    return od_to_rgb(od, base=od_base), colour


def synth_corpus(
    count: int, size: int, seed: int, background_fraction: float = 0.2
) -> list[np.ndarray]:
    """A reproducible list of synthetic images (one child seed per image)."""
    images = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        img, _ = synth_image(size, size, rng, background_fraction=background_fraction)
        images.append(img)
    return images
