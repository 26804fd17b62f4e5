"""Dataset-level stain statistics: fitting, sampling and serialisation.

A stain profile holds three multivariate Gaussians: one over flattened
colour matrices, one over per-channel concentration means, and one over
per-channel concentration standard deviations. Sampling the profile yields
a plausible stain appearance for augmentation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import PipelineConfig, STATS_ALL, OD_BASE_TEN, OD_BASE_E, STATS_TISSUE
from .errors import (
    DegenerateSampleError,
    EmptyDatasetError,
    ProfileSchemaError,
)
from .imaging import rgb_to_od, tissue_mask
from .separation import (
    COND_LIMIT,
    DET_LIMIT,
    compute_concentrations,
    concentration_stats,
    estimate_stain_matrix,
)

__all__ = [
    "COV_EPSILON",
    "MIN_SAMPLED_STD",
    "MAX_SAMPLE_ATTEMPTS",
    "SCHEMA_VERSION",
    "Decomposition",
    "ImageStainStats",
    "StainProfile",
    "SampledStain",
    "separate_image",
    "extract_image_stats",
    "fit_profile",
    "sample_colour_matrix",
    "sample_concentration_stats",
    "sample_stain",
    "save_profile",
    "load_profile",
]

# ridge added to every covariance so Cholesky factorisation always exists
COV_EPSILON = 1e-8
# floor for sampled per-channel stds; keeps the spread ratio finite
MIN_SAMPLED_STD = 1e-6
# consecutive non-invertible colour draws tolerated before giving up
MAX_SAMPLE_ATTEMPTS = 8

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ImageStainStats:
    """Stain statistics of a single image."""

    colour: np.ndarray  # (3, 3) stain matrix
    mean: np.ndarray  # (3,) concentration means
    std: np.ndarray  # (3,) concentration stds


@dataclass(frozen=True)
class SampledStain:
    """One draw from a stain profile."""

    colour: np.ndarray  # (3, 3), unit-norm columns
    mean: np.ndarray  # (3,)
    std: np.ndarray  # (3,), elementwise >= MIN_SAMPLED_STD


@dataclass(frozen=True)
class StainProfile:
    """Gaussian summary of stain appearance across a dataset."""

    mean_colour: np.ndarray  # (9,) row-major flattened colour matrices
    cov_colour: np.ndarray  # (9, 9)
    mean_mean: np.ndarray  # (3,)
    cov_mean: np.ndarray  # (3, 3)
    mean_std: np.ndarray  # (3,)
    cov_std: np.ndarray  # (3, 3)
    n_images: int
    od_base: str
    stats_domain: str


@dataclass(frozen=True)
class Decomposition:
    """A separated image: colour matrix, concentrations and their stats."""

    colour: np.ndarray  # (3, 3)
    conc: np.ndarray  # (3, N)
    mean: np.ndarray  # (3,)
    std: np.ndarray  # (3,)
    mask: np.ndarray  # (H, W) tissue mask
    shape: tuple[int, int]


def separate_image(img: np.ndarray, config: PipelineConfig | None = None) -> Decomposition:
    """Separate an image into its stain components under the given conventions.

    Runs OD conversion, tissue masking, stain matrix estimation,
    concentration separation and concentration statistics.
    """
    cfg = config or PipelineConfig()
    od = rgb_to_od(img, base=cfg.od_base)
    mask = tissue_mask(od, threshold=cfg.tissue_threshold)
    colour = estimate_stain_matrix(od, mask, angle_percentile=cfg.angle_percentile)
    conc = compute_concentrations(od, colour)
    if cfg.stats_domain == STATS_ALL:
        stats = concentration_stats(conc, np.ones(conc.shape[1], dtype=bool))
    else:
        stats = concentration_stats(conc, mask)
    return Decomposition(
        colour=colour,
        conc=conc,
        mean=stats.mean,
        std=stats.std,
        mask=mask,
        shape=(img.shape[0], img.shape[1]),
    )


def extract_image_stats(img: np.ndarray, config: PipelineConfig | None = None) -> ImageStainStats:
    """Separate one image and summarise its stain appearance."""
    d = separate_image(img, config)
    return ImageStainStats(colour=d.colour, mean=d.mean, std=d.std)


def _fit_gaussian(rows: np.ndarray, diag: bool) -> tuple[np.ndarray, np.ndarray]:
    n, d = rows.shape
    mean = rows.mean(axis=0)
    if n == 1:
        cov = np.zeros((d, d))
    elif diag:
        cov = np.diag(rows.var(axis=0, ddof=1))
    else:
        cov = np.cov(rows, rowvar=False, ddof=1)
        cov = (cov + cov.T) / 2.0
    return mean, cov + COV_EPSILON * np.eye(d)


def fit_profile(
    stats: Sequence[ImageStainStats], config: PipelineConfig | None = None
) -> StainProfile:
    """Fit the three Gaussians over a collection of per-image stain stats.

    Sample covariances use the n-1 divisor (a single image yields a zero
    covariance) and every covariance gets a small ridge so it is always
    Cholesky-factorable.

    Raises:
        EmptyDatasetError: no stats supplied.
    """
    cfg = config or PipelineConfig()
    if len(stats) == 0:
        raise EmptyDatasetError("cannot fit a profile on zero images")
    colours = np.stack([s.colour.reshape(9) for s in stats])
    means = np.stack([s.mean for s in stats])
    stds = np.stack([s.std for s in stats])
    mean_c, cov_c = _fit_gaussian(colours, cfg.diag_cov)
    mean_a, cov_a = _fit_gaussian(means, cfg.diag_cov)
    mean_d, cov_d = _fit_gaussian(stds, cfg.diag_cov)
    return StainProfile(
        mean_colour=mean_c,
        cov_colour=cov_c,
        mean_mean=mean_a,
        cov_mean=cov_a,
        mean_std=mean_d,
        cov_std=cov_d,
        n_images=len(stats),
        od_base=cfg.od_base,
        stats_domain=cfg.stats_domain,
    )


def _draw(mean: np.ndarray, cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    chol = np.linalg.cholesky(cov)
    return mean + chol @ rng.standard_normal(mean.shape[0])


def _colour_is_usable(colour: np.ndarray) -> bool:
    if not np.all(np.isfinite(colour)):
        return False
    if abs(np.linalg.det(colour)) <= DET_LIMIT:
        return False
    return np.linalg.cond(colour) < COND_LIMIT


def sample_colour_matrix(profile: StainProfile, rng: np.random.Generator) -> np.ndarray:
    """Draw a colour matrix from the profile.

    The 9-vector draw is reshaped row-major, columns are renormalised to
    unit length, and non-invertible draws are retried.

    Raises:
        DegenerateSampleError: MAX_SAMPLE_ATTEMPTS consecutive bad draws.
    """
    for _ in range(MAX_SAMPLE_ATTEMPTS):
        colour = _draw(profile.mean_colour, profile.cov_colour, rng).reshape(3, 3)
        norms = np.linalg.norm(colour, axis=0)
        if np.any(norms < 1e-12):
            continue
        colour = colour / norms
        if _colour_is_usable(colour):
            return colour
    raise DegenerateSampleError(
        f"no invertible colour matrix in {MAX_SAMPLE_ATTEMPTS} draws"
    )


def sample_concentration_stats(
    profile: StainProfile, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw target concentration means and stds (stds floored at 1e-6)."""
    mean = _draw(profile.mean_mean, profile.cov_mean, rng)
    std = _draw(profile.mean_std, profile.cov_std, rng)
    return mean, np.maximum(std, MIN_SAMPLED_STD)


def sample_stain(profile: StainProfile, rng: np.random.Generator) -> SampledStain:
    """Draw a full stain appearance: colour matrix, then means, then stds."""
    colour = sample_colour_matrix(profile, rng)
    mean, std = sample_concentration_stats(profile, rng)
    return SampledStain(colour=colour, mean=mean, std=std)


# ---------------------------------------------------------------------------
# serialisation

_FIELDS = (
    ("mean_c", 9),
    ("cov_c", 81),
    ("mean_a", 3),
    ("cov_a", 9),
    ("mean_d", 3),
    ("cov_d", 9),
)


def save_profile(profile: StainProfile, path: str | Path) -> None:
    """Write a profile as JSON.

    Field order and float formatting are fixed, and floats round-trip
    bit-exactly, so save -> load -> save is byte-identical.
    """
    doc = {
        "schema_version": SCHEMA_VERSION,
        "n_images": profile.n_images,
        "od_base": profile.od_base,
        "stats_domain": profile.stats_domain,
        "mean_c": profile.mean_colour.ravel().tolist(),
        "cov_c": profile.cov_colour.ravel().tolist(),
        "mean_a": profile.mean_mean.ravel().tolist(),
        "cov_a": profile.cov_mean.ravel().tolist(),
        "mean_d": profile.mean_std.ravel().tolist(),
        "cov_d": profile.cov_std.ravel().tolist(),
    }
    with open(path, "w", encoding="ascii") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_profile(path: str | Path) -> StainProfile:
    """Read a profile written by save_profile.

    Raises:
        ProfileSchemaError: missing fields, wrong lengths, bad enum values
            or an unsupported schema version.
    """
    try:
        with open(path, "r", encoding="ascii") as f:
            doc = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProfileSchemaError(f"{path}: not valid profile JSON") from exc
    if not isinstance(doc, dict):
        raise ProfileSchemaError(f"{path}: profile JSON must be an object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ProfileSchemaError(
            f"{path}: unsupported schema_version {doc.get('schema_version')!r}"
        )
    n_images = doc.get("n_images")
    if not isinstance(n_images, int) or n_images < 1:
        raise ProfileSchemaError(f"{path}: n_images must be a positive integer")
    od_base = doc.get("od_base")
    if od_base not in (OD_BASE_TEN, OD_BASE_E):
        raise ProfileSchemaError(f"{path}: bad od_base {od_base!r}")
    stats_domain = doc.get("stats_domain")
    if stats_domain not in (STATS_TISSUE, STATS_ALL):
        raise ProfileSchemaError(f"{path}: bad stats_domain {stats_domain!r}")

    arrays = {}
    for name, length in _FIELDS:
        value = doc.get(name)
        if not isinstance(value, list) or len(value) != length:
            raise ProfileSchemaError(f"{path}: field {name!r} must be a list of {length} numbers")
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
            raise ProfileSchemaError(f"{path}: field {name!r} holds non-numeric entries")
        arrays[name] = np.array(value, dtype=np.float64)

    return StainProfile(
        mean_colour=arrays["mean_c"],
        cov_colour=arrays["cov_c"].reshape(9, 9),
        mean_mean=arrays["mean_a"],
        cov_mean=arrays["cov_a"].reshape(3, 3),
        mean_std=arrays["mean_d"],
        cov_std=arrays["cov_d"].reshape(3, 3),
        n_images=n_images,
        od_base=od_base,
        stats_domain=stats_domain,
    )
