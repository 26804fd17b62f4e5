"""Stain augmentation: profile-sampled recolouring, paired variants,
stain jitter, and channel-statistics augmentation in opponent colour space.

Every augmenter comes in two flavours: the public uint8 path and a float
path (``float_output=True``) that skips quantisation so tests can verify
the linear algebra exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .colorspace import lab_channel_stats, lab_to_float_rgb, rgb_to_lab
from .config import (
    EQ5_PRINTED,
    JITTER_FIXED,
    PipelineConfig,
)
from .errors import ConventionMismatchError, EmptyDatasetError, ProfileSchemaError
from .imaging import od_to_float_rgb, quantize_rgb, rgb_to_od, tissue_mask
from .profile import (
    COV_EPSILON,
    MIN_SAMPLED_STD,
    SCHEMA_VERSION,
    Decomposition,
    SampledStain,
    StainProfile,
    sample_colour_matrix,
    sample_concentration_stats,
    sample_stain,
    separate_image,
)
from .separation import (
    compute_concentrations,
    estimate_stain_matrix,
    recompose,
)

__all__ = [
    "FIXED_HE_MATRIX",
    "JitterParams",
    "LabProfile",
    "PairSample",
    "transfer_concentrations",
    "apply_sampled_stain",
    "sca_augment",
    "scl_pair",
    "scl_pair_sample",
    "draw_jitter_factors",
    "stain_jitter",
    "fit_lab_profile",
    "randstainna_augment",
    "save_lab_profile",
    "load_lab_profile",
]


def _fixed_he_matrix() -> np.ndarray:
    # published haematoxylin / eosin OD vectors; third column completes the basis
    h = np.array([0.65, 0.70, 0.29])
    e = np.array([0.07, 0.99, 0.11])
    h = h / np.linalg.norm(h)
    e = e / np.linalg.norm(e)
    r = np.cross(h, e)
    r = r / np.linalg.norm(r)
    if r.sum() < 0:
        r = -r
    return np.column_stack([h, e, r])


FIXED_HE_MATRIX = _fixed_he_matrix()


def transfer_concentrations(
    conc: np.ndarray,
    source_mean: np.ndarray,
    source_std: np.ndarray,
    target_mean: np.ndarray,
    target_std: np.ndarray,
    direction: str = EQ5_PRINTED,
) -> np.ndarray:
    """Channel-wise linear transfer of concentration statistics.

    The default ("printed") form scales each channel by source_std over
    target_std, centring on the target mean and re-centring on the source
    mean; "conventional" applies the inverse ratio the other way round.
    Pinning the target statistics to the source statistics makes either
    direction the identity. Results are clamped to be non-negative.
    """
    if direction == EQ5_PRINTED:
        ratio = source_std / np.maximum(target_std, MIN_SAMPLED_STD)
        shift = source_mean - ratio * target_mean
    else:
        ratio = target_std / np.maximum(source_std, MIN_SAMPLED_STD)
        shift = target_mean - ratio * source_mean
    # single temporary plus in-place passes; this runs once per augmented image
    out = conc * ratio[:, None]
    out += shift[:, None]
    np.maximum(out, 0.0, out=out)
    return out


def apply_sampled_stain(
    decomp: Decomposition,
    sampled: SampledStain,
    config: PipelineConfig | None = None,
    float_output: bool = False,
) -> np.ndarray:
    """Recolour a separated image with a sampled stain appearance."""
    cfg = config or PipelineConfig()
    conc = transfer_concentrations(
        decomp.conc,
        decomp.mean,
        decomp.std,
        sampled.mean,
        sampled.std,
        direction=cfg.transform_direction,
    )
    od = recompose(sampled.colour, conc, decomp.shape, clamp=False)
    out = od_to_float_rgb(od, base=cfg.od_base)
    return out if float_output else quantize_rgb(out)


def _check_conventions(profile: StainProfile, cfg: PipelineConfig) -> None:
    if profile.od_base != cfg.od_base or profile.stats_domain != cfg.stats_domain:
        raise ConventionMismatchError(
            f"profile recorded od_base={profile.od_base!r}, "
            f"stats_domain={profile.stats_domain!r}; run requests "
            f"od_base={cfg.od_base!r}, stats_domain={cfg.stats_domain!r}"
        )


def sca_augment(
    img: np.ndarray,
    profile: StainProfile,
    rng: np.random.Generator,
    config: PipelineConfig | None = None,
    float_output: bool = False,
) -> np.ndarray:
    """Stain-consistency augmentation.

    Separates the image, draws one stain appearance from the profile and
    recolours the image with it.

    Raises:
        ConventionMismatchError: profile conventions differ from the run's.
    """
    cfg = config or PipelineConfig()
    _check_conventions(profile, cfg)
    decomp = separate_image(img, cfg)
    sampled = sample_stain(profile, rng)
    return apply_sampled_stain(decomp, sampled, cfg, float_output=float_output)


@dataclass(frozen=True)
class PairSample:
    """A consistency pair plus the internals needed to verify it."""

    float_a: np.ndarray  # (H, W, 3) unquantised RGB
    float_b: np.ndarray
    colour_a: np.ndarray  # (3, 3)
    colour_b: np.ndarray
    conc: np.ndarray  # (3, N) shared transformed concentrations


def scl_pair_sample(
    img: np.ndarray,
    profile: StainProfile,
    rng: np.random.Generator,
    config: PipelineConfig | None = None,
) -> PairSample:
    """Draw a consistency pair, keeping the shared concentrations around.

    Draws target concentration statistics once, then two colour matrices
    (in that order); both members carry identical concentrations and
    differ only in colour.
    """
    cfg = config or PipelineConfig()
    _check_conventions(profile, cfg)
    decomp = separate_image(img, cfg)
    mean, std = sample_concentration_stats(profile, rng)
    colour_a = sample_colour_matrix(profile, rng)
    colour_b = sample_colour_matrix(profile, rng)
    conc = transfer_concentrations(
        decomp.conc, decomp.mean, decomp.std, mean, std,
        direction=cfg.transform_direction,
    )
    floats = [
        od_to_float_rgb(recompose(colour, conc, decomp.shape, clamp=False), base=cfg.od_base)
        for colour in (colour_a, colour_b)
    ]
    return PairSample(
        float_a=floats[0],
        float_b=floats[1],
        colour_a=colour_a,
        colour_b=colour_b,
        conc=conc,
    )


def scl_pair(
    img: np.ndarray,
    profile: StainProfile,
    rng: np.random.Generator,
    config: PipelineConfig | None = None,
    float_output: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Augmentation pair sharing one concentration transform.

    Both members carry identical transformed concentrations and differ
    only in their sampled colour matrix. Suited to consistency training.
    """
    sample = scl_pair_sample(img, profile, rng, config)
    if float_output:
        return sample.float_a, sample.float_b
    return quantize_rgb(sample.float_a), quantize_rgb(sample.float_b)


# ---------------------------------------------------------------------------
# stain jitter


@dataclass(frozen=True)
class JitterParams:
    """Uniform jitter ranges: scale in [1-alpha, 1+alpha], shift in [-beta, beta]."""

    alpha: float = 0.25
    beta: float = 0.05

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("jitter ranges must be non-negative")


def draw_jitter_factors(
    params: JitterParams, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw per-channel scales then shifts (two blocks of three uniforms)."""
    scales = rng.uniform(1.0 - params.alpha, 1.0 + params.alpha, size=3)
    shifts = rng.uniform(-params.beta, params.beta, size=3)
    return scales, shifts


def stain_jitter(
    img: np.ndarray,
    params: JitterParams,
    rng: np.random.Generator,
    config: PipelineConfig | None = None,
    float_output: bool = False,
) -> np.ndarray:
    """Randomly scale and shift each concentration channel.

    The colour matrix is left unchanged: either the image's own estimate
    (default) or the fixed published matrix, per config.
    """
    cfg = config or PipelineConfig()
    od = rgb_to_od(img, base=cfg.od_base)
    if cfg.jitter_matrix == JITTER_FIXED:
        colour = FIXED_HE_MATRIX
    else:
        mask = tissue_mask(od, threshold=cfg.tissue_threshold)
        colour = estimate_stain_matrix(od, mask, angle_percentile=cfg.angle_percentile)
    conc = compute_concentrations(od, colour)
    scales, shifts = draw_jitter_factors(params, rng)
    conc = scales[:, None] * conc + shifts[:, None]
    np.maximum(conc, 0.0, out=conc)
    out_od = recompose(colour, conc, (img.shape[0], img.shape[1]), clamp=False)
    out = od_to_float_rgb(out_od, base=cfg.od_base)
    return out if float_output else quantize_rgb(out)


# ---------------------------------------------------------------------------
# channel-statistics augmentation in opponent colour space


@dataclass(frozen=True)
class LabProfile:
    """Scalar Gaussians over per-image opponent-space channel statistics.

    For each of the three channels there is a Gaussian over image-level
    means and a Gaussian over image-level standard deviations.
    """

    mean_of_means: np.ndarray  # (3,)
    std_of_means: np.ndarray  # (3,)
    mean_of_stds: np.ndarray  # (3,)
    std_of_stds: np.ndarray  # (3,)
    n_images: int


def fit_lab_profile(images: Sequence[np.ndarray]) -> LabProfile:
    """Fit the opponent-space statistics profile over a set of images.

    Variances use the n-1 divisor (zero for a single image) plus the same
    small ridge as the stain profile.

    Raises:
        EmptyDatasetError: no images supplied.
    """
    if len(images) == 0:
        raise EmptyDatasetError("cannot fit a profile on zero images")
    means = []
    stds = []
    for img in images:
        m, s = lab_channel_stats(rgb_to_lab(img))
        means.append(m)
        stds.append(s)
    means_arr = np.stack(means)
    stds_arr = np.stack(stds)
    n = len(images)

    def _scalar_fit(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mu = rows.mean(axis=0)
        var = rows.var(axis=0, ddof=1) if n > 1 else np.zeros(3)
        return mu, np.sqrt(var + COV_EPSILON)

    mom, som = _scalar_fit(means_arr)
    mos, sos = _scalar_fit(stds_arr)
    return LabProfile(
        mean_of_means=mom,
        std_of_means=som,
        mean_of_stds=mos,
        std_of_stds=sos,
        n_images=n,
    )


def randstainna_augment(
    img: np.ndarray,
    profile: LabProfile,
    rng: np.random.Generator,
    float_output: bool = False,
) -> np.ndarray:
    """Re-standardise opponent-space channels to sampled target statistics.

    Draws three target means then three target stds (stds clamped at zero),
    shifts and scales each channel from the image's own statistics to the
    targets, and converts back to RGB.
    """
    lab = rgb_to_lab(img)
    mean, std = lab_channel_stats(lab)
    target_mean = rng.normal(profile.mean_of_means, profile.std_of_means)
    target_std = np.maximum(rng.normal(profile.mean_of_stds, profile.std_of_stds), 0.0)
    scale = target_std / np.maximum(std, 1e-8)
    out_lab = (lab - mean) * scale + target_mean
    out = lab_to_float_rgb(out_lab)
    return out if float_output else quantize_rgb(out)


# ---------------------------------------------------------------------------
# opponent-space profile serialisation

_LAB_FIELDS = ("mean_of_means", "std_of_means", "mean_of_stds", "std_of_stds")


def save_lab_profile(profile: LabProfile, path: str | Path) -> None:
    """Write an opponent-space profile as JSON (bit-exact round trip)."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "lab",
        "n_images": profile.n_images,
        "mean_of_means": profile.mean_of_means.tolist(),
        "std_of_means": profile.std_of_means.tolist(),
        "mean_of_stds": profile.mean_of_stds.tolist(),
        "std_of_stds": profile.std_of_stds.tolist(),
    }
    with open(path, "w", encoding="ascii") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_lab_profile(path: str | Path) -> LabProfile:
    """Read a profile written by save_lab_profile."""
    try:
        with open(path, "r", encoding="ascii") as f:
            doc = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProfileSchemaError(f"{path}: not valid profile JSON") from exc
    if not isinstance(doc, dict) or doc.get("kind") != "lab":
        raise ProfileSchemaError(f"{path}: not an opponent-space profile")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ProfileSchemaError(
            f"{path}: unsupported schema_version {doc.get('schema_version')!r}"
        )
    n_images = doc.get("n_images")
    if not isinstance(n_images, int) or n_images < 1:
        raise ProfileSchemaError(f"{path}: n_images must be a positive integer")
    arrays = {}
    for name in _LAB_FIELDS:
        value = doc.get(name)
        if not isinstance(value, list) or len(value) != 3:
            raise ProfileSchemaError(f"{path}: field {name!r} must be a list of 3 numbers")
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
            raise ProfileSchemaError(f"{path}: field {name!r} holds non-numeric entries")
        arrays[name] = np.array(value, dtype=np.float64)
    return LabProfile(
        mean_of_means=arrays["mean_of_means"],
        std_of_means=arrays["std_of_means"],
        mean_of_stds=arrays["mean_of_stds"],
        std_of_stds=arrays["std_of_stds"],
        n_images=n_images,
    )
