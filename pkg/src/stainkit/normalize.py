"""Reference-based stain normalisation baselines.

Four classical methods: opponent-space statistics transfer (Reinhard),
stain-matrix normalisation (Macenko), per-channel histogram matching, and
Fourier amplitude transfer. Reference statistics are precomputed once via
make_reference so batch runs never recompute them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .colorspace import lab_channel_stats, lab_to_float_rgb, rgb_to_lab
from .config import PipelineConfig
from .errors import ShapeMismatchError
from .imaging import od_to_float_rgb, quantize_rgb, rgb_to_od, tissue_mask
from .separation import compute_concentrations, estimate_stain_matrix, recompose

__all__ = [
    "ReinhardReference",
    "MacenkoReference",
    "HistogramReference",
    "FdaReference",
    "make_reference",
    "reinhard_normalize",
    "macenko_normalize",
    "histogram_match",
    "fda_transfer",
    "NORMALIZE_METHODS",
]

NORMALIZE_METHODS = ("reinhard", "macenko", "hm", "fda")


@dataclass(frozen=True)
class ReinhardReference:
    """Per-channel opponent-space mean and std of the reference image."""

    lab_mean: np.ndarray  # (3,)
    lab_std: np.ndarray  # (3,)


@dataclass(frozen=True)
class MacenkoReference:
    """Reference stain matrix and 99th-percentile concentrations."""

    colour: np.ndarray  # (3, 3)
    p99: np.ndarray  # (3,)


@dataclass(frozen=True)
class HistogramReference:
    """Per-channel cumulative histograms of the reference image."""

    cdfs: np.ndarray  # (3, 256), monotone, each ending at exactly 1.0


@dataclass(frozen=True)
class FdaReference:
    """Centred amplitude spectrum of the reference image."""

    amplitude: np.ndarray  # (H, W, 3)
    beta: float


def make_reference(
    img: np.ndarray,
    method: str,
    config: PipelineConfig | None = None,
    fda_beta: float = 0.01,
):
    """Precompute the per-method statistics of a reference image."""
    if method == "reinhard":
        mean, std = lab_channel_stats(rgb_to_lab(img))
        return ReinhardReference(lab_mean=mean, lab_std=std)
    if method == "macenko":
        cfg = config or PipelineConfig()
        od = rgb_to_od(img, base=cfg.od_base)
        mask = tissue_mask(od, threshold=cfg.tissue_threshold)
        colour = estimate_stain_matrix(od, mask, angle_percentile=cfg.angle_percentile)
        conc = compute_concentrations(od, colour)
        p99 = np.percentile(conc, 99.0, axis=1)
        return MacenkoReference(colour=colour, p99=p99)
    if method == "hm":
        return HistogramReference(cdfs=_channel_cdfs(img))
    if method == "fda":
        spectrum = np.fft.fftshift(np.fft.fft2(img.astype(np.float64), axes=(0, 1)), axes=(0, 1))
        return FdaReference(amplitude=np.abs(spectrum), beta=float(fda_beta))
    raise ValueError(f"unknown normalisation method {method!r}")


def reinhard_normalize(
    img: np.ndarray,
    ref: ReinhardReference,
    float_output: bool = False,
) -> np.ndarray:
    """Shift and scale opponent-space channels onto the reference statistics."""
    lab = rgb_to_lab(img)
    mean, std = lab_channel_stats(lab)
    scale = ref.lab_std / np.maximum(std, 1e-8)
    out_lab = (lab - mean) * scale + ref.lab_mean
    out = lab_to_float_rgb(out_lab)
    return out if float_output else quantize_rgb(out)


def macenko_normalize(
    img: np.ndarray,
    ref: MacenkoReference,
    config: PipelineConfig | None = None,
    float_output: bool = False,
) -> np.ndarray:
    """Project onto the image's own stains, rescale, and recompose with the
    reference stain matrix.

    Each concentration channel is scaled by the ratio of the reference to
    the source 99th percentile.
    """
    cfg = config or PipelineConfig()
    od = rgb_to_od(img, base=cfg.od_base)
    mask = tissue_mask(od, threshold=cfg.tissue_threshold)
    colour = estimate_stain_matrix(od, mask, angle_percentile=cfg.angle_percentile)
    conc = compute_concentrations(od, colour)
    p99 = np.percentile(conc, 99.0, axis=1)
    scale = ref.p99 / np.maximum(p99, 1e-8)
    conc = conc * scale[:, None]
    out_od = recompose(ref.colour, conc, (img.shape[0], img.shape[1]))
    out = od_to_float_rgb(out_od, base=cfg.od_base)
    return out if float_output else quantize_rgb(out)


def _channel_cdfs(img: np.ndarray) -> np.ndarray:
    """Empirical per-channel CDFs over the 256 grey levels.

    Counts are accumulated in integer arithmetic before the final divide,
    so each CDF ends at exactly 1.0.
    """
    h, w, _ = img.shape
    total = h * w
    cdfs = np.empty((3, 256))
    for c in range(3):
        counts = np.bincount(img[:, :, c].ravel(), minlength=256)
        cdfs[c] = np.cumsum(counts) / total
    return cdfs


def histogram_match(img: np.ndarray, ref: HistogramReference) -> np.ndarray:
    """Per-channel histogram matching against reference CDFs.

    Each grey level v maps to the smallest reference level whose CDF
    reaches the source CDF at v; output values are therefore a subset of
    the levels occupied in the reference. Matching an image against its
    own histogram is the exact identity.
    """
    src = _channel_cdfs(img)
    out = np.empty_like(img)
    for c in range(3):
        lut = np.searchsorted(ref.cdfs[c], src[c], side="left")
        # CDFs end at exactly 1.0, so every target is reachable
        lut = np.minimum(lut, 255).astype(np.uint8)
        out[:, :, c] = lut[img[:, :, c]]
    return out


def fda_transfer(
    img: np.ndarray,
    ref: FdaReference,
    beta: float | None = None,
    float_output: bool = False,
) -> np.ndarray:
    """Swap low-frequency amplitudes with the reference, keeping phase.

    Per channel the centred 2-D spectrum's amplitude is replaced by the
    reference amplitude inside a centred square window of half-width
    floor(beta * min(H, W)); beta = 0 replaces nothing.
    """
    b = ref.beta if beta is None else float(beta)
    h, w, _ = img.shape
    half = int(np.floor(b * min(h, w)))

    spectrum = np.fft.fftshift(np.fft.fft2(img.astype(np.float64), axes=(0, 1)), axes=(0, 1))
    if half > 0:
        amp = np.abs(spectrum)
        phase = np.angle(spectrum)
        ref_amp = _fit_amplitude(ref.amplitude, h, w)
        ch, cw = h // 2, w // 2
        rows = slice(max(0, ch - half), min(h, ch + half))
        cols = slice(max(0, cw - half), min(w, cw + half))
        amp[rows, cols] = ref_amp[rows, cols]
        spectrum = amp * np.exp(1j * phase)
    out = np.fft.ifft2(np.fft.ifftshift(spectrum, axes=(0, 1)), axes=(0, 1)).real
    return out if float_output else quantize_rgb(out)


def _fit_amplitude(amp: np.ndarray, h: int, w: int) -> np.ndarray:
    """Centre-crop or zero-pad a centred amplitude spectrum to (h, w)."""
    if amp.ndim != 3 or amp.shape[2] != 3:
        raise ShapeMismatchError("reference amplitude must be (H, W, 3)")
    ah, aw = amp.shape[:2]
    if (ah, aw) == (h, w):
        return amp
    out = np.zeros((h, w, 3))
    rh, rw = min(ah, h), min(aw, w)
    src_r = (ah - rh) // 2
    src_c = (aw - rw) // 2
    dst_r = (h - rh) // 2
    dst_c = (w - rw) // 2
    out[dst_r : dst_r + rh, dst_c : dst_c + rw] = amp[src_r : src_r + rh, src_c : src_c + rw]
    return out
