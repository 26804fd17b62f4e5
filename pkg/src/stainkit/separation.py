"""Stain matrix estimation and concentration separation.

The estimator follows the singular-plane / extreme-angle construction:
project tissue OD tuples onto their top-2 singular plane, take robust
percentile directions of the angle distribution as the two stain vectors,
and complete the basis with their cross product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateStainsError,
    EmptyMaskError,
    InsufficientTissueError,
    ShapeMismatchError,
    SingularMatrixError,
)

__all__ = [
    "MIN_TISSUE_PIXELS",
    "COND_LIMIT",
    "DET_LIMIT",
    "ChannelStats",
    "estimate_stain_matrix",
    "compute_concentrations",
    "recompose",
    "concentration_stats",
]

MIN_TISSUE_PIXELS = 100
# ill-conditioning limits shared by estimated and sampled matrices
COND_LIMIT = 1e8
DET_LIMIT = 1e-6

_MIN_SEPARATION_RAD = np.deg2rad(1.0)


@dataclass(frozen=True)
class ChannelStats:
    """Per-stain-channel mean and population standard deviation."""

    mean: np.ndarray  # (3,)
    std: np.ndarray  # (3,)


def _fix_column_sign(v: np.ndarray) -> np.ndarray:
    # stain vectors are only defined up to sign; pick the non-negative sum
    return -v if v.sum() < 0.0 else v


def estimate_stain_matrix(
    od: np.ndarray,
    mask: np.ndarray,
    angle_percentile: float = 1.0,
) -> np.ndarray:
    """Estimate a 3x3 stain colour matrix from an OD image.

    Args:
        od: (H, W, 3) optical-density image.
        mask: (H, W) boolean tissue mask; only masked pixels contribute.
        angle_percentile: robust percentile p; the extreme directions are
            the p-th and (100 - p)-th percentiles of the projected angles.

    Returns:
        (3, 3) matrix with unit-norm columns. Columns 1 and 2 are the
        extreme stain vectors (column 1 carries the larger red component,
        ties broken on green); column 3 is their normalised cross product.
        All columns are sign-fixed to a non-negative entry sum.

    Raises:
        InsufficientTissueError: fewer than MIN_TISSUE_PIXELS masked pixels.
        DegenerateStainsError: the extreme directions are within 1 degree.
    """
    pixels = od.reshape(-1, 3)[mask.ravel()]
    if pixels.shape[0] < MIN_TISSUE_PIXELS:
        raise InsufficientTissueError(
            f"{pixels.shape[0]} tissue pixels, need at least {MIN_TISSUE_PIXELS}"
        )

    # top-2 right singular vectors of the OD tuples, via the 3x3 second moment
    moment = pixels.T @ pixels
    _, eigvecs = np.linalg.eigh(moment)
    basis = eigvecs[:, [2, 1]].copy()  # descending eigenvalue order

    # orient the leading direction towards the OD cloud so the projected
    # angles stay clear of the +-pi wrap; fix the second sign for
    # reproducibility across LAPACK builds
    if pixels.sum(axis=0) @ basis[:, 0] < 0:
        basis[:, 0] = -basis[:, 0]
    if basis[:, 1].sum() < 0:
        basis[:, 1] = -basis[:, 1]

    proj = pixels @ basis
    angles = np.arctan2(proj[:, 1], proj[:, 0])
    lo, hi = np.percentile(angles, [angle_percentile, 100.0 - angle_percentile])

    v1 = _fix_column_sign(basis @ np.array([np.cos(lo), np.sin(lo)]))
    v2 = _fix_column_sign(basis @ np.array([np.cos(hi), np.sin(hi)]))

    cosang = float(np.clip(np.dot(v1, v2), -1.0, 1.0))
    if np.arccos(cosang) < _MIN_SEPARATION_RAD:
        raise DegenerateStainsError(
            "extreme stain directions are separated by less than one degree"
        )

    # column 1 gets the larger red OD component, green breaks ties
    if (v2[0] > v1[0]) or (v2[0] == v1[0] and v2[1] > v1[1]):
        v1, v2 = v2, v1

    v3 = np.cross(v1, v2)
    v3 /= np.linalg.norm(v3)
    v3 = _fix_column_sign(v3)

    return np.column_stack([v1, v2, v3])


def compute_concentrations(od: np.ndarray, colour: np.ndarray) -> np.ndarray:
    """Solve for per-pixel stain concentrations.

    The linear system colour @ s = od is solved per pixel (never via an
    explicit inverse) and negative solutions are clamped to zero.

    Args:
        od: (H, W, 3) optical-density image.
        colour: (3, 3) stain matrix.

    Returns:
        (3, N) concentration map, N = H * W, row-major pixel order.

    Raises:
        SingularMatrixError: the matrix is too ill-conditioned to solve.
    """
    if np.linalg.cond(colour) >= COND_LIMIT:
        raise SingularMatrixError("stain matrix condition number exceeds 1e8")
    rhs = od.reshape(-1, 3).T
    conc = np.linalg.solve(colour, rhs)
    np.maximum(conc, 0.0, out=conc)
    return conc


def recompose(
    colour: np.ndarray,
    conc: np.ndarray,
    shape: tuple[int, int],
    clamp: bool = True,
) -> np.ndarray:
    """Rebuild an OD image from a stain matrix and a concentration map.

    Negative OD values (possible when sampled matrices carry small negative
    entries) are clamped to zero so the result stays a valid OD image.
    The float verification paths pass clamp=False to keep the product
    exactly invertible; quantisation maps both variants to the same bytes
    because negative OD saturates at 255 either way.
    """
    od = colour @ conc
    if clamp:
        np.maximum(od, 0.0, out=od)
    return od.T.reshape(shape[0], shape[1], 3)


def concentration_stats(conc: np.ndarray, mask: np.ndarray) -> ChannelStats:
    """Mean and population std of each concentration channel over a mask.

    Args:
        conc: (3, N) concentration map.
        mask: boolean mask with N entries ((H, W) or flat).

    Raises:
        EmptyMaskError: no masked pixels.
    """
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size != conc.shape[1]:
        raise ShapeMismatchError(
            f"mask has {flat.size} entries for {conc.shape[1]} pixels"
        )
    n = int(flat.sum())
    if n == 0:
        raise EmptyMaskError("mask selects no pixels")
    # weighted one-pass moments: no boolean gather, no centred temporary;
    # the E[x^2] - mean^2 cancellation stays far below the 1e-9 the
    # downstream contracts ask for at these magnitudes
    w = flat.astype(np.float64)
    mean = (conc @ w) / n
    var = np.einsum("ij,ij,j->i", conc, conc, w) / n - mean * mean
    return ChannelStats(mean=mean, std=np.sqrt(np.maximum(var, 0.0)))
