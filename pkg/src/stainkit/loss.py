"""Prediction-consistency loss between paired logit maps.

The loss is the mean absolute difference of sigmoid probabilities over a
foreground mask. Background pixels never contribute, and an empty mask is
an error rather than a silent zero.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyMaskError, ShapeMismatchError

__all__ = ["sigmoid", "stain_consistency_loss", "masked_mae"]


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_pair(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    m = np.asarray(mask, dtype=bool)
    if a.shape != b.shape or a.shape != m.shape:
        raise ShapeMismatchError(
            f"shapes differ: a {a.shape}, b {b.shape}, mask {m.shape}"
        )
    if not m.any():
        raise EmptyMaskError("mask selects no pixels")
    return m


def masked_mae(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    """Mean absolute difference over masked pixels.

    Masked values are reduced in row-major order with numpy's pairwise
    summation, so the result is bit-deterministic for a given input.
    """
    m = _check_pair(a, b, mask)
    diff = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    vals = diff[m]
    return float(vals.sum() / vals.size)


def stain_consistency_loss(
    a: np.ndarray,
    b: np.ndarray,
    mask: np.ndarray,
    inputs_are_probabilities: bool = False,
) -> float:
    """Mean absolute probability difference over the foreground mask.

    Args:
        a, b: logit maps of identical shape (or probability maps when
            inputs_are_probabilities is set).
        mask: boolean foreground mask of the same shape.
        inputs_are_probabilities: skip the sigmoid when inputs are already
            in [0, 1].

    Returns:
        Scalar loss in [0, 1].

    Raises:
        ShapeMismatchError: the three arrays disagree in shape.
        EmptyMaskError: the mask selects no pixels.
    """
    m = _check_pair(a, b, mask)
    if inputs_are_probabilities:
        pa = np.asarray(a, dtype=np.float64)
        pb = np.asarray(b, dtype=np.float64)
    else:
        pa = sigmoid(a)
        pb = sigmoid(b)
    vals = np.abs(pa - pb)[m]
    return float(vals.sum() / vals.size)
