"""Ruderman opponent colour space (L-alpha-beta).

RGB is mapped through the LMS cone response, a log, and a decorrelating
rotation. Per-channel statistics in this space are what both the Reinhard
normaliser and the channel-statistics augmenter move around.
"""

from __future__ import annotations

import numpy as np

__all__ = ["rgb_to_lab", "lab_to_float_rgb", "lab_channel_stats"]

_RGB_TO_LMS = np.array(
    [
        [0.3811, 0.5783, 0.0402],
        [0.1967, 0.7244, 0.0782],
        [0.0241, 0.1288, 0.8444],
    ]
)

_LMS_TO_LAB = np.diag([1.0 / np.sqrt(3.0), 1.0 / np.sqrt(6.0), 1.0 / np.sqrt(2.0)]) @ np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, 1.0, -2.0],
        [1.0, -1.0, 0.0],
    ]
)

_LMS_TO_RGB = np.linalg.inv(_RGB_TO_LMS)
_LAB_TO_LMS = np.linalg.inv(_LMS_TO_LAB)

# black pixels would otherwise hit log(0)
_LMS_FLOOR = 1e-8


def rgb_to_lab(img: np.ndarray) -> np.ndarray:
    """Map an RGB image (uint8 or float, 0..255 scale) to L-alpha-beta.

    Returns a float64 (H, W, 3) array.
    """
    rgb = np.asarray(img, dtype=np.float64)
    lms = rgb @ _RGB_TO_LMS.T
    np.maximum(lms, _LMS_FLOOR, out=lms)
    return np.log(lms) @ _LMS_TO_LAB.T


def lab_to_float_rgb(lab: np.ndarray) -> np.ndarray:
    """Invert rgb_to_lab, returning unclamped float RGB on the 0..255 scale."""
    lms = np.exp(lab @ _LAB_TO_LMS.T)
    return lms @ _LMS_TO_RGB.T


def lab_channel_stats(lab: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and population standard deviation over all pixels."""
    flat = lab.reshape(-1, 3)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    return mean, std
