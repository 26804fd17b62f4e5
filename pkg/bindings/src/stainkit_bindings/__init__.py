"""Array-in, array-out bindings to the stainkit pipeline.

Meant for training dataloaders: every operation takes in-memory numpy
arrays plus an explicit integer seed and returns new arrays, so worker
processes stay reproducible without shared generator state. Outputs are
bit-identical to the command line tool run on the same bytes and seed.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

import stainkit

__version__ = stainkit.__version__

__all__ = [
    "BindingError",
    "InvalidInputError",
    "ProfileLoadError",
    "BoundProfile",
    "load_profile",
    "sca_augment",
    "scl_pair",
    "consistency_loss",
]


class BindingError(Exception):
    """Base class for errors raised at the binding boundary."""


class InvalidInputError(BindingError):
    """An input array has the wrong dtype or shape."""


class ProfileLoadError(BindingError):
    """A profile file is missing or malformed."""


class BoundProfile:
    """Opaque handle for a loaded stain profile.

    Immutable after load; safe to share across dataloader workers.
    """

    __slots__ = ("_profile",)

    def __init__(self, profile):
        object.__setattr__(self, "_profile", profile)

    def __setattr__(self, name, value):
        raise AttributeError("BoundProfile is immutable")

    @property
    def n_images(self) -> int:
        return self._profile.n_images


def load_profile(path) -> BoundProfile:
    """Load a stain profile JSON written by the fit pipeline.

    Raises:
        ProfileLoadError: missing file or malformed content.
    """
    try:
        return BoundProfile(stainkit.load_profile(Path(path)))
    except (FileNotFoundError, IsADirectoryError, stainkit.ProfileSchemaError) as exc:
        raise ProfileLoadError(str(exc)) from exc


def _check_image(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise InvalidInputError(f"image must be uint8, got {arr.dtype}")
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"image must be (H, W, 3), got {arr.shape}")
    if not arr.flags.c_contiguous:
        warnings.warn("copying non-contiguous input image", stacklevel=3)
        arr = np.ascontiguousarray(arr)
    return arr


def _task_rng(seed: int) -> np.random.Generator:
    # same stream the command line tool derives for its first image and
    # first draw, which is what makes single-image parity byte-exact
    return np.random.default_rng(np.random.SeedSequence([int(seed), 0, 0]))


def sca_augment(img: np.ndarray, profile: BoundProfile, seed: int) -> np.ndarray:
    """Recolour one image with a stain appearance drawn from the profile."""
    arr = _check_image(img)
    return stainkit.sca_augment(arr, profile._profile, _task_rng(seed))


def scl_pair(
    img: np.ndarray, profile: BoundProfile, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Draw a consistency pair sharing one concentration transform."""
    arr = _check_image(img)
    return stainkit.scl_pair(arr, profile._profile, _task_rng(seed))


def consistency_loss(
    a: np.ndarray,
    b: np.ndarray,
    mask: np.ndarray,
    inputs_are_probabilities: bool = False,
) -> float:
    """Mean absolute probability difference between two logit maps."""
    return stainkit.stain_consistency_loss(
        a, b, mask, inputs_are_probabilities=inputs_are_probabilities
    )
