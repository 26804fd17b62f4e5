"""Image I/O and the optical-density transform.

Images are plain numpy arrays: 8-bit RGB images are uint8 arrays of shape
(H, W, 3), optical-density images are float64 arrays of the same shape,
and masks are boolean (H, W) arrays.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .config import OD_BASE_E, OD_BASE_TEN
from .errors import ImageFormatError, ShapeMismatchError, UnsupportedBitDepthError

__all__ = [
    "OD_MAX",
    "od_max",
    "rgb_to_od",
    "od_to_rgb",
    "od_to_float_rgb",
    "float_rgb_to_od",
    "quantize_rgb",
    "tissue_mask",
    "load_png",
    "save_png",
    "load_mask_png",
    "save_mask_png",
    "load_label_png",
    "save_label_png",
    "load_pfm",
    "save_pfm",
]

# Highest representable OD under the base-10 convention: a pixel value of 0
# is clamped to 1 before the log, so OD never exceeds log10(255).
OD_MAX = float(np.log10(255.0))

_LN_255 = float(np.log(255.0))


def od_max(base: str = OD_BASE_TEN) -> float:
    """Upper bound of the OD range under the given log base."""
    return OD_MAX if base == OD_BASE_TEN else _LN_255


def _check_rgb(img: np.ndarray) -> None:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise ShapeMismatchError(f"expected (H, W, 3) RGB array, got {getattr(img, 'shape', None)}")
    if img.dtype != np.uint8:
        raise ShapeMismatchError(f"expected uint8 RGB array, got dtype {img.dtype}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeMismatchError("image must have at least one pixel")


def _check_od(od: np.ndarray) -> None:
    if not isinstance(od, np.ndarray) or od.ndim != 3 or od.shape[2] != 3:
        raise ShapeMismatchError(f"expected (H, W, 3) OD array, got {getattr(od, 'shape', None)}")


def rgb_to_od(img: np.ndarray, base: str = OD_BASE_TEN) -> np.ndarray:
    """Convert an 8-bit RGB image to optical density.

    Each channel value v maps to -log(max(v, 1) / 255); zeros are clamped
    to 1 first so the transform stays finite.

    Args:
        img: uint8 array of shape (H, W, 3).
        base: "ten" for log10 (default) or "e" for the natural log.

    Returns:
        float64 array of shape (H, W, 3), values in [0, od_max(base)].
    """
    _check_rgb(img)
    v = np.maximum(img.astype(np.float64), 1.0)
    v /= 255.0
    if base == OD_BASE_TEN:
        return -np.log10(v)
    return -np.log(v)


def od_to_float_rgb(od: np.ndarray, base: str = OD_BASE_TEN) -> np.ndarray:
    """Invert the OD transform without quantisation.

    Returns the raw float transmission image 255 * base**(-od); no rounding
    and no clamping, so downstream checks can recover OD exactly.
    """
    _check_od(od)
    if base == OD_BASE_TEN:
        return 255.0 * np.power(10.0, -od)
    return 255.0 * np.exp(-od)


def quantize_rgb(float_rgb: np.ndarray) -> np.ndarray:
    """Round a float RGB image to uint8, clamping to [0, 255]."""
    return np.clip(np.rint(float_rgb), 0.0, 255.0).astype(np.uint8)


def od_to_rgb(od: np.ndarray, base: str = OD_BASE_TEN) -> np.ndarray:
    """Convert an OD image back to 8-bit RGB.

    v = round(255 * base**(-od)) clamped to [0, 255]; the exact inverse of
    rgb_to_od for inputs of 1..255.
    """
    return quantize_rgb(od_to_float_rgb(od, base))


def float_rgb_to_od(float_rgb: np.ndarray, base: str = OD_BASE_TEN) -> np.ndarray:
    """OD of an unquantised float RGB image (no clamp-to-1 of the 8-bit path)."""
    v = np.maximum(np.asarray(float_rgb, dtype=np.float64), 1e-30) / 255.0
    if base == OD_BASE_TEN:
        return -np.log10(v)
    return -np.log(v)


def tissue_mask(od: np.ndarray, threshold: float = 0.15) -> np.ndarray:
    """Tissue mask of an OD image.

    A pixel is tissue iff its maximum channel OD exceeds the threshold,
    so near-white background drops out and any single strong channel is
    enough to keep a pixel.
    """
    _check_od(od)
    return od.max(axis=2) > threshold


# ---------------------------------------------------------------------------
# PNG


def load_png(path: str | Path) -> np.ndarray:
    """Load an 8-bit PNG as an (H, W, 3) uint8 RGB array.

    Greyscale and RGBA inputs are converted to RGB; 16-bit files are
    rejected outright because silent truncation would corrupt stain
    estimates.
    """
    try:
        with Image.open(path) as im:
            if im.mode in ("I", "I;16", "I;16B", "I;16L", "I;16N"):
                raise UnsupportedBitDepthError(
                    f"{path}: 16-bit PNG is not supported for RGB input"
                )
            if im.mode not in ("RGB", "RGBA", "L", "LA", "P"):
                raise ImageFormatError(f"{path}: unsupported PNG mode {im.mode!r}")
            arr = np.asarray(im.convert("RGB"))
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a decodable image") from exc
    except OSError as exc:
        raise ImageFormatError(f"{path}: {exc}") from exc
    return arr.astype(np.uint8, copy=False)


def save_png(img: np.ndarray, path: str | Path) -> None:
    """Save an (H, W, 3) uint8 array as an RGB PNG (lossless)."""
    _check_rgb(img)
    Image.fromarray(img, mode="RGB").save(path, format="PNG")


def load_mask_png(path: str | Path) -> np.ndarray:
    """Load a PNG as a boolean mask; any nonzero pixel counts as true."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a decodable image") from exc
    except OSError as exc:
        raise ImageFormatError(f"{path}: {exc}") from exc
    return arr > 0


def save_mask_png(mask: np.ndarray, path: str | Path) -> None:
    """Save a boolean mask as an 8-bit PNG (255 inside, 0 outside)."""
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def load_label_png(path: str | Path) -> np.ndarray:
    """Load an instance-label map stored as a single-channel 8- or 16-bit PNG.

    Returns an int32 array; 0 is background, positive values are instance ids.
    """
    try:
        with Image.open(path) as im:
            if im.mode in ("I;16", "I;16B", "I;16L", "I;16N", "I", "L", "P"):
                arr = np.asarray(im, dtype=np.int32)
            else:
                raise ImageFormatError(
                    f"{path}: expected a single-channel label PNG, got mode {im.mode!r}"
                )
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a decodable image") from exc
    except OSError as exc:
        raise ImageFormatError(f"{path}: {exc}") from exc
    if arr.ndim != 2:
        raise ImageFormatError(f"{path}: label map must be single-channel")
    return arr


def save_label_png(labels: np.ndarray, path: str | Path) -> None:
    """Save an instance-label map as a 16-bit single-channel PNG."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ShapeMismatchError("label map must be 2-D")
    if arr.min() < 0 or arr.max() > 0xFFFF:
        raise ValueError("label ids must fit in uint16")
    Image.fromarray(arr.astype(np.uint16)).save(path, format="PNG")


# ---------------------------------------------------------------------------
# PFM (portable float map)


def save_pfm(arr: np.ndarray, path: str | Path) -> None:
    """Write a float map as PFM, little-endian (scale -1.0).

    Accepts (H, W) greyscale or (H, W, 3) colour arrays; data is stored
    float32 with rows bottom-to-top per the format convention.
    """
    a = np.asarray(arr, dtype=np.float32)
    if a.ndim == 2:
        magic = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"PF"
    else:
        raise ShapeMismatchError(f"PFM needs (H, W) or (H, W, 3), got {a.shape}")
    h, w = a.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(a[::-1]).astype("<f4").tobytes())


def _read_pfm_token(f) -> bytes:
    tok = b""
    while True:
        c = f.read(1)
        if c == b"":
            raise ImageFormatError("truncated PFM header")
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def load_pfm(path: str | Path) -> np.ndarray:
    """Read a PFM file into a float32 array of shape (H, W) or (H, W, 3)."""
    with open(path, "rb") as f:
        magic = _read_pfm_token(f)
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise ImageFormatError(f"{path}: not a PFM file (magic {magic!r})")
        try:
            w = int(_read_pfm_token(f))
            h = int(_read_pfm_token(f))
            scale = float(_read_pfm_token(f))
        except ValueError as exc:
            raise ImageFormatError(f"{path}: malformed PFM header") from exc
        if w <= 0 or h <= 0 or scale == 0.0:
            raise ImageFormatError(f"{path}: malformed PFM header")
        dtype = "<f4" if scale < 0 else ">f4"
        count = w * h * channels
        data = np.frombuffer(f.read(count * 4), dtype=dtype)
        if data.size != count:
            raise ImageFormatError(f"{path}: truncated PFM data")
    shape = (h, w) if channels == 1 else (h, w, channels)
    # rows are stored bottom-to-top
    return data.reshape(shape)[::-1].astype(np.float32)


def atomic_replace(tmp_path: str | Path, final_path: str | Path) -> None:
    """Promote a finished temp file to its final name in one step."""
    os.replace(tmp_path, final_path)
