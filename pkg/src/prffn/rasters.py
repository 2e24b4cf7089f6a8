"""PNG I/O for H&E-style RGB rasters and 8-bit label masks."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .registration import VALID_LABELS


def save_rgb_png(img: np.ndarray, path: str | Path) -> None:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"expected (H, W, 3) RGB raster, got {img.shape}")
    arr = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def load_rgb_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64)


def save_mask_png(mask: np.ndarray, path: str | Path) -> None:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DataError(f"mask must be 2-D, got shape {mask.shape}")
    if not np.isin(mask, VALID_LABELS).all():
        raise DataError("mask contains labels outside the known set")
    Image.fromarray(mask.astype(np.uint8), mode="L").save(path)


def load_mask_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        mask = np.asarray(im.convert("L"), dtype=np.int64)
    if not np.isin(mask, VALID_LABELS).all():
        raise DataError(f"{path} contains labels outside the known set")
    return mask
