"""Small image I/O helpers: everything in-memory is (H, W, 3) uint8 RGB."""

from __future__ import annotations

import base64
import io
from pathlib import Path

import numpy as np
from PIL import Image


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def read_image_size(path: str | Path) -> tuple[int, int]:
    """(width, height) from the file header, without decoding pixels."""
    with Image.open(path) as im:
        return im.size


def save_image(image: np.ndarray, path: str | Path) -> None:
    Image.fromarray(_as_rgb(image)).save(path)


def encode_png_b64(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(_as_rgb(image)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png_b64(data: str) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"))
    with Image.open(io.BytesIO(raw)) as im:
        return np.asarray(im.convert("RGB"))


def intensity(image: np.ndarray) -> np.ndarray:
    """Per-pixel scalar intensity: the channel mean, as float64."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        return arr.mean(axis=2)
    return arr


def _as_rgb(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=2)
    return arr
