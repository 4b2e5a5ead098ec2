"""Image file I/O: 8-bit PNG (round-half-up quantization from float) and a
raw float32 raster format for exact regression comparisons.

Float raster layout: magic "QSF1", then height, width, channels as u32
little-endian, then float32 data in C order.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError, ValidationError

F32_MAGIC = b"QSF1"


def quantize(image: np.ndarray) -> np.ndarray:
    """Float [0, 1] to uint8 with round-half-up: floor(255 v + 0.5)."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.floor(img * 255.0 + 0.5).astype(np.uint8)


def write_png(path, image: np.ndarray) -> None:
    """Write a float image ((h, w) grayscale or (h, w, 3) RGB) as 8-bit PNG."""
    from PIL import Image

    img = np.asarray(image)
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise ValidationError(f"expected (h, w) or (h, w, 3) image, got {img.shape}")
    Image.fromarray(quantize(img)).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    """Read a PNG back as float64 in [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im)
    return arr.astype(np.float64) / 255.0


def write_f32(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValidationError(f"expected a 2D or 3D raster, got shape {img.shape}")
    h, w, c = img.shape
    with open(path, "wb") as fh:
        fh.write(F32_MAGIC)
        fh.write(struct.pack("<3I", h, w, c))
        fh.write(np.ascontiguousarray(img, dtype="<f4").tobytes())


def read_f32(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != F32_MAGIC:
            raise FormatError(f"{path}: not a float raster file (bad magic)")
        header = fh.read(12)
        if len(header) != 12:
            raise FormatError(f"{path}: truncated header")
        h, w, c = struct.unpack("<3I", header)
        data = fh.read(4 * h * w * c)
        if len(data) != 4 * h * w * c:
            raise FormatError(f"{path}: truncated data")
    arr = np.frombuffer(data, dtype="<f4").reshape(h, w, c).astype(np.float64)
    return arr[:, :, 0] if c == 1 else arr
