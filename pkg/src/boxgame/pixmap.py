"""Portable-pixmap (PPM) reading and writing.

Supports plain (P3) and binary (P6) RGB pixmaps with maxval <= 255.
Images are (H, W, 3) uint8 arrays.  Binary output keeps corpora small
and byte-stable.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np

from .errors import DataError

__all__ = ["read_ppm", "write_ppm"]


def _tokens(data: bytes):
    """Yield whitespace-separated header tokens, skipping '#' comments."""
    i = 0
    n = len(data)
    while i < n:
        c = data[i : i + 1]
        if c.isspace():
            i += 1
            continue
        if c == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < n and not data[j : j + 1].isspace():
            j += 1
        yield data[i:j], j
        i = j


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"image file not found: {path}")
    data = path.read_bytes()
    toks = _tokens(data)
    try:
        magic, _ = next(toks)
        if magic not in (b"P3", b"P6"):
            raise DataError(f"{path}: not a P3/P6 pixmap (magic {magic!r})")
        width, _ = next(toks)
        height, _ = next(toks)
        maxval, end = next(toks)
        width, height, maxval = int(width), int(height), int(maxval)
    except (StopIteration, ValueError):
        raise DataError(f"{path}: truncated or malformed pixmap header") from None
    if width <= 0 or height <= 0:
        raise DataError(f"{path}: bad dimensions {width}x{height}")
    if not (0 < maxval <= 255):
        raise DataError(f"{path}: unsupported maxval {maxval}")
    count = width * height * 3
    if magic == b"P6":
        start = end + 1  # single whitespace byte after maxval
        raster = data[start : start + count]
        if len(raster) != count:
            raise DataError(f"{path}: truncated pixel data")
        pixels = np.frombuffer(raster, dtype=np.uint8)
    else:
        values = []
        for tok, _ in _tokens(data[end:]):
            values.append(int(tok))
        if len(values) != count:
            raise DataError(
                f"{path}: expected {count} pixel values, found {len(values)}"
            )
        pixels = np.array(values, dtype=np.uint8)
    return pixels.reshape(height, width, 3)


def write_ppm(image: np.ndarray, path: Union[str, Path], plain: bool = False) -> None:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise DataError("write_ppm expects an (H, W, 3) uint8 array")
    height, width = image.shape[:2]
    if plain:
        body = "\n".join(
            " ".join(str(int(v)) for v in row.reshape(-1)) for row in image
        )
        Path(path).write_text(f"P3\n{width} {height}\n255\n{body}\n", encoding="ascii")
    else:
        header = f"P6\n{width} {height}\n255\n".encode("ascii")
        Path(path).write_bytes(header + image.tobytes())
