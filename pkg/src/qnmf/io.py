"""Image and mask files: PNG through Pillow, binary PPM (P6) by hand, and bundled images."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import builtin_image

BUILTIN_PREFIX = "builtin:"


class ImageFormatError(OSError):
    """A file that is not a readable image."""


def to_uint8(img) -> np.ndarray:
    """Round and clamp a 0-255 float image to 8 bits."""
    return np.clip(np.rint(np.asarray(img, dtype=float)), 0, 255).astype(np.uint8)


def _ppm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    # Header fields are whitespace separated; '#' starts a comment to end of line.
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.find(b"\n", pos) + 1 or len(data)
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        try:
            tokens.append(int(data[start:pos]))
        except ValueError:
            raise ImageFormatError(f"bad PPM header field {data[start:pos]!r}") from None
    return tokens, pos + 1  # exactly one whitespace byte before the raster


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] != b"P6":
        raise ImageFormatError(f"{path} is not a binary PPM (P6) file")
    (w, h, maxval), start = _ppm_tokens(data, 3)
    if not 0 < maxval < 256:
        raise ImageFormatError(f"unsupported PPM maxval {maxval}")
    if len(data) - start < h * w * 3:
        raise ImageFormatError(f"{path}: PPM raster is truncated")
    raster = np.frombuffer(data, dtype=np.uint8, count=h * w * 3, offset=start)
    img = raster.reshape(h, w, 3).astype(float)
    return img * (255.0 / maxval) if maxval != 255 else img


def write_ppm(path, img) -> None:
    px = to_uint8(img)
    h, w = px.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + px.tobytes())


def read_image(path) -> np.ndarray:
    """Load an RGB image as float ``(H, W, 3)`` on the 0-255 scale.

    ``builtin:<name>`` loads a bundled synthetic image instead of a file.
    """
    text = str(path)
    if text.startswith(BUILTIN_PREFIX):
        return builtin_image(text[len(BUILTIN_PREFIX) :])
    if Path(text).suffix.lower() in (".ppm", ".pnm"):
        return read_ppm(text)
    with Image.open(text) as im:
        return np.asarray(im.convert("RGB"), dtype=float)


def write_image(path, img) -> None:
    """Save as 8-bit RGB; the format follows the suffix (``.ppm`` or anything Pillow knows)."""
    if Path(path).suffix.lower() in (".ppm", ".pnm"):
        write_ppm(path, img)
        return
    Image.fromarray(to_uint8(img), mode="RGB").save(path)


def read_mask(path) -> np.ndarray:
    """Boolean observation mask from a single-channel image; zero means missing."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 0


def write_mask(path, omega) -> None:
    Image.fromarray(np.where(np.asarray(omega, dtype=bool), 255, 0).astype(np.uint8), mode="L").save(path)
