"""Grayscale PGM (P2/P5) and PNG reading; 16-bit binary PGM writing."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import MaskFormatError

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_header(data: bytes, count: int, pos: int = 0):
    fields = []
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise MaskFormatError("truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    return fields, pos


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Return (pixels, maxval). Raises OSError for unreadable files."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] not in (b"P2", b"P5"):
        raise MaskFormatError(f"{path}: not a grayscale PGM")
    try:
        (magic, w, h, maxval), pos = _read_header(data, 4)
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise MaskFormatError(f"{path}: malformed PGM header") from exc
    if width <= 0 or height <= 0:
        raise MaskFormatError(f"{path}: zero-size image")
    if not 0 < maxval < 65536:
        raise MaskFormatError(f"{path}: invalid maxval {maxval}")
    n = width * height
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        body = data[pos + 1: pos + 1 + n * dtype.itemsize]
        if len(body) != n * dtype.itemsize:
            raise MaskFormatError(f"{path}: truncated pixel data")
        pixels = np.frombuffer(body, dtype=dtype).astype(np.int64)
    else:
        try:
            pixels = np.array(data[pos:].split(), dtype=np.int64)
        except ValueError as exc:
            raise MaskFormatError(f"{path}: non-numeric pixel data") from exc
        if pixels.size != n:
            raise MaskFormatError(f"{path}: expected {n} pixels, found {pixels.size}")
    if pixels.max(initial=0) > maxval:
        raise MaskFormatError(f"{path}: pixel value exceeds maxval")
    return pixels.reshape(height, width), maxval


def write_pgm(path, pixels: np.ndarray, maxval: int = 65535) -> None:
    """Write a binary PGM (16-bit unless ``maxval`` < 256). Values are rounded and clipped."""
    if not 0 < maxval < 65536:
        raise ValueError(f"invalid maxval {maxval}")
    dtype = ">u2" if maxval > 255 else "u1"
    arr = np.clip(np.rint(np.asarray(pixels, dtype=float)), 0, maxval).astype(dtype)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("expected a non-empty 2-D array")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_grayscale(path) -> tuple[np.ndarray, int]:
    """Read a PGM or grayscale PNG, returning (pixels, maxval)."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head[:2] in (b"P2", b"P5"):
        return read_pgm(path)
    if head.startswith(b"\x89PNG"):
        from PIL import Image

        with Image.open(path) as im:
            if im.mode in ("L", "1"):
                return np.asarray(im.convert("L"), dtype=np.int64), 255
            if im.mode in ("I;16", "I;16B", "I"):
                return np.asarray(im, dtype=np.int64), 65535
            raise MaskFormatError(f"{path}: PNG mode {im.mode} is not grayscale")
    raise MaskFormatError(f"{path}: unsupported image format")


def write_png(path, pixels: np.ndarray) -> None:
    """Linear 8-bit rendering, scaled to the image maximum."""
    from PIL import Image

    arr = np.asarray(pixels, dtype=float)
    top = arr.max() if arr.size else 0.0
    scaled = np.zeros_like(arr) if top <= 0 else arr / top * 255
    Image.fromarray(np.clip(np.rint(scaled), 0, 255).astype(np.uint8), mode="L").save(path)
