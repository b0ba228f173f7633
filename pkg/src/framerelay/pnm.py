"""Binary PGM (P5) / PPM (P6) reading and writing, maxval 255 only.

Codec-free ingestion for the file-driven frame source; compressed image
formats are deliberately out of scope.
"""
from __future__ import annotations

from pathlib import Path
from typing import Tuple

from .model import PixelFormat


class PnmError(ValueError):
    pass


def _read_token(data: bytes, pos: int) -> Tuple[bytes, int]:
    while pos < len(data):
        if data[pos:pos + 1].isspace():
            pos += 1
        elif data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise PnmError("truncated header")
    return data[start:pos], pos


def read_pnm(path: Path) -> Tuple[int, int, PixelFormat, bytes]:
    """Returns (width, height, format, pixels)."""
    data = path.read_bytes()
    magic, pos = _read_token(data, 0)
    if magic == b"P5":
        fmt = PixelFormat.GRAY8
    elif magic == b"P6":
        fmt = PixelFormat.RGB8
    else:
        raise PnmError(f"{path.name}: unsupported magic {magic!r}")
    try:
        w_tok, pos = _read_token(data, pos)
        h_tok, pos = _read_token(data, pos)
        max_tok, pos = _read_token(data, pos)
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except (ValueError, PnmError) as e:
        raise PnmError(f"{path.name}: bad header: {e}") from None
    if maxval != 255:
        raise PnmError(f"{path.name}: only maxval 255 is supported")
    pos += 1  # single whitespace byte after maxval
    n = width * height * fmt.bytes_per_pixel
    pixels = data[pos:pos + n]
    if len(pixels) != n:
        raise PnmError(f"{path.name}: expected {n} pixel bytes, got {len(pixels)}")
    return width, height, fmt, pixels


def write_pnm(path: Path, width: int, height: int, fmt: PixelFormat,
              pixels: bytes) -> None:
    magic = b"P5" if fmt is PixelFormat.GRAY8 else b"P6"
    path.write_bytes(magic + b"\n%d %d\n255\n" % (width, height) + pixels)
