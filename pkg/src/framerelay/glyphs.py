"""Fixed 5x7 bitmap font: loading, text rendering, and exact-match OCR.

The font covers A-Z and 0-9. Glyph cells advance 6 px horizontally and
8 px vertically; a space advances one cell without stamping. Recognition
is exact template matching (all 35 cells, foreground and background), so
render -> recognize is a perfect round trip on clean frames.
"""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Tuple

import numpy as np

GLYPH_W = 5
GLYPH_H = 7
ADVANCE_X = 6
ADVANCE_Y = 8

_TEXT_RE = re.compile(r"[A-Z0-9 ]*$")


class RenderError(ValueError):
    pass


@lru_cache(maxsize=1)
def load_font() -> Dict[str, np.ndarray]:
    """Load the shipped glyph file: per glyph, a 7x5 bool mask."""
    raw = resources.files("framerelay.data").joinpath("glyphs5x7.txt").read_text()
    lines = [ln for ln in raw.splitlines() if ln]
    font: Dict[str, np.ndarray] = {}
    i = 0
    while i < len(lines):
        ch = lines[i]
        rows = lines[i + 1:i + 1 + GLYPH_H]
        if len(ch) != 1 or len(rows) != GLYPH_H or any(len(r) != GLYPH_W for r in rows):
            raise ValueError(f"malformed glyph record at line {i + 1}")
        font[ch] = np.array([[c == "#" for c in r] for r in rows], dtype=bool)
        i += 1 + GLYPH_H
    masks = list(font.values())
    for a in range(len(masks)):
        for b in range(a + 1, len(masks)):
            if np.array_equal(masks[a], masks[b]):
                raise ValueError("glyph masks are not pairwise distinct")
    return font


def render_text(text: str, x_px: int, y_px: int, canvas: np.ndarray) -> np.ndarray:
    """Stamp text (value 255) into a 2-D uint8 canvas at 6-px advances."""
    if not _TEXT_RE.match(text):
        raise RenderError(f"unsupported characters in {text!r}")
    font = load_font()
    h, w = canvas.shape
    end_x = x_px + max(len(text) * ADVANCE_X - 1, 0)
    if text and (x_px < 0 or y_px < 0 or end_x > w or y_px + GLYPH_H > h):
        raise RenderError("text does not fit in canvas")
    for i, ch in enumerate(text):
        if ch == " ":
            continue
        gx = x_px + i * ADVANCE_X
        mask = font[ch]
        cell = canvas[y_px:y_px + GLYPH_H, gx:gx + GLYPH_W]
        cell[mask] = 255
    return canvas


def text_width_px(text: str) -> int:
    """Pixel width occupied by rendered text (last glyph has no trailing gap)."""
    return len(text) * ADVANCE_X - 1 if text else 0


def recognize(gray: np.ndarray, threshold: int = 128) -> List[Tuple[str, Tuple[int, int, int, int]]]:
    """Exact-match OCR over a 2-D uint8 buffer.

    Returns (token, (min_x, min_y, max_x, max_y)) pixel boxes in row-major
    order. Matches chain into a token at exactly 6-px advances on one row;
    a gap of a full cell or more ends the token.
    """
    font = load_font()
    binary = gray >= threshold
    h, w = binary.shape
    if h < GLYPH_H or w < GLYPH_W:
        return []
    windows = np.lib.stride_tricks.sliding_window_view(binary, (GLYPH_H, GLYPH_W))
    # matches[y][x] = glyph char whose mask equals the window exactly
    matches: Dict[Tuple[int, int], str] = {}
    for ch, mask in font.items():
        hits = np.all(windows == mask, axis=(2, 3))
        for y, x in zip(*np.nonzero(hits)):
            matches[(int(y), int(x))] = ch
    tokens: List[Tuple[str, Tuple[int, int, int, int]]] = []
    for (y, x) in sorted(matches):
        if (y, x) not in matches:
            continue
        chars = []
        start_x = x
        cx = x
        while (y, cx) in matches:
            chars.append(matches.pop((y, cx)))
            cx += ADVANCE_X
        tokens.append((
            "".join(chars),
            (start_x, y, cx - ADVANCE_X + GLYPH_W - 1, y + GLYPH_H - 1),
        ))
    return tokens
