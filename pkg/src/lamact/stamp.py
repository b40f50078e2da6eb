"""Text stamps for the structured-perturbation experiment, drawn with a tiny 5x7 bitmap font."""

from __future__ import annotations

import numpy as np

_GLYPHS = {
    "A": ("01110", "10001", "10001", "11111", "10001", "10001", "10001"),
    "C": ("01111", "10000", "10000", "10000", "10000", "10000", "01111"),
    "E": ("11111", "10000", "10000", "11110", "10000", "10000", "11111"),
    "I": ("11111", "00100", "00100", "00100", "00100", "00100", "11111"),
    "N": ("10001", "11001", "10101", "10011", "10001", "10001", "10001"),
    "S": ("01111", "10000", "10000", "01110", "00001", "00001", "11110"),
    "T": ("11111", "00100", "00100", "00100", "00100", "00100", "00100"),
    "U": ("10001", "10001", "10001", "10001", "10001", "10001", "01110"),
    " ": ("00000",) * 7,
}
GLYPH_H, GLYPH_W = 7, 5


def text_bitmap(text: str, scale: int = 1) -> np.ndarray:
    """Boolean bitmap of text, one blank column between glyphs."""
    text = text.upper()
    missing = sorted(set(text) - set(_GLYPHS))
    if missing:
        raise ValueError(f"no glyph for characters {missing}")
    if scale < 1:
        raise ValueError("scale must be a positive integer")
    cols = []
    for i, ch in enumerate(text):
        if i:
            cols.append(np.zeros((GLYPH_H, 1), dtype=bool))
        cols.append(np.array([[c == "1" for c in row] for row in _GLYPHS[ch]]))
    bmp = np.concatenate(cols, axis=1)
    return np.kron(bmp, np.ones((scale, scale), dtype=bool)).astype(bool)


def stamp_mask(shape, text: str, scale=None, center=(0.5, 0.5)) -> np.ndarray:
    """Mask of the text placed with its center at the given fractional position of the image."""
    h, w = shape
    if scale is None:
        width1 = text_bitmap(text).shape[1]
        scale = max(1, int(0.6 * w) // width1)
    bmp = text_bitmap(text, scale)
    bh, bw = bmp.shape
    if bh > h or bw > w:
        raise ValueError(f"text of size {bh}x{bw} does not fit in {h}x{w}")
    r0 = min(max(0, int(round(center[0] * h - bh / 2))), h - bh)
    c0 = min(max(0, int(round(center[1] * w - bw / 2))), w - bw)
    mask = np.zeros(shape, dtype=bool)
    mask[r0:r0 + bh, c0:c0 + bw] = bmp
    return mask
