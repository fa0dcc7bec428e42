"""Embedded 5x7 bitmap font drawn in 8x8 cells.

Lowercase letters use the uppercase shapes. Unknown characters render as '?'.
"""
from __future__ import annotations

import numpy as np

CELL = 8
GLYPH_H = 7

_GLYPHS = {
    'A': ".###.|#...#|#...#|#####|#...#|#...#|#...#",
    'B': "####.|#...#|#...#|####.|#...#|#...#|####.",
    'C': ".###.|#...#|#....|#....|#....|#...#|.###.",
    'D': "####.|#...#|#...#|#...#|#...#|#...#|####.",
    'E': "#####|#....|#....|####.|#....|#....|#####",
    'F': "#####|#....|#....|####.|#....|#....|#....",
    'G': ".###.|#...#|#....|#.###|#...#|#...#|.####",
    'H': "#...#|#...#|#...#|#####|#...#|#...#|#...#",
    'I': ".###.|..#..|..#..|..#..|..#..|..#..|.###.",
    'J': "..###|...#.|...#.|...#.|...#.|#..#.|.##..",
    'K': "#...#|#..#.|#.#..|##...|#.#..|#..#.|#...#",
    'L': "#....|#....|#....|#....|#....|#....|#####",
    'M': "#...#|##.##|#.#.#|#.#.#|#...#|#...#|#...#",
    'N': "#...#|#...#|##..#|#.#.#|#..##|#...#|#...#",
    'O': ".###.|#...#|#...#|#...#|#...#|#...#|.###.",
    'P': "####.|#...#|#...#|####.|#....|#....|#....",
    'Q': ".###.|#...#|#...#|#...#|#.#.#|#..#.|.##.#",
    'R': "####.|#...#|#...#|####.|#.#..|#..#.|#...#",
    'S': ".####|#....|#....|.###.|....#|....#|####.",
    'T': "#####|..#..|..#..|..#..|..#..|..#..|..#..",
    'U': "#...#|#...#|#...#|#...#|#...#|#...#|.###.",
    'V': "#...#|#...#|#...#|#...#|#...#|.#.#.|..#..",
    'W': "#...#|#...#|#...#|#.#.#|#.#.#|#.#.#|.#.#.",
    'X': "#...#|#...#|.#.#.|..#..|.#.#.|#...#|#...#",
    'Y': "#...#|#...#|.#.#.|..#..|..#..|..#..|..#..",
    'Z': "#####|....#|...#.|..#..|.#...|#....|#####",
    '0': ".###.|#...#|#..##|#.#.#|##..#|#...#|.###.",
    '1': "..#..|.##..|..#..|..#..|..#..|..#..|.###.",
    '2': ".###.|#...#|....#|...#.|..#..|.#...|#####",
    '3': "#####|...#.|..#..|...#.|....#|#...#|.###.",
    '4': "...#.|..##.|.#.#.|#..#.|#####|...#.|...#.",
    '5': "#####|#....|####.|....#|....#|#...#|.###.",
    '6': "..##.|.#...|#....|####.|#...#|#...#|.###.",
    '7': "#####|....#|...#.|..#..|.#...|.#...|.#...",
    '8': ".###.|#...#|#...#|.###.|#...#|#...#|.###.",
    '9': ".###.|#...#|#...#|.####|....#|...#.|.##..",
    '_': ".....|.....|.....|.....|.....|.....|#####",
    '.': ".....|.....|.....|.....|.....|.##..|.##..",
    ':': ".....|.##..|.##..|.....|.##..|.##..|.....",
    '-': ".....|.....|.....|#####|.....|.....|.....",
    '>': ".#...|..#..|...#.|....#|...#.|..#..|.#...",
    '/': "....#|....#|...#.|..#..|.#...|#....|#....",
    '~': ".....|.....|.#...|#.#.#|...#.|.....|.....",
    '?': ".###.|#...#|....#|...#.|..#..|.....|..#..",
    ' ': ".....|.....|.....|.....|.....|.....|.....",
}


def _bitmap(pattern: str) -> np.ndarray:
    return np.array([[c == "#" for c in row] for row in pattern.split("|")])


GLYPHS = {k: _bitmap(v) for k, v in _GLYPHS.items()}


def glyph(ch: str) -> np.ndarray:
    return GLYPHS.get(ch.upper(), GLYPHS["?"])


def text_mask(text: str) -> np.ndarray:
    """Boolean mask of height CELL and width CELL * len(text)."""
    out = np.zeros((CELL, CELL * len(text)), dtype=bool)
    for k, ch in enumerate(text):
        out[0:GLYPH_H, k * CELL + 1:k * CELL + 6] = glyph(ch)
    return out


def draw_text(canvas: np.ndarray, x: int, y: int, text: str, color) -> None:
    """Draw ``text`` into an (H, W, 4) float canvas at top-left (x, y), clipped."""
    m = text_mask(text)
    h, w = canvas.shape[:2]
    y1, x1 = min(h, y + m.shape[0]), min(w, x + m.shape[1])
    if y1 <= y or x1 <= x:
        return
    sub = m[: y1 - y, : x1 - x]
    canvas[y:y1, x:x1][sub] = color
