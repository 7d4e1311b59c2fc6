"""Minimal deterministic rasterizer.

Dashboards must render to byte-identical PNGs for identical inputs, so all
drawing happens in plain numpy: integer line stepping, a built-in 5x7 pixel
font, and fixed colormap tables. Pillow is used only to encode/decode PNG.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

WHITE = (255, 255, 255)
BLACK = (0, 0, 0)
GRAY_BORDER = (160, 160, 160)
GRAY_GRID = (215, 215, 215)
GRAY_TEXT = (90, 90, 90)
GRAY_DARK = (60, 60, 60)
TRACE = (40, 40, 40)
TITLE_BG = (232, 232, 232)

# 5x7 glyphs, one 5-bit int per row, MSB is the leftmost pixel.
FONT_5X7 = {
    " ": (0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00),
    "A": (0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "B": (0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E),
    "C": (0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E),
    "D": (0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E),
    "E": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F),
    "F": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10),
    "G": (0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F),
    "H": (0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "I": (0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "J": (0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C),
    "K": (0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11),
    "L": (0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F),
    "M": (0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11),
    "N": (0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11),
    "O": (0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "P": (0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10),
    "Q": (0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D),
    "R": (0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11),
    "S": (0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E),
    "T": (0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04),
    "U": (0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "V": (0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04),
    "W": (0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A),
    "X": (0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11),
    "Y": (0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04),
    "Z": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F),
    "0": (0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E),
    "1": (0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "2": (0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F),
    "3": (0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E),
    "4": (0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02),
    "5": (0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E),
    "6": (0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E),
    "7": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08),
    "8": (0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E),
    "9": (0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C),
    ".": (0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C),
    ",": (0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08),
    ":": (0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00),
    ";": (0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x04, 0x08),
    "-": (0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00),
    "_": (0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F),
    "/": (0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10),
    "(": (0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02),
    ")": (0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08),
    "[": (0x0E, 0x08, 0x08, 0x08, 0x08, 0x08, 0x0E),
    "]": (0x0E, 0x02, 0x02, 0x02, 0x02, 0x02, 0x0E),
    "+": (0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00),
    "=": (0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00),
    "%": (0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03),
    "*": (0x00, 0x0A, 0x04, 0x1F, 0x04, 0x0A, 0x00),
    "#": (0x0A, 0x0A, 0x1F, 0x0A, 0x1F, 0x0A, 0x0A),
    "<": (0x02, 0x04, 0x08, 0x10, 0x08, 0x04, 0x02),
    ">": (0x08, 0x04, 0x02, 0x01, 0x02, 0x04, 0x08),
    "!": (0x04, 0x04, 0x04, 0x04, 0x04, 0x00, 0x04),
    "?": (0x0E, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04),
    "'": (0x04, 0x04, 0x08, 0x00, 0x00, 0x00, 0x00),
}
_UNKNOWN_GLYPH = (0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F)

GLYPH_W = 5
GLYPH_H = 7
GLYPH_PITCH = 6  # one blank column between glyphs


def blank(height: int, width: int, color=WHITE) -> np.ndarray:
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:, :] = color
    return img


def fill_rect(img: np.ndarray, x0: int, y0: int, x1: int, y1: int, color) -> None:
    h, w = img.shape[:2]
    img[max(y0, 0) : min(y1, h), max(x0, 0) : min(x1, w)] = color


def draw_rect(img: np.ndarray, x0: int, y0: int, x1: int, y1: int, color) -> None:
    fill_rect(img, x0, y0, x1, y0 + 1, color)
    fill_rect(img, x0, y1 - 1, x1, y1, color)
    fill_rect(img, x0, y0, x0 + 1, y1, color)
    fill_rect(img, x1 - 1, y0, x1, y1, color)


def draw_hline(img: np.ndarray, y: int, x0: int, x1: int, color) -> None:
    fill_rect(img, x0, y, x1, y + 1, color)


def draw_vline(img: np.ndarray, x: int, y0: int, y1: int, color) -> None:
    fill_rect(img, x, y0, x + 1, y1, color)


def draw_line(img: np.ndarray, x0: int, y0: int, x1: int, y1: int, color) -> None:
    """Bresenham line; endpoints included, clipped to the image."""
    h, w = img.shape[:2]
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        if 0 <= x < w and 0 <= y < h:
            img[y, x] = color
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def draw_polyline(img: np.ndarray, xs, ys, color) -> None:
    """Connected trace through (xs, ys).

    Densely sampled traces (x advancing by at most one pixel per point) are
    rasterized as vertical spans per column, which is much faster than
    per-pixel stepping; sparser segments fall back to Bresenham.
    """
    xs = np.asarray(xs, dtype=int)
    ys = np.asarray(ys, dtype=int)
    h, w = img.shape[:2]
    arr = np.asarray(color, dtype=np.uint8)
    for i in range(len(xs) - 1):
        x0, x1 = xs[i], xs[i + 1]
        if 0 <= x1 - x0 <= 1:
            lo = min(ys[i], ys[i + 1])
            hi = max(ys[i], ys[i + 1])
            if 0 <= x0 < w:
                img[max(lo, 0) : min(hi + 1, h), x0] = arr
        else:
            draw_line(img, x0, ys[i], x1, ys[i + 1], color)
    if len(xs) and 0 <= xs[-1] < w and 0 <= ys[-1] < h:
        img[ys[-1], xs[-1]] = arr


def draw_circle(img: np.ndarray, cx: int, cy: int, r: int, color) -> None:
    """Midpoint circle outline."""
    x, y, err = r, 0, 1 - r
    h, w = img.shape[:2]

    def put(px, py):
        if 0 <= px < w and 0 <= py < h:
            img[py, px] = color

    while x >= y:
        for px, py in (
            (cx + x, cy + y), (cx - x, cy + y), (cx + x, cy - y), (cx - x, cy - y),
            (cx + y, cy + x), (cx - y, cy + x), (cx + y, cy - x), (cx - y, cy - x),
        ):
            put(px, py)
        y += 1
        if err < 0:
            err += 2 * y + 1
        else:
            x -= 1
            err += 2 * (y - x) + 1


def draw_disc(img: np.ndarray, cx: int, cy: int, r: int, color) -> None:
    ys, xs = np.ogrid[: img.shape[0], : img.shape[1]]
    img[(xs - cx) ** 2 + (ys - cy) ** 2 <= r * r] = color


def draw_text(img: np.ndarray, x: int, y: int, text: str, color=BLACK, scale: int = 1) -> None:
    """Render text with the built-in font; lowercase maps to uppercase."""
    cx = x
    for ch in text:
        glyph = FONT_5X7.get(ch) or FONT_5X7.get(ch.upper()) or _UNKNOWN_GLYPH
        for gy, row in enumerate(glyph):
            for gx in range(GLYPH_W):
                if row & (1 << (GLYPH_W - 1 - gx)):
                    fill_rect(
                        img,
                        cx + gx * scale,
                        y + gy * scale,
                        cx + (gx + 1) * scale,
                        y + (gy + 1) * scale,
                        color,
                    )
        cx += GLYPH_PITCH * scale


def text_width(text: str, scale: int = 1) -> int:
    return GLYPH_PITCH * scale * len(text)


def _diverging_lut() -> np.ndarray:
    """255-entry blue-white-red table, exactly mirror symmetric: entry 254-i is
    entry i with the R and B channels swapped, and index 127 is pure white."""
    lut = np.empty((255, 3), dtype=np.uint8)
    for i in range(255):
        d = (i - 127) / 127.0
        a = abs(d)
        fade = int(round(255 * (1.0 - a)))
        if d >= 0:
            lut[i] = (255, fade, fade)  # toward red
        else:
            lut[i] = (fade, fade, 255)  # toward blue
    return lut


DIVERGING_LUT = _diverging_lut()


def symmetric_index(values: np.ndarray, vmax: float) -> np.ndarray:
    """Map values in [-vmax, vmax] to LUT indices 0..254 with index(-v) ==
    254 - index(v) exactly (np.round ties are symmetric about zero)."""
    if vmax <= 0:
        return np.full(np.shape(values), 127, dtype=np.intp)
    scaled = np.clip(np.asarray(values, dtype=np.float64) / vmax, -1.0, 1.0)
    return (127 + np.round(scaled * 127.0)).astype(np.intp)


def colorize(values: np.ndarray, vmax: float) -> np.ndarray:
    """Diverging blue-white-red coloring of a value array."""
    return DIVERGING_LUT[symmetric_index(values, vmax)]


def png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(img: np.ndarray, path) -> None:
    with open(path, "wb") as f:
        f.write(png_bytes(img))


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))
