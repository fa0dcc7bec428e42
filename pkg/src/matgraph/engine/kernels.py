"""Image kernels for the built-in node set.

Kernels take and return float arrays shaped (height, width, channels); the
evaluator wraps results with :func:`finish`. Color arrays are RGBA.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .buffer import ImageBuffer, finish

LEVELS_EPS = 1e-8
DEFAULT_GRAY_WEIGHTS = (0.299, 0.587, 0.114)


class KernelError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code
        self.message = message


def _check_same(*bufs):
    shapes = [b.data.shape[:2] for b in bufs if b is not None]
    if len(set(shapes)) > 1:
        raise KernelError("DIMENSION_MISMATCH", f"buffer sizes differ: {shapes}")


# --- generator fields (u, v normalized pixel centers) ------------------------

def pixel_coords(width, height, tiling=True, extend=1):
    """Normalized pixel-center coordinates; ``extend`` > 1 samples beyond [0, 1)."""
    xs = (np.arange(width * extend) + 0.5) / width
    ys = (np.arange(height * extend) + 0.5) / height
    u, v = np.meshgrid(xs, ys)
    if tiling:
        u = u % 1.0
        v = v % 1.0
    return u, v


def checker_field(u, v, tiles):
    return (np.floor(u * tiles) + np.floor(v * tiles)) % 2.0


def gradient_field(u, v, direction):
    if direction == "horizontal":
        return u
    if direction == "vertical":
        return v
    return (u + v) * 0.5


def brick_field(u, v, rows, cols, mortar, offset):
    y = v * rows
    row = np.floor(y)
    x = u * cols + offset * (row % 2.0)
    fx = x - np.floor(x)
    fy = y - row
    h = mortar * 0.5
    inside = (fx >= h) & (fx < 1.0 - h) & (fy >= h) & (fy < 1.0 - h)
    return inside.astype(np.float64)


def polygon_field(u, v, sides, radius, rotation, gradient):
    dx = u - 0.5
    dy = v - 0.5
    d = np.hypot(dx, dy)
    sector = 2.0 * math.pi / sides
    a = (np.arctan2(dy, dx) - rotation * 2.0 * math.pi) % sector
    edge = radius * math.cos(math.pi / sides) / np.cos(a - math.pi / sides)
    if gradient <= 0.0:
        return (d <= edge).astype(np.float64)
    return np.clip((edge - d) / (gradient * edge), 0.0, 1.0)


# --- filters -----------------------------------------------------------------

def blend(fg: ImageBuffer, bg: ImageBuffer, mask=None, mode="copy", opacity=1.0) -> ImageBuffer:
    """out = bg + (mode(fg, bg) - bg) * opacity * mask, clamped."""
    _check_same(fg, bg, mask)
    if fg.channels != bg.channels:
        raise KernelError("DIMENSION_MISMATCH", "foreground/background channel counts differ")
    f = fg.data.astype(np.float64)
    b = bg.data.astype(np.float64)
    if mode == "copy":
        m = f
    elif mode == "add":
        m = b + f
    elif mode == "subtract":
        m = b - f
    elif mode == "multiply":
        m = b * f
    elif mode == "screen":
        m = 1.0 - (1.0 - b) * (1.0 - f)
    elif mode == "max":
        m = np.maximum(b, f)
    elif mode == "min":
        m = np.minimum(b, f)
    else:
        raise KernelError("BAD_PARAM_VALUE", f"unknown blend mode {mode!r}")
    w = float(opacity)
    if mask is not None:
        w = w * mask.data.astype(np.float64)
    return ImageBuffer(finish(b + (m - b) * w))


def gradient_map(buf: ImageBuffer, stops) -> ImageBuffer:
    """Piecewise-linear color ramp over a grayscale input; ends clamp."""
    if not stops:
        raise KernelError("BAD_PARAM_VALUE", "gradient map needs at least one stop")
    pos = np.array([p for p, _ in stops], dtype=np.float64)
    cols = np.array([c for _, c in stops], dtype=np.float64)
    x = buf.data[..., 0].astype(np.float64)
    out = np.stack([np.interp(x, pos, cols[:, k]) for k in range(4)], axis=-1)
    return ImageBuffer(finish(out))


def grayscale_conversion(buf: ImageBuffer, weights=DEFAULT_GRAY_WEIGHTS) -> ImageBuffer:
    d = buf.data.astype(np.float64)
    wr, wg, wb = weights
    return ImageBuffer(finish((wr * d[..., 0] + wg * d[..., 1] + wb * d[..., 2])[..., None]))


def normal_from_height(buf: ImageBuffer, intensity=4.0, tiling=True) -> ImageBuffer:
    """Tangent-space normal map from central differences of a height field."""
    h = buf.data[..., 0].astype(np.float64)
    if tiling:
        dx = (np.roll(h, -1, axis=1) - np.roll(h, 1, axis=1)) * 0.5
        dy = (np.roll(h, -1, axis=0) - np.roll(h, 1, axis=0)) * 0.5
    else:
        p = np.pad(h, 1, mode="edge")
        dx = (p[1:-1, 2:] - p[1:-1, :-2]) * 0.5
        dy = (p[2:, 1:-1] - p[:-2, 1:-1]) * 0.5
    nx = -intensity * dx
    ny = -intensity * dy
    inv = 1.0 / np.sqrt(nx * nx + ny * ny + 1.0)
    out = np.stack([(nx * inv + 1.0) * 0.5, (ny * inv + 1.0) * 0.5,
                    (inv + 1.0) * 0.5, np.ones_like(h)], axis=-1)
    return ImageBuffer(finish(out))


def levels(buf: ImageBuffer, in_low=0.0, in_high=1.0, gamma=1.0, out_low=0.0, out_high=1.0):
    """Input range remap with gamma; degenerate input range is a hard step."""
    d = buf.data.astype(np.float64).copy()
    rgb = d[..., :3] if buf.is_color else d
    span = in_high - in_low
    if abs(span) < LEVELS_EPS:
        t = (rgb >= in_low).astype(np.float64)
    else:
        t = np.clip((rgb - in_low) / span, 0.0, 1.0)
    t = t ** (1.0 / gamma)
    rgb[...] = out_low + t * (out_high - out_low)
    return ImageBuffer(finish(d))


def invert(buf: ImageBuffer) -> ImageBuffer:
    d = buf.data.copy()
    if buf.is_color:
        d[..., :3] = np.float32(1.0) - d[..., :3]
    else:
        d = np.float32(1.0) - d
    return ImageBuffer(finish(d))


def _correlate(d, weights, tiling):
    mode = "wrap" if tiling else "nearest"
    out = ndimage.correlate1d(d, weights, axis=0, mode=mode)
    return ndimage.correlate1d(out, weights, axis=1, mode=mode)


def blur_box_px(buf: ImageBuffer, radius_px: int, tiling=True) -> ImageBuffer:
    if radius_px <= 0:
        return buf
    w = np.full(2 * radius_px + 1, 1.0 / (2 * radius_px + 1))
    return ImageBuffer(finish(_correlate(buf.data.astype(np.float64), w, tiling)))


def blur_gaussian_px(buf: ImageBuffer, sigma_px: float, tiling=True) -> ImageBuffer:
    if sigma_px < 1e-3:
        return buf
    r = max(1, int(math.ceil(3.0 * sigma_px)))
    x = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma_px) ** 2)
    w /= w.sum()
    return ImageBuffer(finish(_correlate(buf.data.astype(np.float64), w, tiling)))


def transform_2d(buf: ImageBuffer, offset=(0.0, 0.0), scale=1.0, rotation=0.0, tiling=True):
    """Nearest-neighbour affine resample about the image center."""
    hgt, wid = buf.height, buf.width
    px = (np.arange(wid) + 0.5) / wid - 0.5
    py = (np.arange(hgt) + 0.5) / hgt - 0.5
    x, y = np.meshgrid(px, py)
    x = (x - offset[0]) / scale
    y = (y - offset[1]) / scale
    th = rotation * 2.0 * math.pi
    c, s = math.cos(th), math.sin(th)
    qx = c * x + s * y + 0.5
    qy = -s * x + c * y + 0.5
    ix = np.floor(qx * wid).astype(np.int64)
    iy = np.floor(qy * hgt).astype(np.int64)
    if tiling:
        ix %= wid
        iy %= hgt
    else:
        ix = np.clip(ix, 0, wid - 1)
        iy = np.clip(iy, 0, hgt - 1)
    return ImageBuffer(buf.data[iy, ix].copy())
