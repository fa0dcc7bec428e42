"""Raster buffers, resampling and PNG I/O."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

# Node outputs are snapped to multiples of 2**-24 so that 1 - x is exact in
# float32 for every sample (invert stays an exact involution).
GRID = float(2 ** 24)


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """A (height, width, channels) float32 raster with samples in [0, 1].

    ``channels`` is 1 for grayscale and 4 for RGBA color.
    """

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] not in (1, 4):
            raise ValueError(f"bad buffer shape {self.data.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def is_color(self) -> bool:
        return self.channels == 4

    @classmethod
    def constant(cls, width, height, value):
        value = np.atleast_1d(np.asarray(value, dtype=np.float32))
        data = np.empty((height, width, value.size), dtype=np.float32)
        data[...] = value
        return cls(data)

    def identical(self, other: "ImageBuffer") -> bool:
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)


def finish(arr) -> np.ndarray:
    """Clamp to [0, 1], zero out NaN and snap to the 2**-24 grid, as float32."""
    a = np.nan_to_num(np.asarray(arr, dtype=np.float64), nan=0.0, posinf=1.0, neginf=0.0)
    a = np.clip(a, 0.0, 1.0)
    return (np.rint(a * GRID) / GRID).astype(np.float32)


def to_rgba(buf: ImageBuffer) -> ImageBuffer:
    if buf.is_color:
        return buf
    g = buf.data[..., 0]
    return ImageBuffer(np.stack([g, g, g, np.ones_like(g)], axis=-1))


def _box_weights(n_in, n_out):
    """Row-stochastic area-overlap weights mapping n_in samples to n_out."""
    w = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / scale


def resample_box(buf: ImageBuffer, width: int, height: int) -> ImageBuffer:
    """Area-average (box filter) resample to ``width`` x ``height``."""
    if (buf.width, buf.height) == (width, height):
        return buf
    wy = _box_weights(buf.height, height)
    wx = _box_weights(buf.width, width)
    d = buf.data.astype(np.float64)
    out = np.tensordot(wy, d, axes=(1, 0))                          # (h, W, c)
    out = np.tensordot(out, wx, axes=(1, 1)).transpose(0, 2, 1)     # (h, w, c)
    return ImageBuffer(np.clip(out, 0.0, 1.0).astype(np.float32))


def quantize8(buf: ImageBuffer) -> np.ndarray:
    return np.floor(np.clip(buf.data.astype(np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def export_png(buf: ImageBuffer, path) -> None:
    """Write an 8-bit grayscale or RGBA PNG; samples = round(clamp(x) * 255)."""
    q = quantize8(buf)
    img = Image.fromarray(q[..., 0] if q.shape[2] == 1 else q)
    img.save(path, format="PNG")


def png_bytes(buf: ImageBuffer) -> bytes:
    import io

    out = io.BytesIO()
    export_png(buf, out)
    return out.getvalue()


def load_png(path) -> ImageBuffer:
    img = Image.open(path)
    if img.mode in ("L", "I", "I;16", "1"):
        a = np.asarray(img.convert("L"), dtype=np.float32)[..., None] / 255.0
    else:
        a = np.asarray(img.convert("RGBA"), dtype=np.float32) / 255.0
    return ImageBuffer(a.astype(np.float32))
