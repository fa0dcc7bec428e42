"""Node thumbnails, layered layout and whole-graph cards."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import CHANNELS, MaterialGraph, spec_for, topo_positions
from ..engine import ImageBuffer, resample_box
from .font import CELL, draw_text

THUMB = 140
LABEL_CHARS = 22
CELL_W = LABEL_CHARS * CELL          # 176
CELL_H = 2 * (CELL + 2) + THUMB       # two label lines + thumbnail
GAP_X = 56
GAP_Y = 24
MARGIN = 16
TERMINAL_W = 12 * CELL

BACKGROUND = (0.94, 0.94, 0.94, 1.0)
INK = (0.05, 0.05, 0.05, 1.0)
EDGE = (0.25, 0.30, 0.45, 1.0)
FRAME = (0.55, 0.55, 0.55, 1.0)


class VizError(Exception):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


def render_thumbnail(buf: ImageBuffer, size: int = THUMB) -> ImageBuffer:
    """Box-resample to size x size RGBA; grayscale is replicated, alpha set to 1."""
    small = resample_box(buf, size, size).data
    rgb = np.repeat(small, 3, axis=2) if small.shape[2] == 1 else small[..., :3]
    alpha = np.ones(rgb.shape[:2] + (1,), dtype=np.float32)
    return ImageBuffer(np.concatenate([rgb, alpha], axis=2).astype(np.float32))


@dataclass(frozen=True)
class LayoutPlan:
    positions: dict          # name -> (column, row)
    cell_w: int
    cell_h: int
    width: int
    height: int

    def origin(self, name):
        col, row = self.positions[name]
        return (MARGIN + col * (self.cell_w + GAP_X), MARGIN + row * (self.cell_h + GAP_Y))


def layout(g: MaterialGraph) -> LayoutPlan:
    """Column = topological depth; rows by barycenter of source rows, ties by node order."""
    depth = topo_positions(g)
    order = {v.name: i for i, v in enumerate(g.nodes)}
    cols = {}
    for v in g.nodes:
        cols.setdefault(depth[v.name], []).append(v)
    pos = {}
    for d in sorted(cols):
        def key(v):
            srcs = [pos[c.src_node][1] for c in v.connections if c.src_node in pos]
            bary = sum(srcs) / len(srcs) if srcs else -1.0
            return (bary, order[v.name])
        for row, v in enumerate(sorted(cols[d], key=key)):
            pos[v.name] = (d, row)
    n_cols = (max(cols) + 1) if cols else 0
    n_rows = max((len(c) for c in cols.values()), default=1)
    width = 2 * MARGIN + n_cols * (CELL_W + GAP_X) + TERMINAL_W
    height = 2 * MARGIN + max(n_rows * (CELL_H + GAP_Y), len(CHANNELS) * 3 * CELL)
    return LayoutPlan(pos, CELL_W, CELL_H, width, height)


def _line(canvas, x0, y0, x1, y1, color):
    n = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
    xs = np.rint(np.linspace(x0, x1, n)).astype(int)
    ys = np.rint(np.linspace(y0, y1, n)).astype(int)
    h, w = canvas.shape[:2]
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    canvas[ys[ok], xs[ok]] = color


def _arrow(canvas, x0, y0, x1, y1, color):
    _line(canvas, x0, y0, x1, y1, color)
    dx, dy = x1 - x0, y1 - y0
    norm = max(np.hypot(dx, dy), 1e-9)
    ux, uy = dx / norm, dy / norm
    for side in (-1, 1):
        bx = x1 - 7 * ux + side * 4 * -uy
        by = y1 - 7 * uy + side * 4 * ux
        _line(canvas, bx, by, x1, y1, color)


def _rect(canvas, x, y, w, h, color, fill=False):
    if fill:
        canvas[y:y + h, x:x + w] = color
        return
    canvas[y, x:x + w] = color
    canvas[y + h - 1, x:x + w] = color
    canvas[y:y + h, x] = color
    canvas[y:y + h, x + w - 1] = color


def _label(text):
    return text if len(text) <= LABEL_CHARS else text[: LABEL_CHARS - 1] + "~"


def render_graph_card(g: MaterialGraph, cache, registry=None) -> ImageBuffer:
    """One cell per node (name, type, thumbnail), arrowed edges and output terminals."""
    plan = layout(g)
    width = plan.width
    canvas = np.empty((plan.height, width, 4), dtype=np.float32)
    canvas[:] = BACKGROUND

    thumb_box = {}
    for v in g.nodes:
        if v.name not in cache:
            raise VizError("MISSING_PREVIEW", f"no preview for node {v.name!r}")
        x, y = plan.origin(v.name)
        thumb_box[v.name] = (x + (plan.cell_w - THUMB) // 2, y + 2 * (CELL + 2))

    # edges first so cells are drawn over any edge passing behind them
    for v in g.nodes:
        spec = spec_for(v, registry)
        slots = [s.name for s in spec.inputs] if spec is not None else []
        n_in = max(len(slots), 1)
        tx, ty = thumb_box[v.name]
        for c in v.connections:
            k = slots.index(c.dst_slot) if c.dst_slot in slots else 0
            sx, sy = thumb_box[c.src_node]
            _arrow(canvas, sx + THUMB + 1, sy + THUMB // 2,
                   tx - 2, ty + (k + 1) * THUMB // (n_in + 1), EDGE)
    term_x = width - MARGIN - TERMINAL_W + CELL
    for k, ch in enumerate(CHANNELS):
        my = MARGIN + k * 3 * CELL
        bound = ch in g.outputs
        if bound:
            sx, sy = thumb_box[g.outputs[ch][0]]
            _arrow(canvas, sx + THUMB + 1, sy + THUMB // 2, term_x - 2, my + CELL // 2, EDGE)
        _rect(canvas, term_x, my, CELL, CELL, INK, fill=bound)
        draw_text(canvas, term_x + CELL + 4, my, ch, INK)

    for v in g.nodes:
        x, y = plan.origin(v.name)
        tx, ty = thumb_box[v.name]
        canvas[y:y + 2 * (CELL + 2), x:x + plan.cell_w] = BACKGROUND
        draw_text(canvas, x, y, _label(v.name), INK)
        draw_text(canvas, x, y + CELL + 2, _label(v.type_name), EDGE)
        canvas[ty:ty + THUMB, tx:tx + THUMB] = render_thumbnail(cache[v.name]).data
        _rect(canvas, tx - 1, ty - 1, THUMB + 2, THUMB + 2, FRAME)
    return ImageBuffer(canvas)
