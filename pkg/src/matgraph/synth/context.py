"""Proposer conditioning: mixed text+previews, graph card, or text only."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Optional

from ..core import MaterialGraph
from ..engine import ImageBuffer, resample_box
from ..transpiler import emit_compact, emit_mixed
from ..viz import render_graph_card, render_thumbnail

PATCH = 28
TOKEN_BUDGET = 6144


class Mode(str, Enum):
    MIXED = "mixed"
    GRAPH = "graph"
    TEXT_ONLY = "text"


class ContextError(Exception):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class ProposerContext:
    """What a proposer sees at one step.

    ``image_slots`` is built on first access, so test-double proposers that
    only look at ``graph`` never pay for rendering thumbnails or cards.
    """
    mode: Mode
    program_text: str
    graph: MaterialGraph = field(default_factory=MaterialGraph)
    step: int = 0
    target: Optional[ImageBuffer] = None
    position: int = 0     # model nodes on the active path
    images: Callable[[], list] = field(default=list, repr=False)

    @cached_property
    def image_slots(self) -> list:
        slots = list(self.images())
        return ([self.target] if self.target is not None else []) + slots


def token_estimate(width: int, height: int, patch: int = PATCH) -> int:
    return math.ceil(width / patch) * math.ceil(height / patch)


def fit_to_budget(buf: ImageBuffer, budget: int = TOKEN_BUDGET, patch: int = PATCH) -> ImageBuffer:
    """Downscale (aspect preserved) until the patch-token estimate fits ``budget``."""
    w, h = buf.width, buf.height
    if token_estimate(w, h, patch) <= budget:
        return buf
    f = math.sqrt(budget * patch * patch / (w * h))
    while True:
        nw, nh = max(1, int(w * f)), max(1, int(h * f))
        if token_estimate(nw, nh, patch) <= budget:
            return resample_box(buf, nw, nh)
        f *= 0.99


def _check(g, cache):
    for v in g.nodes:
        if v.name not in cache:
            raise ContextError("MISSING_PREVIEW", f"no preview for node {v.name!r}")


def serialize_mixed(g: MaterialGraph, cache, target=None, step=0) -> ProposerContext:
    _check(g, cache)
    return ProposerContext(
        Mode.MIXED, emit_mixed(g), g, step, target,
        images=lambda: [render_thumbnail(cache[v.name]) for v in g.nodes],
    )


def serialize_graph_mode(g: MaterialGraph, cache, budget=TOKEN_BUDGET, target=None,
                         step=0) -> ProposerContext:
    _check(g, cache)
    return ProposerContext(
        Mode.GRAPH, "", g, step, target,
        images=lambda: [fit_to_budget(render_graph_card(g, cache), budget)],
    )


def serialize_text(g: MaterialGraph, target=None, step=0) -> ProposerContext:
    """Full compact text of the nodes so far (params included), no bindings."""
    text = emit_compact(MaterialGraph(g.nodes))
    text = text[: -len("outputs:\n")]
    return ProposerContext(Mode.TEXT_ONLY, text, g, step, target)


def build_context(mode: Mode, g: MaterialGraph, cache, target=None, step=0, budget=TOKEN_BUDGET):
    mode = Mode(mode)
    if mode is Mode.MIXED:
        return serialize_mixed(g, cache, target, step)
    if mode is Mode.GRAPH:
        return serialize_graph_mode(g, cache, budget, target, step)
    return serialize_text(g, target, step)
