"""Dataset standardization: flatten subgraphs, prune to PBR outputs, filter."""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .core import CHANNELS, SUBGRAPH, Connection, MaterialGraph


class Reason(str, Enum):
    TOO_MANY_NODES = "TOO_MANY_NODES"
    EMBEDDED_BITMAP = "EMBEDDED_BITMAP"
    EMBEDDED_SVG = "EMBEDDED_SVG"
    NO_PBR_OUTPUTS = "NO_PBR_OUTPUTS"


@dataclass(frozen=True)
class FilterVerdict:
    reasons: tuple = ()

    @property
    def accepted(self) -> bool:
        return not self.reasons


class PreprocessError(Exception):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


def prune_to_outputs(g: MaterialGraph) -> MaterialGraph:
    """Keep only nodes that feed one of the five PBR channels."""
    bound = {ch: r for ch, r in g.outputs.items() if ch in CHANNELS}
    if not bound:
        raise PreprocessError(Reason.NO_PBR_OUTPUTS.value, "graph binds none of the PBR channels")
    idx = g.index()
    keep = set()
    frontier = [node for node, _ in bound.values()]
    while frontier:
        n = frontier.pop()
        if n in keep:
            continue
        keep.add(n)
        frontier.extend(c.src_node for c in idx[n].connections)
    return MaterialGraph(tuple(v for v in g.nodes if v.name in keep), dict(bound))


def flatten(g: MaterialGraph) -> MaterialGraph:
    """Inline every subgraph node; inner nodes become ``<outer>__<inner>``."""
    if not any(v.type_name == SUBGRAPH for v in g.nodes):
        return g
    nodes = []
    alias = {}  # (node, slot) of a removed subgraph output -> its real source

    def resolve(ref):
        while ref in alias:
            ref = alias[ref]
        return ref

    def rewired(v, conns):
        return replace(v, connections=tuple(conns))

    for v in g.nodes:
        conns = []
        for c in v.connections:
            node, slot = resolve((c.src_node, c.src_slot))
            conns.append(Connection(node, slot, c.dst_slot))
        if v.type_name != SUBGRAPH:
            nodes.append(rewired(v, conns) if tuple(conns) != v.connections else v)
            continue
        inner = flatten(v.subgraph)
        outer_src = {c.dst_slot: (c.src_node, c.src_slot) for c in conns}
        prefix = v.name + "__"
        local = {}
        for u in inner.nodes:
            if u.type_name == "graph_input":
                if u.name not in outer_src:
                    # only a problem if something actually reads it
                    local[(u.name, "output")] = None
                else:
                    local[(u.name, "output")] = outer_src[u.name]
                continue
            inner_conns = []
            for c in u.connections:
                key = (c.src_node, c.src_slot)
                if key in local:
                    if local[key] is None:
                        raise PreprocessError("STRUCTURE", f"subgraph {v.name!r} input "
                                              f"{c.src_node!r} is not connected")
                    src = local[key]
                else:
                    src = (prefix + c.src_node, c.src_slot)
                inner_conns.append(Connection(src[0], src[1], c.dst_slot))
            for slot in u.output_types:
                local[(u.name, slot)] = (prefix + u.name, slot)
            nodes.append(replace(u, name=prefix + u.name, connections=tuple(inner_conns)))
        for ch, ref in inner.outputs.items():
            src = local.get(tuple(ref))
            if src is None:
                raise PreprocessError("STRUCTURE", f"subgraph {v.name!r} output {ch!r} is unbound")
            alias[(v.name, ch)] = src
    outputs = {ch: resolve(tuple(r)) for ch, r in g.outputs.items()}
    extra = {ch: resolve(tuple(r)) for ch, r in g.extra_outputs.items()}
    return MaterialGraph(tuple(nodes), outputs, extra)


def _types_anywhere(g: MaterialGraph):
    for v in g.nodes:
        yield v.type_name
        if v.subgraph is not None:
            yield from _types_anywhere(v.subgraph)


def apply_filters(g: MaterialGraph, max_nodes: int = 128) -> FilterVerdict:
    """Every applicable rejection reason, in a fixed order."""
    types = set(_types_anywhere(g))
    reasons = []
    if len(g.nodes) > max_nodes:
        reasons.append(Reason.TOO_MANY_NODES)
    if "bitmap" in types:
        reasons.append(Reason.EMBEDDED_BITMAP)
    if "svg" in types:
        reasons.append(Reason.EMBEDDED_SVG)
    if not any(ch in CHANNELS for ch in g.outputs):
        reasons.append(Reason.NO_PBR_OUTPUTS)
    return FilterVerdict(tuple(reasons))


def standardize(g: MaterialGraph, max_nodes: int = 128):
    """flatten -> prune -> filter. Returns the processed graph, or the FilterVerdict."""
    flat = flatten(g)
    if any(ch in CHANNELS for ch in flat.outputs):
        flat = prune_to_outputs(flat)
    verdict = apply_filters(flat, max_nodes)
    return flat if verdict.accepted else verdict
