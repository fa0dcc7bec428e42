from ..core import MaterialGraph, SignalType
from .compact import (
    emit_compact, emit_mixed, emit_node, emit_outputs_block, parse_compact, parse_compact_raw,
    parse_node_fragment, parse_outputs_block,
)
from .errors import ParseError, ParseFailure, SourceSpan
from .verbose import emit_verbose, parse_verbose


def compression_ratio(g: MaterialGraph, registry=None) -> float:
    """1 - |compact| / |verbose| in UTF-8 bytes."""
    small = len(emit_compact(g, registry).encode("utf-8"))
    big = len(emit_verbose(g, registry).encode("utf-8"))
    return 1.0 - small / big


def canonical_form(g: MaterialGraph):
    """Hashable structure used for graph equality (connection order ignored)."""
    def node(v):
        return (
            v.name, v.type_name,
            tuple(sorted((k, repr(x)) for k, x in v.params.items())),
            tuple(sorted((c.dst_slot, c.src_node, c.src_slot) for c in v.connections)),
            tuple(sorted((k, SignalType(t).value) for k, t in v.output_types.items())),
            canonical_form(v.subgraph) if v.subgraph is not None else None,
        )
    return (
        tuple(node(v) for v in g.nodes),
        tuple(sorted((k, tuple(r)) for k, r in g.outputs.items())),
        tuple(sorted((k, tuple(r)) for k, r in g.extra_outputs.items())),
    )


def graphs_equal(a: MaterialGraph, b: MaterialGraph) -> bool:
    return canonical_form(a) == canonical_form(b)


__all__ = [
    "emit_compact", "emit_mixed", "emit_node", "emit_outputs_block", "parse_compact",
    "parse_compact_raw", "parse_node_fragment", "parse_outputs_block", "ParseError",
    "ParseFailure", "SourceSpan", "emit_verbose", "parse_verbose", "compression_ratio",
    "canonical_form", "graphs_equal",
]
