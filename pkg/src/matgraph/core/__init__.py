from .model import (
    ANY, CHANNELS, CHANNEL_TYPES, NAME_RE, Connection, ErrorCode, Free, InputSlot,
    Issue, Match, MaterialGraph, NodeDef, NodeTypeSpec, OutputSlot, ParamSpec,
    SignalType, ValidationReport,
)
from .registry import EVALUABLE, GENERATORS, SUBGRAPH, registry_builtin
from .validate import (
    append_node, conform, make_node, node_issues, resolve_output_types, spec_for,
    subgraph_spec, topo_positions, validate_graph,
)

__all__ = [
    "ANY", "CHANNELS", "CHANNEL_TYPES", "NAME_RE", "Connection", "ErrorCode", "Free",
    "InputSlot", "Issue", "Match", "MaterialGraph", "NodeDef", "NodeTypeSpec",
    "OutputSlot", "ParamSpec", "SignalType", "ValidationReport", "EVALUABLE",
    "GENERATORS", "SUBGRAPH", "registry_builtin", "append_node", "conform",
    "make_node", "node_issues", "resolve_output_types", "spec_for", "subgraph_spec",
    "topo_positions", "validate_graph",
]
