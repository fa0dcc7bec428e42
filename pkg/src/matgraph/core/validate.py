"""Structural validation, incremental appends and topological depth."""
from __future__ import annotations

import math
from types import MappingProxyType

from .model import (
    ANY, CHANNEL_TYPES, Connection, ErrorCode, Free, InputSlot, Issue, Match,
    MaterialGraph, NodeDef, NodeTypeSpec, OutputSlot, SignalType, ValidationReport,
)
from .registry import SUBGRAPH, registry_builtin

E = ErrorCode


def conform(ps, value):
    """Check ``value`` against a ParamSpec; return (ok, normalized value)."""
    def scalar(x):
        if ps.kind == "bool":
            return isinstance(x, bool), x
        if ps.kind == "enum":
            return isinstance(x, str) and x in ps.choices, x
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            return False, x
        if ps.kind == "int":
            if not isinstance(x, int):
                return False, x
        else:
            x = float(x)
            if not math.isfinite(x):
                return False, x
        if ps.lo is not None and x < ps.lo:
            return False, x
        if ps.hi is not None and x > ps.hi:
            return False, x
        return True, x

    if ps.arity == 1:
        return scalar(value)
    if not isinstance(value, (tuple, list)) or len(value) != ps.arity:
        return False, value
    out = []
    for x in value:
        ok, x = scalar(x)
        if not ok:
            return False, value
        out.append(x)
    return True, tuple(out)


def normalize_params(spec, params):
    """Coerce conforming values (ints for float params, lists to tuples) and
    fill in schema defaults, so equal graphs have equal parameter maps."""
    out = {k: ps.default for k, ps in spec.params.items()} if spec is not None else {}
    for k, v in params.items():
        ps = spec.params.get(k) if spec is not None else None
        if ps is not None:
            ok, nv = conform(ps, v)
            out[k] = nv if ok else v
        else:
            out[k] = tuple(v) if isinstance(v, list) else v
    return out


def subgraph_spec(v: NodeDef) -> NodeTypeSpec:
    """Slots of a subgraph node, derived from its nested graph."""
    inner = v.subgraph or MaterialGraph()
    inputs = tuple(
        InputSlot(n.name, n.output_types.get("output", SignalType.GRAYSCALE))
        for n in inner.nodes if n.type_name == "graph_input"
    )
    outputs = tuple(
        OutputSlot(ch, CHANNEL_TYPES[ch]) for ch in CHANNEL_TYPES if ch in inner.outputs
    )
    return NodeTypeSpec(SUBGRAPH, inputs, outputs, MappingProxyType({}))


def spec_for(v: NodeDef, registry=None):
    if v.type_name == SUBGRAPH:
        return subgraph_spec(v)
    return (registry or registry_builtin()).get(v.type_name)


def resolve_output_types(spec, input_types, declared=None):
    """Resolve each output slot to a concrete SignalType where possible."""
    declared = dict(declared or {})
    if spec is None:
        return declared
    out = {}
    for slot in spec.outputs:
        t = slot.type
        if isinstance(t, SignalType):
            out[slot.name] = t
        elif isinstance(t, Match):
            r = declared.get(slot.name) or input_types.get(t.slot)
            if r is not None:
                out[slot.name] = SignalType(r)
        elif isinstance(t, Free):
            out[slot.name] = SignalType(declared.get(slot.name, t.default))
    return out


def parse_ref(ref):
    if isinstance(ref, tuple):
        return ref
    node, _, slot = ref.partition(".")
    return node, slot


def make_node(name, type_name, params=None, inputs=None, env=None, registry=None,
              declared_outputs=None, subgraph=None):
    """Build a NodeDef, resolving polymorphic output types from ``env``.

    ``inputs`` maps dst slot -> "node.slot" (or a (node, slot) tuple); ``env``
    is a MaterialGraph or a name -> output_types mapping of earlier nodes.
    """
    registry = registry or registry_builtin()
    if isinstance(env, MaterialGraph):
        env = {n.name: n.output_types for n in env.nodes}
    env = env or {}
    conns = tuple(
        Connection(*parse_ref(ref), dst_slot=dst) for dst, ref in (inputs or {}).items()
    )
    proto = NodeDef(name, type_name, subgraph=subgraph)
    spec = spec_for(proto, registry)
    input_types = {}
    for c in conns:
        t = env.get(c.src_node, {}).get(c.src_slot)
        if t is not None:
            input_types[c.dst_slot] = t
    return NodeDef(
        name=name,
        type_name=type_name,
        params=normalize_params(spec, params or {}),
        connections=conns,
        output_types=resolve_output_types(spec, input_types, declared_outputs),
        subgraph=subgraph,
    )


def _expected_input(slot, input_types):
    t = slot.type
    if isinstance(t, SignalType):
        return t
    if isinstance(t, Match):
        return input_types.get(t.slot)
    return None  # ANY


def node_issues(v, env, registry=None, later=frozenset()):
    """Issues for node ``v`` given ``env`` (name -> output types of earlier nodes)."""
    registry = registry or registry_builtin()
    issues = []
    add = lambda code, msg, **kw: issues.append(Issue(code, v.name, msg, **kw))

    if v.name in env:
        add(E.DUPLICATE_NAME, f"node name {v.name!r} already defined")
    if v.type_name == SUBGRAPH:
        if v.subgraph is None:
            add(E.UNKNOWN_TYPE, "subgraph node without nested graph")
            return issues
        for e in validate_graph(v.subgraph, registry).errors:
            issues.append(Issue(e.code, f"{v.name}/{e.where}", e.message, e.slot, e.key))
    spec = spec_for(v, registry)
    if spec is None:
        add(E.UNKNOWN_TYPE, f"unknown node type {v.type_name!r}")
        return issues

    for key, val in v.params.items():
        ps = spec.params.get(key)
        if ps is None:
            add(E.UNKNOWN_PARAM, f"{v.type_name} has no parameter {key!r}", key=key)
        elif not conform(ps, val)[0]:
            add(E.BAD_PARAM_VALUE, f"bad value for {key}: {val!r}", key=key)
    if v.type_name == "gradient_map":
        stops = v.params.get("stops", spec.params["stops"].default)
        if isinstance(stops, int) and not isinstance(stops, bool):
            pos = [v.params.get(f"pos{k}", spec.params[f"pos{k}"].default)
                   for k in range(min(max(stops, 0), 4))]
            if any(not isinstance(p, (int, float)) for p in pos):
                pass  # reported above
            elif any(b < a for a, b in zip(pos, pos[1:])):
                add(E.BAD_PARAM_VALUE, "gradient stop positions must be nondecreasing",
                    key="stops")

    input_types = {}
    bound = set()
    for c in v.connections:
        slot = spec.input(c.dst_slot)
        if slot is None:
            add(E.UNKNOWN_SLOT, f"{v.type_name} has no input slot {c.dst_slot!r}",
                slot=c.dst_slot)
            continue
        if c.dst_slot in bound:
            add(E.UNKNOWN_SLOT, f"input slot {c.dst_slot!r} bound twice", slot=c.dst_slot)
            continue
        bound.add(c.dst_slot)
        if c.src_node in env:
            t = env[c.src_node].get(c.src_slot)
            if t is None:
                add(E.UNKNOWN_SLOT, f"{c.src_node} has no output slot {c.src_slot!r}",
                    slot=c.dst_slot)
            else:
                input_types[c.dst_slot] = SignalType(t)
        elif c.src_node == v.name or c.src_node in later:
            add(E.TOPOLOGY_VIOLATION,
                f"input {c.dst_slot!r} references {c.src_node!r} which is not defined earlier",
                slot=c.dst_slot)
        else:
            add(E.UNKNOWN_SOURCE, f"input {c.dst_slot!r} references undefined node "
                f"{c.src_node!r}", slot=c.dst_slot)
    for slot in spec.inputs:
        if slot.required and slot.name not in bound:
            add(E.UNBOUND_REQUIRED_INPUT, f"required input {slot.name!r} is unbound",
                slot=slot.name)
    for c in v.connections:
        slot = spec.input(c.dst_slot)
        if slot is None or c.dst_slot not in input_types:
            continue
        want = _expected_input(slot, input_types)
        got = input_types[c.dst_slot]
        if want is not None and got != want:
            add(E.TYPE_MISMATCH,
                f"{c.src_node}.{c.src_slot} ({got.value}) -> {v.name}.{c.dst_slot} "
                f"({want.value})", slot=c.dst_slot)

    names = [s.name for s in spec.outputs]
    for key in v.output_types:
        if key not in names:
            add(E.UNKNOWN_SLOT, f"{v.type_name} has no output slot {key!r}", slot=key)
    for slot in spec.outputs:
        have = v.output_types.get(slot.name)
        if have is None:
            add(E.UNKNOWN_SLOT, f"output {slot.name!r} has no resolved type", slot=slot.name)
            continue
        if isinstance(slot.type, SignalType):
            want = slot.type
        elif isinstance(slot.type, Match):
            want = input_types.get(slot.type.slot)
        else:
            want = None
        if want is not None and SignalType(have) != want:
            add(E.TYPE_MISMATCH, f"output {slot.name!r} declared {SignalType(have).value} "
                f"but resolves to {want.value}", slot=slot.name)
    return issues


def binding_issues(g: MaterialGraph, env):
    issues = []
    for ch, (node, slot) in g.outputs.items():
        if ch not in CHANNEL_TYPES:
            issues.append(Issue(E.UNKNOWN_SLOT, ch, f"unknown output channel {ch!r}"))
        elif node not in env:
            issues.append(Issue(E.UNKNOWN_SOURCE, ch, f"binding references undefined node {node!r}"))
        elif slot not in env[node]:
            issues.append(Issue(E.UNKNOWN_SLOT, ch, f"{node} has no output slot {slot!r}"))
        elif SignalType(env[node][slot]) != CHANNEL_TYPES[ch]:
            issues.append(Issue(E.TYPE_MISMATCH, ch,
                                f"{ch} needs {CHANNEL_TYPES[ch].value}, "
                                f"{node}.{slot} is {SignalType(env[node][slot]).value}"))
    for ch, (node, slot) in g.extra_outputs.items():
        if node not in env or slot not in env[node]:
            issues.append(Issue(E.UNKNOWN_SOURCE, ch, f"binding references undefined {node}.{slot}"))
    return issues


def validate_graph(g: MaterialGraph, registry=None) -> ValidationReport:
    """Report every violated graph/node invariant. Pure; never raises."""
    registry = registry or registry_builtin()
    env = {}
    issues = []
    all_names = [v.name for v in g.nodes]
    for i, v in enumerate(g.nodes):
        later = frozenset(all_names[i + 1:])
        issues.extend(node_issues(v, env, registry, later))
        if v.name not in env:
            env[v.name] = dict(v.output_types)
    issues.extend(binding_issues(g, env))
    return ValidationReport(tuple(issues))


def append_node(g: MaterialGraph, v: NodeDef, registry=None):
    """Return ``g`` extended by ``v``, or the ValidationReport for ``v`` alone."""
    env = {n.name: n.output_types for n in g.nodes}
    issues = node_issues(v, env, registry)
    if issues:
        return ValidationReport(tuple(issues))
    return MaterialGraph(g.nodes + (v,), g.outputs, g.extra_outputs)


def topo_positions(g: MaterialGraph) -> dict:
    """Longest-path depth from any generator for every node."""
    depth = {}
    for v in g.nodes:
        srcs = [depth[c.src_node] for c in v.connections if c.src_node in depth]
        depth[v.name] = 1 + max(srcs) if srcs else 0
    return depth
