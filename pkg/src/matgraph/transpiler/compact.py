"""Compact topological text format (``.sbsc``).

Grammar (2-space indentation, one key per line, inline maps/lists only)::

    nodes:
      <name>:
        type: <type_name>
        outputs: {<slot>: <grayscale|color>}   # polymorphic slots only
        params: {<key>: <value>, ...}          # non-default values only
        inputs: {<slot>: <node>.<slot>, ...}   # filters only
        graph:                                 # subgraph nodes only
          nodes:
            ...
          outputs:
            ...
      ...
    outputs:
      <channel>: <node>.<slot>

Values are integers, decimals, ``true``/``false``, bare enum symbols or
``[a, b, c]`` tuples. Node order must be topological; the parser rejects
forward references rather than reordering.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..core import (
    CHANNELS, NAME_RE, SUBGRAPH, MaterialGraph, SignalType, make_node, registry_builtin,
    spec_for, validate_graph,
)
from .errors import ParseError, ParseFailure, SourceSpan
from .values import Ref, ValueSyntaxError, format_map, parse_map, parse_value

LINE_RE = re.compile(r"(?P<key>[a-z_][a-z0-9_]*):(?: (?P<val>\S.*))?\Z")
NODE_FIELDS = ("type", "outputs", "params", "inputs", "graph")


@dataclass
class _Line:
    no: int
    indent: int
    key: str
    val: str
    val_col: int
    offset: int
    raw: str

    def span(self, col=None):
        col = self.indent if col is None else col
        return SourceSpan(self.no, col + 1, self.offset + len(self.raw[:col].encode()))


@dataclass
class _RawNode:
    name: str
    line: _Line
    type: str = None
    outputs: list = field(default_factory=list)
    params: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    graph: "_RawDoc" = None


@dataclass
class _RawDoc:
    nodes: list = field(default_factory=list)
    outputs: list = field(default_factory=list)  # (channel, Ref, line)


class _Stop(Exception):
    pass


class _Parser:
    def __init__(self, text):
        self.text = text
        self.errors = []
        raw = text.split("\n")
        self.eof = SourceSpan(len(raw), len(raw[-1]) + 1, len(text.encode()))
        self.lines = []
        self.i = 0
        self._raw = raw

    def scan(self):
        offset = 0
        for no, s in enumerate(self._raw, 1):
            start = offset
            offset += len(s.encode()) + 1
            body = s.rstrip(" \r")
            if not body:
                continue
            stripped = body.lstrip(" ")
            indent = len(body) - len(stripped)
            probe = _Line(no, indent, "", "", 0, start, s)
            if "\t" in body[: indent + 1]:
                self.syntax(probe.span(0), "tabs are not allowed for indentation")
            if indent % 2:
                self.syntax(probe.span(0), "indentation must be a multiple of two spaces")
            m = LINE_RE.match(stripped)
            if m is None:
                self.syntax(probe.span(indent), f"expected 'key:' or 'key: value', got {stripped!r}")
            val = m.group("val")
            self.lines.append(_Line(no, indent, m.group("key"), val, indent + m.start("val") if val else 0,
                                    start, s))

    def syntax(self, span, msg):
        self.errors.append(ParseError(span, "SYNTAX", msg))
        raise _Stop

    def error(self, span, code, msg, node=None):
        self.errors.append(ParseError(span, code, msg, node))

    def peek(self):
        return self.lines[self.i] if self.i < len(self.lines) else None

    def expect(self, indent, key):
        ln = self.peek()
        if ln is None:
            self.syntax(self.eof, f"unexpected end of document, expected '{key}:'")
        if ln.indent != indent or ln.key != key:
            self.syntax(ln.span(), f"expected '{key}:' at indent {indent}")
        if ln.val is not None:
            self.syntax(ln.span(ln.val_col), f"'{key}:' takes no inline value")
        self.i += 1
        return ln

    def doc(self, indent):
        d = _RawDoc()
        self.expect(indent, "nodes")
        while (ln := self.peek()) is not None and ln.indent == indent + 2:
            d.nodes.append(self.node(ln, indent + 2))
        ln = self.peek()
        if ln is not None and ln.indent > indent:
            self.syntax(ln.span(), "unexpected indentation")
        self.expect(indent, "outputs")
        self.bindings(d, indent + 2)
        return d

    def bindings(self, d, indent):
        seen = set()
        while (ln := self.peek()) is not None and ln.indent >= indent:
            if ln.indent != indent:
                self.syntax(ln.span(), "unexpected indentation")
            self.i += 1
            if ln.val is None:
                self.syntax(ln.span(), f"binding {ln.key!r} needs a value")
            try:
                ref = parse_value(ln.val, ln.val_col)
            except ValueSyntaxError as e:
                self.syntax(ln.span(e.column), str(e))
            if ln.key not in CHANNELS:
                self.error(ln.span(), "UNKNOWN_KEY", f"unknown output channel {ln.key!r}")
            elif ln.key in seen:
                self.error(ln.span(), "DUPLICATE_KEY", f"channel {ln.key!r} bound twice")
            elif not isinstance(ref, Ref):
                self.error(ln.span(ln.val_col), "BAD_VALUE", "binding must be <node>.<slot>")
            else:
                d.outputs.append((ln.key, ref, ln))
            seen.add(ln.key)

    def node(self, head, indent):
        self.i += 1
        if head.val is not None:
            self.syntax(head.span(head.val_col), "node entry takes no inline value")
        if not NAME_RE.match(head.key):
            self.syntax(head.span(), f"invalid node name {head.key!r}")
        n = _RawNode(head.key, head)
        seen = set()
        while (ln := self.peek()) is not None and ln.indent > indent:
            if ln.indent != indent + 2:
                self.syntax(ln.span(), "unexpected indentation")
            self.i += 1
            if ln.key not in NODE_FIELDS:
                self.error(ln.span(), "UNKNOWN_KEY", f"unknown node field {ln.key!r}", n.name)
                self._skip_nested(indent + 2)
                continue
            if ln.key in seen:
                self.error(ln.span(), "DUPLICATE_KEY", f"field {ln.key!r} repeated", n.name)
            seen.add(ln.key)
            if ln.key == "graph":
                if ln.val is not None:
                    self.syntax(ln.span(ln.val_col), "'graph:' takes no inline value")
                n.graph = self.doc(indent + 4)
                continue
            if ln.val is None:
                self.syntax(self.eof if self.peek() is None else ln.span(), f"field {ln.key!r} needs a value")
            if ln.key == "type":
                if not re.fullmatch(r"[a-z_][a-z0-9_]*", ln.val):
                    self.error(ln.span(ln.val_col), "BAD_VALUE", f"bad type name {ln.val!r}", n.name)
                n.type = ln.val
                continue
            try:
                pairs = parse_map(ln.val, ln.val_col)
            except ValueSyntaxError as e:
                self.syntax(ln.span(e.column), str(e))
            keys = set()
            for k, v, col in pairs:
                if k in keys:
                    self.error(ln.span(col), "DUPLICATE_KEY", f"key {k!r} repeated", n.name)
                    continue
                keys.add(k)
                if ln.key == "inputs" and not isinstance(v, Ref):
                    self.error(ln.span(col), "BAD_VALUE", f"input {k!r} must be <node>.<slot>", n.name)
                elif ln.key == "params" and isinstance(v, Ref):
                    self.error(ln.span(col), "BAD_VALUE", f"param {k!r} cannot be a reference", n.name)
                elif ln.key == "outputs" and v not in ("grayscale", "color"):
                    self.error(ln.span(col), "BAD_VALUE", f"output {k!r} must be grayscale or color", n.name)
                else:
                    getattr(n, ln.key).append((k, v))
        if n.type is None:
            span = self.eof if self.peek() is None else head.span()
            self.syntax(span, "node entry has no 'type' field")
        return n

    def _skip_nested(self, indent):
        while (ln := self.peek()) is not None and ln.indent > indent:
            self.i += 1


def _build(doc: _RawDoc, registry, spans):
    env = {}
    nodes = []
    for rn in doc.nodes:
        spans.setdefault(rn.name, rn.line.span())
        sub = _build(rn.graph, registry, {}) if rn.graph is not None else None
        v = make_node(
            rn.name, rn.type, dict(rn.params),
            {k: (r.node, r.slot) for k, r in rn.inputs}, env, registry,
            declared_outputs={k: SignalType(t) for k, t in rn.outputs}, subgraph=sub,
        )
        nodes.append(v)
        env.setdefault(v.name, v.output_types)
    outputs = {}
    for ch, ref, ln in doc.outputs:
        spans.setdefault(ch, ln.span())
        outputs[ch] = (ref.node, ref.slot)
    return MaterialGraph(tuple(nodes), outputs)


def _parse(text, registry, indent=0, entry="doc"):
    p = _Parser(text)
    try:
        p.scan()
        if entry == "doc":
            raw = p.doc(indent)
            if p.peek() is not None:
                p.syntax(p.peek().span(), "trailing content after outputs section")
        elif entry == "node":
            first = p.peek()
            if first is None:
                p.syntax(p.eof, "empty node fragment")
            raw = p.node(first, first.indent)
            if p.peek() is not None:
                p.syntax(p.peek().span(), "fragment must contain exactly one node entry")
        else:
            first = p.peek()
            base = first.indent if first else 0
            raw = _RawDoc()
            p.expect(base, "outputs")
            p.bindings(raw, base + 2)
            if p.peek() is not None:
                p.syntax(p.peek().span(), "trailing content after outputs block")
    except _Stop:
        raise ParseFailure(p.errors) from None
    if p.errors:
        raise ParseFailure(p.errors)
    return raw


def parse_compact_raw(text: str, registry=None) -> MaterialGraph:
    """Syntax-level parse; the graph may still violate graph invariants."""
    registry = registry or registry_builtin()
    return _build(_parse(text, registry), registry, {})


def parse_compact(text: str, registry=None) -> MaterialGraph:
    """Parse a compact document into a valid graph or raise ParseFailure."""
    registry = registry or registry_builtin()
    spans = {}
    g = _build(_parse(text, registry), registry, spans)
    report = validate_graph(g, registry)
    if not report.ok:
        errs = []
        for issue in report.errors:
            top = issue.where.split("/")[0]
            span = spans.get(top, SourceSpan(1, 1, 0))
            errs.append(ParseError(span, "STRUCTURE", f"{issue.code.value}: {issue.message}", issue.where))
        raise ParseFailure(errs)
    return g


def parse_node_fragment(text: str, env=None, registry=None):
    """Parse one node entry (as it appears under ``nodes:``) against ``env``."""
    registry = registry or registry_builtin()
    rn = _parse(text, registry, entry="node")
    sub = _build(rn.graph, registry, {}) if rn.graph is not None else None
    return make_node(
        rn.name, rn.type, dict(rn.params), {k: (r.node, r.slot) for k, r in rn.inputs},
        env, registry, declared_outputs={k: SignalType(t) for k, t in rn.outputs}, subgraph=sub,
    )


def parse_outputs_block(text: str) -> dict:
    """Parse an ``outputs:`` block into channel -> (node, slot)."""
    raw = _parse(text, None, entry="outputs")
    return {ch: (r.node, r.slot) for ch, r, _ in raw.outputs}


def _node_lines(v, registry, pad, mixed):
    lines = [f"{pad}{v.name}:", f"{pad}  type: {v.type_name}"]
    spec = spec_for(v, registry)
    if spec is None:
        outs = [(k, SignalType(t).value) for k, t in v.output_types.items()]
    else:
        outs = [(s.name, SignalType(v.output_types[s.name]).value) for s in spec.outputs
                if s.name in v.output_types and (mixed or s.polymorphic)]
    if outs:
        lines.append(f"{pad}  outputs: {format_map(outs)}")
    if not mixed:
        pairs = []
        known = spec.params if spec is not None else {}
        for k, ps in known.items():
            if k in v.params and v.params[k] != ps.default:
                pairs.append((k, v.params[k]))
        pairs += sorted((k, x) for k, x in v.params.items() if k not in known)
        if pairs:
            lines.append(f"{pad}  params: {format_map(pairs)}")
    if v.connections:
        order = [s.name for s in spec.inputs] if spec is not None else []
        conns = sorted(v.connections, key=lambda c: (order.index(c.dst_slot) if c.dst_slot in order
                                                     else len(order), c.dst_slot))
        lines.append(f"{pad}  inputs: {format_map((c.dst_slot, Ref(c.src_node, c.src_slot)) for c in conns)}")
    if v.subgraph is not None:
        lines.append(f"{pad}  graph:")
        lines += _doc_lines(v.subgraph, registry, pad + "    ", mixed)
    if mixed:
        lines.append(f"{pad}  img: <img>")
    return lines


def _doc_lines(g, registry, pad, mixed=False, bindings=True):
    lines = [f"{pad}nodes:"]
    for v in g.nodes:
        lines += _node_lines(v, registry, pad + "  ", mixed)
    if bindings:
        lines.append(f"{pad}outputs:")
        for ch in CHANNELS:
            if ch in g.outputs:
                node, slot = g.outputs[ch]
                lines.append(f"{pad}  {ch}: {node}.{slot}")
    return lines


def emit_compact(g: MaterialGraph, registry=None) -> str:
    """Canonical compact text for ``g``."""
    if g.extra_outputs:
        raise ValueError(
            f"non-PBR outputs {sorted(g.extra_outputs)} cannot be written in the compact "
            "format; run preprocessing first")
    registry = registry or registry_builtin()
    return "\n".join(_doc_lines(g, registry, "")) + "\n"


def emit_node(v, registry=None) -> str:
    """One node entry as it appears under ``nodes:`` (2-space base indent)."""
    return "\n".join(_node_lines(v, registry or registry_builtin(), "  ", False)) + "\n"


def emit_outputs_block(outputs: dict) -> str:
    lines = ["outputs:"]
    for ch in CHANNELS:
        if ch in outputs:
            node, slot = outputs[ch]
            lines.append(f"  {ch}: {node}.{slot}")
    return "\n".join(lines) + "\n"


def emit_mixed(g: MaterialGraph, registry=None) -> str:
    """Program text for mixed conditioning: no params, typed outputs, image markers."""
    return "\n".join(_doc_lines(g, registry or registry_builtin(), "", mixed=True, bindings=False)) + "\n"
