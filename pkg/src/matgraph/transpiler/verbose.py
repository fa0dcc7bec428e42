"""Verbose XML authoring format (``.sbsv.xml``).

Every node carries a GUID, an editor position, one ``<suboutput>`` per output
slot (with its own uid) and an explicit ``<param>`` for every schema
parameter, defaults included. Connections repeat the source output's uid next
to its name. GUIDs, uids and positions are regenerated on emit and ignored on
parse.
Node order in the document is free; the parser sorts topologically with ties
broken by document order.
"""
from __future__ import annotations

import math
import uuid
from dataclasses import dataclass, field
from xml.parsers import expat
from xml.sax.saxutils import quoteattr

from ..core import (
    CHANNELS, NAME_RE, SUBGRAPH, MaterialGraph, SignalType, make_node, registry_builtin,
    spec_for, topo_positions, validate_graph,
)
from .errors import ParseError, ParseFailure, SourceSpan
from .values import format_scalar

RESOURCE_KINDS = ("bitmap", "svg")
_GUID_NS = uuid.UUID("5c6f3d1e-8b0a-4f57-9d7e-2a41c0b7e9a3")


@dataclass
class _El:
    tag: str
    attrs: dict
    span: SourceSpan
    children: list = field(default_factory=list)


def _xml_tree(text: str) -> _El:
    data = text.encode("utf-8")
    line_starts = [0]
    for i, b in enumerate(data):
        if b == 0x0A:
            line_starts.append(i + 1)
    p = expat.ParserCreate("UTF-8")
    root = _El("#doc", {}, SourceSpan(1, 1, 0))
    stack = [root]

    def start(tag, attrs):
        off = p.CurrentByteIndex
        el = _El(tag, dict(attrs), SourceSpan(p.CurrentLineNumber, p.CurrentColumnNumber + 1, off))
        stack[-1].children.append(el)
        stack.append(el)

    def end(tag):
        stack.pop()

    def chars(s):
        if s.strip():
            raise _TextContent(p.CurrentLineNumber, p.CurrentColumnNumber, p.CurrentByteIndex)

    p.StartElementHandler = start
    p.EndElementHandler = end
    p.CharacterDataHandler = chars
    try:
        p.Parse(data, True)
    except expat.ExpatError as e:
        off = p.ErrorByteIndex if p.ErrorByteIndex >= 0 else len(data)
        raise ParseFailure([ParseError(SourceSpan(e.lineno, e.offset + 1, off), "SYNTAX",
                                       expat.ErrorString(e.code))]) from None
    except _TextContent as e:
        raise ParseFailure([ParseError(SourceSpan(e.args[0], e.args[1] + 1, e.args[2]), "SYNTAX",
                                       "unexpected text content")]) from None
    return root


class _TextContent(Exception):
    pass


def _kind_of(value):
    x = value[0] if isinstance(value, tuple) and value else value
    if isinstance(x, bool):
        return "bool"
    if isinstance(x, int):
        return "int"
    if isinstance(x, float):
        return "float"
    return "enum"


def _format_param(value):
    if isinstance(value, tuple):
        return ",".join(format_scalar(x) for x in value)
    return format_scalar(value)


def _parse_scalar(kind, s):
    if kind == "int":
        return int(s)
    if kind == "float":
        x = float(s)
        if not math.isfinite(x):
            raise ValueError("non-finite float")
        return x
    if kind == "bool":
        if s not in ("true", "false"):
            raise ValueError("bool must be true or false")
        return s == "true"
    if kind == "enum":
        if not s or not s.replace("_", "a").isalnum():
            raise ValueError("bad enum symbol")
        return s
    raise ValueError(f"unknown param kind {kind!r}")


def _parse_param(kind, text):
    parts = text.split(",")
    if len(parts) == 1:
        return _parse_scalar(kind, parts[0].strip())
    return tuple(_parse_scalar(kind, x.strip()) for x in parts)


class _Reader:
    def __init__(self, registry):
        self.registry = registry
        self.errors = []

    def err(self, el, code, msg, node=None):
        self.errors.append(ParseError(el.span, code, msg, node))

    def attr(self, el, name, node=None):
        v = el.attrs.get(name)
        if v is None:
            self.err(el, "STRUCTURE", f"<{el.tag}> needs attribute {name!r}", node)
        return v

    def check_attrs(self, el, allowed, node=None):
        for a in el.attrs:
            if a not in allowed:
                self.err(el, "UNKNOWN_KEY", f"unknown attribute {a!r} on <{el.tag}>", node)

    def material(self, el) -> MaterialGraph:
        self.check_attrs(el, ("format", "version"))
        raw = []  # (name, type, params, inputs, declared, sub, el)
        outputs, extra = {}, {}
        for ch in el.children:
            if ch.tag == "metadata":
                continue
            if ch.tag in ("node", "resource"):
                item = self.node(ch)
                if item is not None:
                    raw.append(item)
            elif ch.tag == "outputs":
                self.bindings(ch, outputs, extra)
            else:
                self.err(ch, "UNKNOWN_KEY", f"unknown element <{ch.tag}>")
        order = self.toposort(raw)
        env = {}
        nodes = []
        for k in order:
            name, tname, params, inputs, declared, sub, _ = raw[k]
            v = make_node(name, tname, params, inputs, env, self.registry,
                          declared_outputs=declared, subgraph=sub)
            nodes.append(v)
            env.setdefault(name, v.output_types)
        self.spans = {item[0]: item[6].span for item in raw}
        return MaterialGraph(tuple(nodes), outputs, extra)

    def toposort(self, raw):
        """Stable Kahn sort: repeatedly take the earliest node whose sources are placed."""
        index = {}
        for k, item in enumerate(raw):
            index.setdefault(item[0], k)
        deps = []
        for item in raw:
            deps.append({index[src] for src, _ in item[3].values() if src in index and src != item[0]})
        placed = []
        done = set()
        pending = list(range(len(raw)))
        while pending:
            for pos, k in enumerate(pending):
                if deps[k] <= done:
                    placed.append(k)
                    done.add(k)
                    del pending[pos]
                    break
            else:
                names = ", ".join(raw[k][0] for k in pending)
                self.err(raw[pending[0]][6], "STRUCTURE", f"cycle among nodes: {names}", raw[pending[0]][0])
                placed.extend(pending)
                break
        return placed

    def node(self, el):
        if el.tag == "resource":
            self.check_attrs(el, ("name", "kind", "guid", "x", "y"))
            name = self.attr(el, "name")
            tname = self.attr(el, "kind")
            if tname is not None and tname not in RESOURCE_KINDS:
                self.err(el, "BAD_VALUE", f"unknown resource kind {tname!r}", name)
        else:
            self.check_attrs(el, ("name", "type", "guid", "x", "y"))
            name = self.attr(el, "name")
            tname = self.attr(el, "type")
        if name is None or tname is None:
            return None
        if not NAME_RE.match(name):
            self.err(el, "BAD_VALUE", f"invalid node name {name!r}")
            return None
        params, inputs, declared, sub = {}, {}, {}, None
        for ch in el.children:
            if ch.tag == "param":
                self.check_attrs(ch, ("name", "kind", "value"), name)
                key, kind, text = (self.attr(ch, a, name) for a in ("name", "kind", "value"))
                if None in (key, kind, text):
                    continue
                if key in params:
                    self.err(ch, "DUPLICATE_KEY", f"param {key!r} repeated", name)
                    continue
                try:
                    params[key] = _parse_param(kind, text)
                except ValueError as e:
                    self.err(ch, "BAD_VALUE", f"param {key!r}: {e}", name)
            elif ch.tag == "connect":
                self.check_attrs(ch, ("input", "from", "from_uid"), name)
                slot, src = self.attr(ch, "input", name), self.attr(ch, "from", name)
                if slot is None or src is None:
                    continue
                if slot in inputs:
                    self.err(ch, "DUPLICATE_KEY", f"input {slot!r} connected twice", name)
                    continue
                ref = self.ref(ch, src, name)
                if ref is not None:
                    inputs[slot] = ref
            elif ch.tag == "suboutput":
                self.check_attrs(ch, ("name", "type", "uid"), name)
                slot, t = self.attr(ch, "name", name), self.attr(ch, "type", name)
                if slot is None or t is None:
                    continue
                if t not in ("grayscale", "color"):
                    self.err(ch, "BAD_VALUE", f"output type must be grayscale or color, got {t!r}", name)
                    continue
                declared[slot] = SignalType(t)
            elif ch.tag == "subgraph":
                mats = [m for m in ch.children if m.tag == "material"]
                if len(mats) != 1 or len(ch.children) != 1:
                    self.err(ch, "STRUCTURE", "<subgraph> must contain exactly one <material>", name)
                    continue
                sub = self.material(mats[0])
            else:
                self.err(ch, "UNKNOWN_KEY", f"unknown element <{ch.tag}>", name)
        return name, tname, params, inputs, declared, sub, el

    def ref(self, el, text, node=None):
        src, dot, slot = text.partition(".")
        if not dot or not src or not slot:
            self.err(el, "BAD_VALUE", f"reference must be <node>.<slot>, got {text!r}", node)
            return None
        return src, slot

    def bindings(self, el, outputs, extra):
        for ch in el.children:
            if ch.tag != "output":
                self.err(ch, "UNKNOWN_KEY", f"unknown element <{ch.tag}>")
                continue
            self.check_attrs(ch, ("channel", "from"))
            channel, src = self.attr(ch, "channel"), self.attr(ch, "from")
            if channel is None or src is None:
                continue
            if channel in outputs or channel in extra:
                self.err(ch, "DUPLICATE_KEY", f"channel {channel!r} bound twice")
                continue
            ref = self.ref(ch, src)
            if ref is not None:
                (outputs if channel in CHANNELS else extra)[channel] = ref


def parse_verbose(xml_text: str, registry=None) -> MaterialGraph:
    """Parse a verbose document into a valid graph or raise ParseFailure."""
    registry = registry or registry_builtin()
    doc = _xml_tree(xml_text)
    if len(doc.children) != 1 or doc.children[0].tag != "material":
        span = doc.children[0].span if doc.children else SourceSpan(1, 1, 0)
        raise ParseFailure([ParseError(span, "STRUCTURE", "root element must be <material>")])
    reader = _Reader(registry)
    g = reader.material(doc.children[0])
    if reader.errors:
        raise ParseFailure(reader.errors)
    report = validate_graph(g, registry)
    if not report.ok:
        raise ParseFailure([
            ParseError(reader.spans.get(i.where.split("/")[0], doc.children[0].span), "STRUCTURE",
                       f"{i.code.value}: {i.message}", i.where)
            for i in report.errors
        ])
    return g


def _guid(path, index, v):
    return str(uuid.uuid5(_GUID_NS, f"{path}/{index}:{v.name}:{v.type_name}"))


def _slot_uid(guid, slot):
    return str(uuid.uuid5(_GUID_NS, f"{guid}.{slot}"))


def _material_lines(g, registry, pad, path):
    lines = [f'{pad}<material format="sbsv" version="1.0">',
             f'{pad}  <metadata generator="matgraph" colorspace="linear" units="normalized" '
             f'tiling="true"/>']
    depth = topo_positions(g)
    rows = {}
    guids = {v.name: _guid(path, i, v) for i, v in enumerate(g.nodes)}
    for i, v in enumerate(g.nodes):
        row = rows.get(depth[v.name], 0)
        rows[depth[v.name]] = row + 1
        x, y = depth[v.name] * 192, row * 160
        spec = spec_for(v, registry)
        guid = guids[v.name]
        if v.type_name in RESOURCE_KINDS:
            head = (f'{pad}  <resource name={quoteattr(v.name)} kind={quoteattr(v.type_name)} '
                    f'guid="{guid}" x="{x}" y="{y}">')
            tail = f"{pad}  </resource>"
        else:
            head = (f'{pad}  <node name={quoteattr(v.name)} type={quoteattr(v.type_name)} '
                    f'guid="{guid}" x="{x}" y="{y}">')
            tail = f"{pad}  </node>"
        lines.append(head)
        for slot, t in v.output_types.items():
            lines.append(f'{pad}    <suboutput name={quoteattr(slot)} type="{SignalType(t).value}" '
                         f'uid="{_slot_uid(guid, slot)}"/>')
        known = list(spec.params) if spec is not None else []
        keys = known + sorted(k for k in v.params if k not in known)
        for k in keys:
            if k not in v.params:
                continue
            val = v.params[k]
            lines.append(f'{pad}    <param name={quoteattr(k)} kind="{_kind_of(val)}" '
                         f'value={quoteattr(_format_param(val))}/>')
        for c in v.connections:
            src_uid = _slot_uid(guids.get(c.src_node, ""), c.src_slot)
            lines.append(f'{pad}    <connect input={quoteattr(c.dst_slot)} '
                         f'from={quoteattr(c.src_node + "." + c.src_slot)} from_uid="{src_uid}"/>')
        if v.subgraph is not None:
            lines.append(f"{pad}    <subgraph>")
            lines += _material_lines(v.subgraph, registry, pad + "      ", f"{path}/{v.name}")
            lines.append(f"{pad}    </subgraph>")
        lines.append(tail)
    lines.append(f"{pad}  <outputs>")
    for ch in CHANNELS:
        if ch in g.outputs:
            node, slot = g.outputs[ch]
            lines.append(f'{pad}    <output channel="{ch}" from={quoteattr(node + "." + slot)}/>')
    for ch in sorted(g.extra_outputs):
        node, slot = g.extra_outputs[ch]
        lines.append(f'{pad}    <output channel={quoteattr(ch)} from={quoteattr(node + "." + slot)}/>')
    lines.append(f"{pad}  </outputs>")
    lines.append(f"{pad}</material>")
    return lines


def emit_verbose(g: MaterialGraph, registry=None) -> str:
    registry = registry or registry_builtin()
    body = _material_lines(g, registry, "", "")
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + "\n".join(body) + "\n"
