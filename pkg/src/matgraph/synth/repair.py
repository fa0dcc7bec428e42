"""Automatic repair of two common proposal errors.

Extraneous parameters are dropped, and a type mismatch on an input is fixed
by inserting a conversion node (grayscale_conversion for color -> grayscale,
a black-to-white gradient_map for grayscale -> color) in front of the node.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..core import (
    ErrorCode, Match, MaterialGraph, SignalType, append_node, make_node, registry_builtin, spec_for,
)
from ..core.validate import _expected_input

REPAIRABLE = frozenset({ErrorCode.UNKNOWN_PARAM, ErrorCode.TYPE_MISMATCH})


@dataclass(frozen=True)
class RepairAction:
    kind: str            # "drop_param" or "insert_conversion"
    node: str
    detail: str

    def __str__(self):
        return f"{self.kind}({self.node}: {self.detail})"


@dataclass(frozen=True)
class Repaired:
    node: object                 # the repaired NodeDef
    inserted: tuple = ()         # conversion NodeDefs placed before it
    actions: tuple = ()


class Unrepairable(Exception):
    def __init__(self, codes, message=""):
        super().__init__(message or ", ".join(sorted(c.value for c in codes)))
        self.codes = frozenset(codes)


def _conversion_name(base, taken):
    k = 0
    while f"{base}__conv{k}" in taken:
        k += 1
    return f"{base}__conv{k}"


def repair(v, g: MaterialGraph, registry=None) -> Repaired:
    """Repair ``v`` against ``g``; raise Unrepairable when that is not possible."""
    registry = registry or registry_builtin()
    report = append_node(g, v, registry)
    if isinstance(report, MaterialGraph):
        return Repaired(v)
    codes = report.codes()
    if not codes <= REPAIRABLE:
        raise Unrepairable(codes - REPAIRABLE)
    spec = spec_for(v, registry)
    input_names = {s.name for s in spec.inputs}
    for issue in report.errors:
        if issue.code == ErrorCode.TYPE_MISMATCH and issue.slot not in input_names:
            raise Unrepairable({issue.code}, f"output type of {v.name!r} is inconsistent")
    actions = []
    params = dict(v.params)
    for issue in report.errors:
        if issue.code == ErrorCode.UNKNOWN_PARAM and issue.key in params:
            del params[issue.key]
            actions.append(RepairAction("drop_param", v.name, issue.key))

    env = {u.name: dict(u.output_types) for u in g.nodes}
    taken = set(env) | {v.name}
    inputs = {c.dst_slot: (c.src_node, c.src_slot) for c in v.connections}
    inserted = []
    # fixed types, then ANY, then Match() slots, so matches see their referent
    rank = lambda s: 0 if isinstance(s.type, SignalType) else 2 if isinstance(s.type, Match) else 1
    slots = sorted((s for s in spec.inputs if s.name in inputs), key=rank)
    types = {}
    for slot in slots:
        src, src_slot = inputs[slot.name]
        got = env.get(src, {}).get(src_slot)
        if got is None:
            continue
        got = SignalType(got)
        want = _expected_input(slot, types)
        if want is not None and got != want:
            name = _conversion_name(v.name, taken)
            taken.add(name)
            if want == SignalType.GRAYSCALE:
                conv = make_node(name, "grayscale_conversion", None, {"input": (src, src_slot)},
                                 env, registry)
            else:
                conv = make_node(name, "gradient_map", None, {"input": (src, src_slot)},
                                 env, registry)
            inserted.append(conv)
            env[name] = dict(conv.output_types)
            inputs[slot.name] = (name, "output")
            actions.append(RepairAction("insert_conversion", v.name,
                                        f"{conv.type_name} on {slot.name} ({got.value}->{want.value})"))
            got = want
        types[slot.name] = got

    fixed = make_node(v.name, v.type_name, params, inputs, env, registry,
                      declared_outputs=dict(v.output_types), subgraph=v.subgraph)
    h = g
    for u in inserted + [fixed]:
        h = append_node(h, u, registry)
        if not isinstance(h, MaterialGraph):
            raise Unrepairable(h.codes(), "repair did not produce a valid node")
    return Repaired(fixed, tuple(inserted), tuple(actions))
