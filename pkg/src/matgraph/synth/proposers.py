"""Proposals and proposers.

A proposer is any callable ``proposer(ctx) -> Proposal``. The ones here are
deterministic stand-ins for a vision-language model: replay a known script,
sample random valid nodes, or wrap another proposer and inject faults.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..core import Connection, MaterialGraph, SignalType, registry_builtin
from ..corpus import auto_bindings, random_node
from ..transpiler import (
    ParseFailure, emit_node, emit_outputs_block, parse_compact, parse_node_fragment,
)

FAULT_KINDS = ("unknown_param", "type_mismatch", "forward_ref", "syntax")
REPAIRABLE_FAULTS = ("unknown_param", "type_mismatch")


@dataclass(frozen=True)
class Proposal:
    kind: str      # "node" or "end"
    text: str

    @classmethod
    def node(cls, text):
        return cls("node", text)

    @classmethod
    def end(cls, text):
        return cls("end", text)

    @property
    def is_end(self) -> bool:
        return self.kind == "end"


class ProposerFailure(Exception):
    """The proposer could not produce a proposal at all (transport, auth...)."""


def strip_fences(text: str) -> str:
    lines = text.strip("\n").split("\n")
    if lines and lines[0].lstrip().startswith("```"):
        lines = lines[1:]
        if lines and lines[-1].strip().startswith("```"):
            lines = lines[:-1]
    return "\n".join(lines) + "\n"


def parse_proposal(text: str) -> Proposal:
    """Classify raw completion text: an ``outputs:`` block ends the graph."""
    body = strip_fences(text)
    if body.lstrip().startswith("outputs:"):
        return Proposal.end(body)
    return Proposal.node(body)


class ReplayProposer:
    """Emits the script's nodes in order, then its output block.

    The next node is chosen by the number of model nodes on the active path,
    so after backtracking the discarded nodes are proposed again.
    """

    def __init__(self, script: str, registry=None):
        g = parse_compact(script, registry)
        self.graph = g
        self.nodes = [emit_node(v, registry) for v in g.nodes]
        self.end = emit_outputs_block(g.outputs)

    def __call__(self, ctx) -> Proposal:
        k = ctx.position
        if k >= len(self.nodes):
            return Proposal.end(self.end)
        return Proposal.node(self.nodes[k])


class RandomProposer:
    """Schema-valid random nodes over the current graph; ends with probability ``end_prob``."""

    def __init__(self, seed=0, registry=None, p_generator=0.3, end_prob=0.05, min_nodes=1,
                 types=None):
        self.rng = np.random.default_rng([seed, 0x5059])
        self.registry = registry or registry_builtin()
        self.p_generator = p_generator
        self.end_prob = end_prob
        self.min_nodes = min_nodes
        self.types = types
        self.count = 0

    def __call__(self, ctx) -> Proposal:
        g = ctx.graph
        if ctx.position >= self.min_nodes and self.rng.random() < self.end_prob:
            return Proposal.end(emit_outputs_block(auto_bindings(g)))
        env = {v.name: v.output_types for v in g.nodes}
        name = f"r{self.count}"
        self.count += 1
        v = random_node(name, env, self.rng, self.registry, self.p_generator, self.types)
        return Proposal.node(emit_node(v, self.registry))


def _sources(g: MaterialGraph, t: SignalType):
    return [(v.name, s) for v in g.nodes for s, st in v.output_types.items() if SignalType(st) == t]


def corrupt(text: str, kind: str, g: MaterialGraph, registry=None) -> str:
    """Inject one fault of ``kind`` into a node fragment."""
    registry = registry or registry_builtin()
    if kind == "syntax":
        return text.replace(":", "", 1)
    try:
        v = parse_node_fragment(text, g, registry)
    except ParseFailure:
        return text.replace(":", "", 1)
    if kind == "unknown_param":
        params = dict(v.params)
        params["smoothness"] = 0.5
        return emit_node(replace(v, params=params), registry)
    if kind == "forward_ref":
        return (f"  {v.name}:\n    type: invert\n    outputs: {{output: grayscale}}\n"
                f"    inputs: {{input: {v.name}_future.output}}\n")
    if kind == "type_mismatch":
        spec = registry.get(v.type_name)
        for c in v.connections:
            slot = spec.input(c.dst_slot) if spec is not None else None
            if slot is not None and isinstance(slot.type, SignalType):
                other = SignalType.COLOR if slot.type == SignalType.GRAYSCALE else SignalType.GRAYSCALE
                srcs = _sources(g, other)
                if srcs:
                    return _rewire(v, c.dst_slot, srcs[-1], registry)
        if v.type_name == "blend":
            bg = next(c for c in v.connections if c.dst_slot == "background")
            bg_t = SignalType(g.node(bg.src_node).output_types[bg.src_slot])
            other = SignalType.COLOR if bg_t == SignalType.GRAYSCALE else SignalType.GRAYSCALE
            srcs = _sources(g, other)
            if srcs:
                return _rewire(v, "foreground", srcs[-1], registry)
        color, gray = _sources(g, SignalType.COLOR), _sources(g, SignalType.GRAYSCALE)
        if color:
            n, s = color[-1]
            return f"  {v.name}:\n    type: blur_box\n    inputs: {{input: {n}.{s}}}\n"
        if gray:
            n, s = gray[-1]
            return f"  {v.name}:\n    type: grayscale_conversion\n    inputs: {{input: {n}.{s}}}\n"
        return text.replace(":", "", 1)
    raise ValueError(f"unknown fault kind {kind!r}")


def _rewire(v, slot, src, registry):
    conns = tuple(Connection(src[0], src[1], slot) if c.dst_slot == slot else c
                  for c in v.connections)
    return emit_node(replace(v, connections=conns), registry)


@dataclass
class FaultPlan:
    """Scripted faults ``[(call_index, kind)]`` (1-based) and/or a random fault rate."""
    steps: dict = field(default_factory=dict)
    rate: float = 0.0
    kinds: tuple = FAULT_KINDS
    seed: int = 0

    @classmethod
    def scripted(cls, pairs):
        return cls(steps={int(k): kind for k, kind in pairs})


class CorruptingProposer:
    """Wraps a proposer and corrupts node proposals per a FaultPlan.

    Random faults are decided per call index from the plan seed alone, so two
    runs that make the same calls see the same faults.
    """

    def __init__(self, inner, plan, registry=None):
        if not isinstance(plan, FaultPlan):
            plan = FaultPlan.scripted(plan)
        self.inner = inner
        self.plan = plan
        self.registry = registry or registry_builtin()
        self.calls = 0
        self.applied = []   # (call_index, kind)

    def _fault(self, k):
        if k in self.plan.steps:
            return self.plan.steps[k]
        if self.plan.rate > 0:
            rng = np.random.default_rng([self.plan.seed, k, 0xFA17])
            if rng.random() < self.plan.rate:
                return self.plan.kinds[rng.integers(len(self.plan.kinds))]
        return None

    def __call__(self, ctx) -> Proposal:
        self.calls += 1
        p = self.inner(ctx)
        kind = self._fault(self.calls)
        if kind is None or p.is_end:
            return p
        self.applied.append((self.calls, kind))
        return Proposal.node(corrupt(p.text, kind, ctx.graph, self.registry))


class ManifestProposer:
    """Replays the exact proposal texts recorded in a run manifest."""

    def __init__(self, proposals):
        self.proposals = list(proposals)
        self.i = 0

    def __call__(self, ctx) -> Proposal:
        if self.i >= len(self.proposals):
            raise ProposerFailure("manifest has no more recorded proposals")
        kind, text = self.proposals[self.i]
        self.i += 1
        return Proposal(kind, text)
