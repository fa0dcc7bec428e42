"""Incremental tree search: propose, validate, repair, render, backtrack."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple, Optional

from ..core import MaterialGraph, append_node, registry_builtin, validate_graph
from ..corpus import auto_bindings
from ..engine import EngineError, RenderCache, RenderSettings, eval_node
from ..transpiler import ParseFailure, parse_compact, parse_node_fragment, parse_outputs_block
from .context import TOKEN_BUDGET, Mode, ProposerContext, build_context
from .proposers import ProposerFailure
from .repair import Repaired, Unrepairable, repair


def backtrack_count(i: int, available: Optional[int] = None) -> int:
    """Nodes to drop on the i-th consecutive failure: 2^(i-1), capped at ``available``."""
    if i < 1:
        raise ValueError("failure counter starts at 1")
    n = 2 ** (i - 1)
    return n if available is None else min(n, available)


class Status(str, Enum):
    VALID = "valid"
    INVALID = "invalid"


@dataclass
class TreeEntry:
    id: int
    parent: Optional[int]
    kind: str                 # "root", "node" or "end"
    status: Status = Status.VALID
    text: str = ""
    node: object = None       # NodeDef for accepted node entries
    inserted: tuple = ()      # conversion nodes added by repair
    actions: tuple = ()
    error: Optional[str] = None
    children: list = field(default_factory=list)

    def nodes(self):
        return self.inserted + ((self.node,) if self.node is not None else ())


@dataclass
class SynthesisTree:
    entries: list = field(default_factory=lambda: [TreeEntry(0, None, "root")])
    active: list = field(default_factory=list)     # entry ids, root excluded

    def tip(self) -> int:
        return self.active[-1] if self.active else 0

    @property
    def depth(self) -> int:
        return len(self.active)

    def add(self, kind, status, **kw) -> TreeEntry:
        parent = self.tip()
        if self.entries[parent].status is Status.INVALID:
            raise AssertionError("invalid entries cannot have children")
        e = TreeEntry(len(self.entries), parent, kind, status, **kw)
        self.entries.append(e)
        self.entries[parent].children.append(e.id)
        if status is Status.VALID and kind == "node":
            self.active.append(e.id)
        return e

    def pop(self, k: int) -> list:
        removed = [self.entries[j] for j in self.active[len(self.active) - k:]] if k else []
        del self.active[len(self.active) - k:]
        return removed

    def graph(self, outputs=None) -> MaterialGraph:
        nodes = tuple(n for j in self.active for n in self.entries[j].nodes())
        return MaterialGraph(nodes, dict(outputs or {}))

    def invalid(self) -> list:
        return [e for e in self.entries if e.status is Status.INVALID]


@dataclass
class StepEvent:
    step: int
    kind: str             # "node" or "end"
    verdict: str          # "valid", "repaired", "invalid"
    error: Optional[str]
    message: str
    repairs: tuple
    removed: int          # active-path entries dropped by backtracking
    depth: int            # active-path length after the step
    text: str
    seconds: float


@dataclass
class SynthStats:
    nodes_generated: int = 0
    nodes_discarded: int = 0
    repairs: int = 0
    end_failures: int = 0
    proposals: int = 0
    auto_bound: bool = False
    timings: dict = field(default_factory=lambda: dict.fromkeys(
        ("context", "propose", "parse", "repair", "render", "bind"), 0.0))
    events: list = field(default_factory=list)

    @property
    def ner(self) -> float:
        return self.nodes_discarded / self.nodes_generated if self.nodes_generated else 0.0


@dataclass
class SynthConfig:
    max_nodes: int = 128
    max_total_proposals: int = 1000
    mode: Mode = Mode.MIXED
    render: RenderSettings = field(default_factory=lambda: RenderSettings(256, 0))
    repair_enabled: bool = True
    seed: int = 0
    token_budget: int = TOKEN_BUDGET
    temperature: float = 0.8
    top_p: float = 0.95

    def __post_init__(self):
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be at least 1")
        self.mode = Mode(self.mode)


class SynthResult(NamedTuple):
    graph: MaterialGraph
    tree: SynthesisTree
    stats: SynthStats


class SynthError(Exception):
    def __init__(self, code, message, tree=None, stats=None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.tree = tree
        self.stats = stats

    @property
    def best(self) -> Optional[MaterialGraph]:
        return self.tree.graph() if self.tree is not None else None


class _Failure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _clock(stats, phase, t0):
    now = time.perf_counter()
    stats.timings[phase] += now - t0
    return now


def synthesize(proposer, cfg: SynthConfig = None, target=None, registry=None,
               on_event: Callable = None) -> SynthResult:
    """Grow a graph one proposed node at a time.

    A failed step records an Invalid entry under the tip, drops
    ``backtrack_count(i)`` entries from the active path and increments ``i``;
    any accepted node resets ``i`` to 1.
    """
    cfg = cfg or SynthConfig()
    registry = registry or registry_builtin()
    tree = SynthesisTree()
    stats = SynthStats()
    cache = RenderCache(cfg.render)
    i = 1
    step = 0

    def emit(ev):
        stats.events.append(ev)
        if on_event is not None:
            on_event(ev, tree, cache)

    while True:
        g = tree.graph()
        if tree.depth >= cfg.max_nodes:
            t0 = time.perf_counter()
            final = MaterialGraph(g.nodes, auto_bindings(g))
            _clock(stats, "bind", t0)
            stats.auto_bound = True
            return SynthResult(final, tree, stats)
        if stats.proposals >= cfg.max_total_proposals:
            raise SynthError("BUDGET_EXHAUSTED",
                             f"{stats.proposals} proposals without a finished graph", tree, stats)
        step += 1
        t0 = time.perf_counter()
        ctx = build_context(cfg.mode, g, cache, target, step, cfg.token_budget)
        ctx.position = tree.depth
        t0 = _clock(stats, "context", t0)
        try:
            prop = proposer(ctx)
        except ProposerFailure as e:
            raise SynthError("PROPOSER_FAILURE", str(e), tree, stats) from e
        t_step = t0
        t0 = _clock(stats, "propose", t0)
        stats.proposals += 1

        if prop.is_end:
            try:
                outputs = parse_outputs_block(prop.text)
                final = MaterialGraph(g.nodes, outputs)
                report = validate_graph(final, registry)
                if not report.ok:
                    e = report.errors[0]
                    raise _Failure(e.code.value, e.message)
            except ParseFailure as e:
                err = _Failure(e.errors[0].code, str(e.errors[0]))
            except _Failure as e:
                err = e
            else:
                _clock(stats, "bind", t0)
                tree.add("end", Status.VALID, text=prop.text)
                emit(StepEvent(step, "end", "valid", None, "", (), 0, tree.depth, prop.text,
                               time.perf_counter() - t_step))
                return SynthResult(final, tree, stats)
            stats.end_failures += 1
            tree.add("end", Status.INVALID, text=prop.text, error=err.code)
            removed = _backtrack(tree, stats, cache, i)
            i += 1
            emit(StepEvent(step, "end", "invalid", err.code, str(err), (), removed, tree.depth,
                           prop.text, time.perf_counter() - t_step))
            continue

        stats.nodes_generated += 1
        fixed = None
        try:
            try:
                v = parse_node_fragment(prop.text, g, registry)
            except ParseFailure as e:
                raise _Failure(e.errors[0].code, str(e.errors[0])) from None
            finally:
                t0 = _clock(stats, "parse", t0)
            if cfg.repair_enabled:
                try:
                    fixed = repair(v, g, registry)
                except Unrepairable as e:
                    raise _Failure(sorted(c.value for c in e.codes)[0], str(e)) from None
                finally:
                    t0 = _clock(stats, "repair", t0)
            else:
                h = append_node(g, v, registry)
                if not isinstance(h, MaterialGraph):
                    e = h.errors[0]
                    raise _Failure(e.code.value, e.message)
                fixed = Repaired(v)
            h = MaterialGraph(g.nodes + fixed.inserted + (fixed.node,))
            try:
                for u in fixed.inserted + (fixed.node,):
                    eval_node(h, u.name, cfg.render, cache, registry)
            except EngineError as e:
                for u in fixed.inserted + (fixed.node,):
                    cache.discard(u.name)
                raise _Failure(e.code, str(e)) from None
            finally:
                t0 = _clock(stats, "render", t0)
        except _Failure as err:
            tree.add("node", Status.INVALID, text=prop.text, error=err.code)
            stats.nodes_discarded += 1
            removed = _backtrack(tree, stats, cache, i)
            i += 1
            emit(StepEvent(step, "node", "invalid", err.code, str(err), (), removed, tree.depth,
                           prop.text, time.perf_counter() - t_step))
            continue

        tree.add("node", Status.VALID, text=prop.text, node=fixed.node,
                 inserted=fixed.inserted, actions=fixed.actions)
        if fixed.actions:
            stats.repairs += 1
        i = 1
        emit(StepEvent(step, "node", "repaired" if fixed.actions else "valid", None, "",
                       tuple(str(a) for a in fixed.actions), 0, tree.depth, prop.text,
                       time.perf_counter() - t_step))


def _backtrack(tree, stats, cache, i):
    k = backtrack_count(i, tree.depth)
    for entry in tree.pop(k):
        for u in entry.nodes():
            cache.discard(u.name)
    stats.nodes_discarded += k
    return k


def single_shot(proposer, cfg: SynthConfig = None, registry=None):
    """Sample a whole document without feedback, then parse and render it once.

    Returns (graph or None, document text, node proposals).
    """
    cfg = cfg or SynthConfig()
    registry = registry or registry_builtin()
    texts, nodes = [], []
    end = "outputs:\n"
    for step in range(1, cfg.max_nodes + 2):
        g = MaterialGraph(tuple(nodes))
        ctx = ProposerContext(Mode.TEXT_ONLY, "nodes:\n" + "".join(texts), g, step)
        ctx.position = len(texts)
        prop = proposer(ctx)
        if prop.is_end:
            end = prop.text
            break
        texts.append(prop.text)
        try:
            nodes.append(parse_node_fragment(prop.text, g, registry))
        except ParseFailure:
            pass
    doc = "nodes:\n" + "".join(texts) + end
    try:
        g = parse_compact(doc, registry)
        cache = RenderCache(cfg.render)
        for v in g.nodes:
            eval_node(g, v.name, cfg.render, cache, registry)
    except (ParseFailure, EngineError):
        return None, doc, len(texts)
    return g, doc, len(texts)
