"""Seeded random material graphs for tests, benchmarks and the random proposer."""
from __future__ import annotations

import numpy as np

from .core import (
    ANY, EVALUABLE, GENERATORS, SUBGRAPH, Match, MaterialGraph, SignalType, make_node,
    registry_builtin,
)

G = SignalType.GRAYSCALE
C = SignalType.COLOR
FILTERS = tuple(t for t in EVALUABLE if t not in GENERATORS)


def _round(x):
    return float(round(x, 3))


def random_param(ps, rng):
    """A schema-conforming random value for one ParamSpec."""
    def one():
        if ps.kind == "enum":
            return str(ps.choices[rng.integers(len(ps.choices))])
        if ps.kind == "bool":
            return bool(rng.integers(2))
        if ps.kind == "int":
            hi = min(ps.hi, ps.lo + 63) if ps.hi is not None else ps.lo + 63
            return int(rng.integers(ps.lo, hi + 1))
        return _round(rng.uniform(ps.lo, ps.hi))
    if ps.arity == 1:
        return one()
    return tuple(one() for _ in range(ps.arity))


def random_params(spec, rng, p_set=0.5):
    params = {}
    for k, ps in spec.params.items():
        if rng.random() < p_set:
            params[k] = random_param(ps, rng)
    if spec.type_name == "gradient_map":
        pos = sorted(params.get(f"pos{k}", spec.params[f"pos{k}"].default) for k in range(4))
        for k in range(4):
            params[f"pos{k}"] = pos[k]
    if spec.type_name == "uniform_color" and "value" in params:
        params["value"] = params["value"][:3] + (1.0,)
    return params


def _pick(rng, sources, want=None, recent_bias=True):
    """Pick a (name, slot, type) source, preferring recent nodes."""
    cands = [s for s in sources if want is None or s[2] == want]
    if not cands:
        return None
    if recent_bias and len(cands) > 1:
        w = np.arange(1, len(cands) + 1, dtype=float) ** 2
        return cands[rng.choice(len(cands), p=w / w.sum())]
    return cands[rng.integers(len(cands))]


def _sources(env):
    return [(n, slot, SignalType(t)) for n, outs in env.items() for slot, t in outs.items()]


def random_inputs(spec, env, rng):
    """Random type-correct connections for ``spec`` over ``env``; None if impossible."""
    srcs = _sources(env)
    chosen, types = {}, {}
    order = sorted(spec.inputs, key=lambda s: isinstance(s.type, Match))
    for slot in order:
        if not slot.required and rng.random() < 0.5:
            continue
        t = slot.type
        want = types.get(t.slot) if isinstance(t, Match) else (None if t == ANY else t)
        got = _pick(rng, srcs, want)
        if got is None:
            if slot.required:
                return None
            continue
        chosen[slot.name] = (got[0], got[1])
        types[slot.name] = got[2]
    return chosen


def random_node(name, env, rng, registry=None, p_generator=0.3, types=None, p_set=0.5):
    """A valid random NodeDef appended after ``env`` (name -> output types)."""
    registry = registry or registry_builtin()
    gens = [t for t in (types or EVALUABLE) if t in GENERATORS]
    filts = [t for t in (types or EVALUABLE) if t not in GENERATORS]
    for _ in range(64):
        pool = gens if (not env or rng.random() < p_generator or not filts) else filts
        tname = pool[rng.integers(len(pool))]
        spec = registry[tname]
        inputs = random_inputs(spec, env, rng) if spec.inputs else {}
        if inputs is None:
            continue
        declared = None
        if tname == "uniform_color":
            declared = {"output": C if rng.random() < 0.7 else G}
        return make_node(name, tname, random_params(spec, rng, p_set), inputs, env, registry,
                         declared_outputs=declared)
    raise RuntimeError("could not place a random node")


def auto_bindings(g: MaterialGraph, rng=None):
    """Bind channels from the graph's own nodes.

    Without ``rng``: latest color node -> basecolor, latest grayscale node ->
    roughness and height, everything else left at its default.
    """
    color, gray, normal = [], [], []
    for v in g.nodes:
        for slot, t in v.output_types.items():
            (color if SignalType(t) == C else gray).append((v.name, slot))
            if v.type_name == "normal_from_height":
                normal.append((v.name, slot))
    out = {}
    if color:
        out["basecolor"] = color[-1] if rng is None else color[rng.integers(len(color))]
    if normal and rng is not None:
        out["normal"] = normal[-1]
    if gray:
        if rng is None:
            out["roughness"] = gray[-1]
            out["height"] = gray[-1]
        else:
            for ch in ("roughness", "metallic", "height"):
                if rng.random() < 0.7:
                    out[ch] = gray[rng.integers(len(gray))]
            if not out:
                out["height"] = gray[-1]
    return out


def random_graph(seed, max_nodes=128, min_nodes=1, registry=None) -> MaterialGraph:
    """A valid, fully evaluable random graph with 1..max_nodes nodes."""
    rng = np.random.default_rng([seed, 0x6D67])
    registry = registry or registry_builtin()
    n = int(rng.integers(min_nodes, max_nodes + 1))
    env = {}
    nodes = []
    for i in range(n):
        v = random_node(f"n{i}", env, rng, registry, p_generator=0.25)
        nodes.append(v)
        env[v.name] = v.output_types
    g = MaterialGraph(tuple(nodes))
    return MaterialGraph(g.nodes, auto_bindings(g, rng))


def add_dead_chain(g: MaterialGraph, rng, length=3, registry=None) -> MaterialGraph:
    """Append ``length`` nodes that no output depends on."""
    env = {v.name: v.output_types for v in g.nodes}
    base = len(g.nodes)
    nodes = list(g.nodes)
    for k in range(length):
        name = f"dead{base}_{k}"
        if k == 0:
            v = random_node(name, {}, rng, registry, p_generator=1.0)
        else:
            prev = nodes[-1]
            v = random_node(name, {prev.name: prev.output_types}, rng, registry, p_generator=0.0)
        nodes.append(v)
        env[v.name] = v.output_types
    return MaterialGraph(tuple(nodes), g.outputs, g.extra_outputs)


def _channel_for(t):
    return "basecolor" if SignalType(t) == C else "height"


def wrap_in_subgraph(g: MaterialGraph, name: str, registry=None) -> MaterialGraph:
    """Replace node ``name`` by a subgraph node with the same name that wraps it.

    The wrapped node must have a single output slot. Consumers are rewired to the
    subgraph's exposed channel.
    """
    registry = registry or registry_builtin()
    v = g.node(name)
    (slot, t), = v.output_types.items()
    env = {}
    inner_nodes = []
    inner_inputs = {}
    outer_inputs = {}
    idx = g.index()
    for k, c in enumerate(v.connections):
        src_t = idx[c.src_node].output_types[c.src_slot]
        gi = make_node(f"in{k}", "graph_input", declared_outputs={"output": src_t})
        inner_nodes.append(gi)
        env[gi.name] = gi.output_types
        inner_inputs[c.dst_slot] = (gi.name, "output")
        outer_inputs[gi.name] = (c.src_node, c.src_slot)
    core = make_node("body", v.type_name, dict(v.params), inner_inputs, env, registry,
                     declared_outputs=dict(v.output_types), subgraph=v.subgraph)
    inner_nodes.append(core)
    ch = _channel_for(t)
    inner = MaterialGraph(tuple(inner_nodes), {ch: ("body", slot)})
    outer_env = {u.name: u.output_types for u in g.nodes}
    wrapper = make_node(name, SUBGRAPH, None, outer_inputs, outer_env, registry, subgraph=inner)

    def rewire(u):
        if not any(c.src_node == name for c in u.connections):
            return u
        ins = {c.dst_slot: ((name, ch) if c.src_node == name else (c.src_node, c.src_slot))
               for c in u.connections}
        return make_node(u.name, u.type_name, dict(u.params), ins, env_so_far, registry,
                         declared_outputs=dict(u.output_types), subgraph=u.subgraph)

    nodes = []
    env_so_far = {}
    for u in g.nodes:
        u = wrapper if u.name == name else rewire(u)
        nodes.append(u)
        env_so_far[u.name] = u.output_types
    outputs = {k: ((name, ch) if r[0] == name else r) for k, r in g.outputs.items()}
    extra = {k: ((name, ch) if r[0] == name else r) for k, r in g.extra_outputs.items()}
    return MaterialGraph(tuple(nodes), outputs, extra)


def inject_subgraphs(g: MaterialGraph, rng, count=1, depth=1, registry=None) -> MaterialGraph:
    """Wrap ``count`` random nodes, each nested ``depth`` levels deep."""
    names = [v.name for v in g.nodes if len(v.output_types) == 1]
    picks = rng.choice(len(names), size=min(count, len(names)), replace=False) if names else []
    for k in picks:
        for _ in range(depth):
            g = wrap_in_subgraph(g, names[int(k)], registry)
    return g
