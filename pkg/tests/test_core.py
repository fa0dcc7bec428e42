from dataclasses import replace

from hypothesis import given, settings, strategies as st

from conftest import chain, diamond
from matgraph.core import (
    Connection, ErrorCode, MaterialGraph, NodeDef, SignalType, append_node, make_node,
    registry_builtin, topo_positions, validate_graph,
)
from matgraph.corpus import random_graph

E = ErrorCode


def codes(report):
    return {e.code for e in report.errors}


def test_registry_blend_has_three_inputs(registry):
    assert [s.name for s in registry["blend"].inputs] == ["foreground", "background", "mask"]


def test_registry_generators(registry):
    assert registry["perlin_noise"].is_generator
    assert not registry["blend"].is_generator
    assert "nonexistent" not in registry
    for spec in registry.values():
        assert spec.is_generator == (len(spec.inputs) == 0)


def test_registry_is_stable():
    assert registry_builtin() is registry_builtin()


def test_evaluable_kernel_set(registry):
    names = {
        "uniform_color", "perlin_noise", "fbm_noise", "checker", "gradient_linear", "brick",
        "polygon_shape", "blend", "levels", "blur_box", "blur_gaussian", "invert",
        "grayscale_conversion", "gradient_map", "transform_2d", "normal_from_height",
    }
    assert names <= {k for k, s in registry.items() if s.evaluable}


def test_empty_graph_valid():
    r = validate_graph(MaterialGraph())
    assert r.ok and r.errors == ()


def test_forward_reference():
    a = NodeDef("a", "invert", connections=(Connection("b", "output", "input"),),
                output_types={"output": SignalType.GRAYSCALE})
    b = make_node("b", "checker")
    r = validate_graph(MaterialGraph((a, b)))
    assert E.TOPOLOGY_VIOLATION in codes(r)


def test_type_mismatch_names_both_slots():
    g = chain(("c", "uniform_color", None), ("b", "blur_box", None, {"input": "c.output"}))
    r = validate_graph(g)
    assert codes(r) == {E.TYPE_MISMATCH}
    msg = r.errors[0].message
    assert "c.output" in msg and "b.input" in msg


def test_append_generator_to_empty():
    g = append_node(MaterialGraph(), make_node("p", "perlin_noise"))
    assert isinstance(g, MaterialGraph) and g.names() == ["p"]


def test_append_unknown_source():
    r = append_node(MaterialGraph(), make_node("i", "invert", inputs={"input": "nope.output"}))
    assert E.UNKNOWN_SOURCE in codes(r)


def test_append_unknown_param_does_not_mutate():
    g = chain(("p", "checker"))
    v = make_node("i", "invert", {"smoothness": 0.5}, {"input": "p.output"}, g)
    r = append_node(g, v)
    assert codes(r) == {E.UNKNOWN_PARAM}
    assert g.names() == ["p"]


def test_duplicate_and_unbound():
    g = chain(("p", "checker"))
    r = append_node(g, make_node("p", "invert", inputs={"input": "p.output"}, env=g))
    assert E.DUPLICATE_NAME in codes(r)
    r = append_node(g, make_node("q", "invert"))
    assert E.UNBOUND_REQUIRED_INPUT in codes(r)


def test_bad_param_value_and_unknown_type():
    r = append_node(MaterialGraph(), NodeDef("p", "checker", {"tiles": 1000},
                                             output_types={"output": SignalType.GRAYSCALE}))
    assert codes(r) == {E.BAD_PARAM_VALUE}
    r = append_node(MaterialGraph(), NodeDef("z", "zebra"))
    assert codes(r) == {E.UNKNOWN_TYPE}


def test_binding_types():
    g = chain(("p", "checker"), outputs={"basecolor": ("p", "output")})
    assert codes(validate_graph(g)) == {E.TYPE_MISMATCH}


def test_blend_resolves_output_to_background_type():
    g = chain(("c", "uniform_color", None), ("d", "uniform_color", None),
              ("m", "blend", None, {"foreground": "c.output", "background": "d.output"}))
    assert g.node("m").output_types["output"] == SignalType.COLOR


def test_topo_positions_examples():
    assert topo_positions(chain(("g", "checker"))) == {"g": 0}
    g = chain(("g", "checker"), ("a", "invert", None, {"input": "g.output"}),
              ("b", "invert", None, {"input": "a.output"}))
    assert topo_positions(g) == {"g": 0, "a": 1, "b": 2}


def _longest_path_oracle(g):
    preds = {v.name: [c.src_node for c in v.connections] for v in g.nodes}

    def paths(n):
        if not preds[n]:
            return [[n]]
        return [p + [n] for s in preds[n] for p in paths(s)]

    return {n: max(len(p) for p in paths(n)) - 1 for n in preds}


def test_topo_positions_diamond():
    g = diamond()
    assert topo_positions(g)["m"] == 2
    assert topo_positions(g) == _longest_path_oracle(g)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10_000))
def test_prefix_closure(seed):
    g = random_graph(seed, 24)
    assert validate_graph(g).ok
    built = MaterialGraph()
    for k, v in enumerate(g.nodes):
        assert validate_graph(MaterialGraph(g.nodes[:k])).ok
        built = append_node(built, v)
        assert isinstance(built, MaterialGraph)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 10_000))
def test_topo_positions_rename_invariant(seed):
    g = random_graph(seed, 24)
    ren = {v.name: f"x{k}" for k, v in enumerate(g.nodes)}
    nodes = tuple(replace(v, name=ren[v.name], connections=tuple(
        replace(c, src_node=ren[c.src_node]) for c in v.connections)) for v in g.nodes)
    h = MaterialGraph(nodes)
    a, b = topo_positions(g), topo_positions(h)
    assert all(a[k] == b[ren[k]] for k in a)
    assert validate_graph(g) == validate_graph(g)
