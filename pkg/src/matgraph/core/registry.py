"""Built-in node type registry."""
from __future__ import annotations

from functools import lru_cache
from types import MappingProxyType

from .model import (
    ANY, Free, InputSlot, Match, NodeTypeSpec, OutputSlot, ParamSpec, SignalType,
)

G = SignalType.GRAYSCALE
C = SignalType.COLOR

BLEND_MODES = ("copy", "add", "subtract", "multiply", "screen", "max", "min")
GRADIENT_DIRECTIONS = ("horizontal", "vertical", "diagonal")

# Evaluable built-ins; everything else in the registry validates only.
EVALUABLE = (
    "uniform_color", "perlin_noise", "fbm_noise", "checker", "gradient_linear",
    "brick", "polygon_shape", "blend", "levels", "blur_box", "blur_gaussian",
    "invert", "grayscale_conversion", "gradient_map", "transform_2d",
    "normal_from_height",
)
GENERATORS = EVALUABLE[:7]


def _f(default, lo=0.0, hi=1.0, arity=1, continuous=True):
    return ParamSpec("float", default, arity=arity, lo=lo, hi=hi, continuous=continuous)


def _i(default, lo, hi, arity=1):
    return ParamSpec("int", default, arity=arity, lo=lo, hi=hi)


def _e(default, choices):
    return ParamSpec("enum", default, choices=tuple(choices))


def _spec(name, inputs=(), outputs=(("output", G),), params=None, **kw):
    return NodeTypeSpec(
        type_name=name,
        inputs=tuple(InputSlot(*s) for s in inputs),
        outputs=tuple(OutputSlot(*s) for s in outputs),
        params=MappingProxyType(dict(params or {})),
        **kw,
    )


def _gradient_map_params():
    params = {"stops": _i(2, 1, 4)}
    positions = (0.0, 1.0, 1.0, 1.0)
    colors = ((0.0, 0.0, 0.0, 1.0),) + ((1.0, 1.0, 1.0, 1.0),) * 3
    for k in range(4):
        params[f"pos{k}"] = _f(positions[k])
        params[f"col{k}"] = _f(colors[k], arity=4)
    return params


def _build():
    seed = _i(0, 0, 65535)
    specs = [
        _spec("uniform_color", outputs=(("output", Free(C)),),
              params={"value": _f((0.5, 0.5, 0.5, 1.0), arity=4)}),
        _spec("perlin_noise", params={"scale": _i(4, 1, 64), "seed": seed}),
        _spec("fbm_noise", params={
            "scale": _i(4, 1, 64), "octaves": _i(4, 1, 8),
            "persistence": _f(0.5), "seed": seed}),
        _spec("checker", params={"tiles": _i(4, 1, 64)}),
        _spec("gradient_linear", params={"direction": _e("horizontal", GRADIENT_DIRECTIONS)}),
        _spec("brick", params={
            "rows": _i(4, 1, 32), "cols": _i(2, 1, 32),
            "mortar": _f(0.05, 0.0, 0.5), "offset": _f(0.5)}),
        _spec("polygon_shape", params={
            "sides": _i(6, 3, 16), "radius": _f(0.4, 0.05, 1.0),
            "rotation": _f(0.0), "gradient": _f(0.0)}),
        _spec("blend",
              inputs=(("foreground", Match("background")), ("background", ANY),
                      ("mask", G, False)),
              outputs=(("output", Match("background")),),
              params={"mode": _e("copy", BLEND_MODES), "opacity": _f(1.0)}),
        _spec("levels", inputs=(("input", ANY),), outputs=(("output", Match("input")),),
              params={"in_low": _f(0.0), "in_high": _f(1.0),
                      "gamma": _f(1.0, 0.1, 10.0),
                      "out_low": _f(0.0), "out_high": _f(1.0)}),
        _spec("blur_box", inputs=(("input", G),), params={"radius": _f(0.02, 0.0, 0.25)}),
        _spec("blur_gaussian", inputs=(("input", ANY),), outputs=(("output", Match("input")),),
              params={"sigma": _f(0.01, 0.0, 0.1)}),
        _spec("invert", inputs=(("input", ANY),), outputs=(("output", Match("input")),)),
        _spec("grayscale_conversion", inputs=(("input", C),),
              params={"weights": _f((0.299, 0.587, 0.114), arity=3)}),
        _spec("gradient_map", inputs=(("input", G),), outputs=(("output", C),),
              params=_gradient_map_params()),
        _spec("transform_2d", inputs=(("input", ANY),), outputs=(("output", Match("input")),),
              params={"offset": _f((0.0, 0.0), -1.0, 1.0, arity=2),
                      "scale": _f(1.0, 0.25, 4.0), "rotation": _f(0.0)}),
        _spec("normal_from_height", inputs=(("input", G),), outputs=(("output", C),),
              params={"intensity": _f(4.0, 0.01, 64.0)}),
        # reserved opaque types: validate, never evaluate
        _spec("pixel_processor", inputs=(("input", ANY, False),),
              outputs=(("output", Free(C)),), evaluable=False),
        _spec("value_function", params={"value": _f(0.0)}, evaluable=False),
        _spec("bitmap", outputs=(("output", C),), params={"resource": _i(0, 0, 2**31 - 1)},
              evaluable=False),
        _spec("svg", outputs=(("output", C),), params={"resource": _i(0, 0, 2**31 - 1)},
              evaluable=False),
        # exposed input of a nested graph; its type is declared per instance
        _spec("graph_input", outputs=(("output", Free(G)),), evaluable=False),
        # library nodes kept as external references
        _spec("clouds_2", params={"scale": _i(4, 1, 64), "seed": seed},
              external=True, evaluable=False),
        _spec("tile_sampler", params={"count": _i(8, 1, 64), "seed": seed},
              external=True, evaluable=False),
        _spec("edge_detect", inputs=(("input", G),), params={"width": _f(0.1)},
              external=True, evaluable=False),
    ]
    return MappingProxyType({s.type_name: s for s in specs})


@lru_cache(maxsize=None)
def registry_builtin():
    """Return the fixed built-in registry (type name -> NodeTypeSpec).

    ``subgraph`` is intentionally absent: its slots come from the nested
    graph and are handled by the validator directly.
    """
    return _build()


SUBGRAPH = "subgraph"
