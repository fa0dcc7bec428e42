"""Graph evaluation: per-node intermediate images and PBR channel maps."""
from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..core import CHANNELS, SUBGRAPH, MaterialGraph, SignalType, registry_builtin, topo_positions
from . import kernels as K
from .buffer import ImageBuffer, finish, resample_box, to_rgba
from .noise import fbm, node_key, perlin

CHANNEL_DEFAULTS = {
    "basecolor": (0.5, 0.5, 0.5, 1.0),
    "normal": (0.5, 0.5, 1.0, 1.0),
    "roughness": (1.0,),
    "metallic": (0.0,),
    "height": (0.5,),
}

# Fixed directional light for the composite preview (unit vector).
LIGHT = np.array([0.4, 0.5, 1.0]) / np.linalg.norm([0.4, 0.5, 1.0])


class EngineError(Exception):
    """Evaluation failure; ``code`` is EVAL_UNSUPPORTED, NUMERIC_DOMAIN, ..."""

    def __init__(self, code, node, message, channel=None):
        self.code = code
        self.node = node
        self.channel = channel
        self.message = message
        where = f"{channel}: " if channel else ""
        super().__init__(f"{code} {where}[{node}] {message}")

    def with_channel(self, channel):
        return EngineError(self.code, self.node, self.message, channel)


@dataclass(frozen=True)
class RenderSettings:
    resolution: int = 256
    seed: int = 0
    tiling: bool = True

    def __post_init__(self):
        r = self.resolution
        if not (16 <= r <= 4096) or r & (r - 1):
            raise ValueError(f"resolution must be a power of two in 16..4096, got {r}")
        if not (0 <= self.seed < 2 ** 64):
            raise ValueError("seed must be a 64-bit unsigned integer")


class RenderCache:
    """Per-node outputs for one fixed RenderSettings.

    Entries map node name -> {output slot: ImageBuffer}. Insertion of distinct
    keys is thread-safe and each node is computed at most once.
    """

    def __init__(self, settings: RenderSettings):
        self.settings = settings
        self._outputs = {}
        self._lock = threading.Lock()
        self._pending = {}

    def __contains__(self, name):
        return name in self._outputs

    def __getitem__(self, name) -> ImageBuffer:
        outs = self._outputs[name]
        return next(iter(outs.values()))

    def __len__(self):
        return len(self._outputs)

    def outputs(self, name) -> dict:
        return self._outputs[name]

    def names(self):
        return list(self._outputs)

    def put(self, name, outputs):
        with self._lock:
            self._outputs[name] = dict(outputs)

    def discard(self, name):
        with self._lock:
            self._outputs.pop(name, None)

    def compute_once(self, name, fn):
        with self._lock:
            if name in self._outputs:
                return self._outputs[name]
            ev = self._pending.get(name)
            owner = ev is None
            if owner:
                ev = self._pending[name] = threading.Event()
        if not owner:
            ev.wait()
            if name not in self._outputs:
                raise EngineError("EVAL_FAILED", name, "concurrent evaluation failed")
            return self._outputs[name]
        try:
            out = fn()
            with self._lock:
                self._outputs[name] = out
            return out
        finally:
            with self._lock:
                self._pending.pop(name, None)
            ev.set()


def _params(v, spec):
    p = {k: ps.default for k, ps in spec.params.items()}
    p.update(v.params)
    return p


def _generator(v, p, s: RenderSettings, qname):
    res = s.resolution
    u, w = K.pixel_coords(res, res, s.tiling)
    t = v.type_name
    if t == "uniform_color":
        val = p["value"]
        if v.output_types.get("output") == SignalType.GRAYSCALE:
            return ImageBuffer(finish(np.full((res, res, 1), val[0])))
        return ImageBuffer(finish(np.broadcast_to(np.array(val, dtype=np.float64), (res, res, 4))))
    if t == "perlin_noise":
        f = perlin(u, w, p["scale"], node_key(s.seed, qname, p["seed"]))
    elif t == "fbm_noise":
        keys = [node_key(s.seed, qname, p["seed"], k) for k in range(p["octaves"])]
        f = fbm(u, w, p["scale"], p["octaves"], p["persistence"], keys)
    elif t == "checker":
        f = K.checker_field(u, w, p["tiles"])
    elif t == "gradient_linear":
        f = K.gradient_field(u, w, p["direction"])
    elif t == "brick":
        f = K.brick_field(u, w, p["rows"], p["cols"], p["mortar"], p["offset"])
    elif t == "polygon_shape":
        f = K.polygon_field(u, w, p["sides"], p["radius"], p["rotation"], p["gradient"])
    else:
        raise EngineError("EVAL_UNSUPPORTED", v.name, f"no kernel for {t}")
    return ImageBuffer(finish(f[..., None]))


def gradient_stops(p):
    n = p["stops"]
    return [(p[f"pos{k}"], p[f"col{k}"]) for k in range(n)]


def _filter(v, p, ins, s: RenderSettings):
    t = v.type_name
    x = ins.get("input")
    res = s.resolution
    if t == "blend":
        return K.blend(ins["foreground"], ins["background"], ins.get("mask"), p["mode"], p["opacity"])
    if t == "levels":
        return K.levels(x, p["in_low"], p["in_high"], p["gamma"], p["out_low"], p["out_high"])
    if t == "blur_box":
        return K.blur_box_px(x, int(round(p["radius"] * res)), s.tiling)
    if t == "blur_gaussian":
        return K.blur_gaussian_px(x, p["sigma"] * res, s.tiling)
    if t == "invert":
        return K.invert(x)
    if t == "grayscale_conversion":
        return K.grayscale_conversion(x, p["weights"])
    if t == "gradient_map":
        return K.gradient_map(x, gradient_stops(p))
    if t == "transform_2d":
        return K.transform_2d(x, p["offset"], p["scale"], p["rotation"], s.tiling)
    if t == "normal_from_height":
        return K.normal_from_height(x, p["intensity"], s.tiling)
    raise EngineError("EVAL_UNSUPPORTED", v.name, f"no kernel for {t}")


class _Evaluator:
    def __init__(self, g: MaterialGraph, s: RenderSettings, cache: RenderCache,
                 prefix="", injected=None, registry=None):
        self.g = g
        self.s = s
        self.cache = cache
        self.prefix = prefix
        self.injected = injected or {}
        self.registry = registry or registry_builtin()
        self.index = g.index()

    def ancestors(self, name):
        seen = set()
        stack = [name]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            v = self.index.get(n)
            if v is None:
                raise EngineError("UNKNOWN_SOURCE", n, "node is not defined")
            stack.extend(c.src_node for c in v.connections)
        return seen

    def node_outputs(self, name):
        return self.cache.compute_once(name, lambda: self._compute(self.index[name]))

    def _compute(self, v):
        if v.type_name == "graph_input":
            if v.name in self.injected:
                return {"output": self.injected[v.name]}
            raise EngineError("EVAL_UNSUPPORTED", v.name, "graph input outside a subgraph")
        ins = {}
        for c in v.connections:
            src = self.cache.outputs(c.src_node) if c.src_node in self.cache else self.node_outputs(c.src_node)
            ins[c.dst_slot] = src[c.src_slot]
        if v.type_name == SUBGRAPH:
            return self._subgraph(v, ins)
        spec = self.registry.get(v.type_name)
        if spec is None:
            raise EngineError("UNKNOWN_TYPE", v.name, f"unknown node type {v.type_name!r}")
        if spec.external:
            raise EngineError("NUMERIC_DOMAIN", v.name, f"external reference {v.type_name} has no local kernel")
        if not spec.evaluable:
            raise EngineError("EVAL_UNSUPPORTED", v.name, f"{v.type_name} cannot be evaluated")
        p = _params(v, spec)
        try:
            if spec.is_generator:
                out = _generator(v, p, self.s, self.prefix + v.name)
            else:
                out = _filter(v, p, ins, self.s)
        except K.KernelError as e:
            raise EngineError(e.code, v.name, e.message) from None
        return {spec.outputs[0].name: out}

    def _subgraph(self, v, ins):
        inner = v.subgraph
        sub = _Evaluator(inner, self.s, RenderCache(self.s), self.prefix + v.name + "__",
                         injected=ins, registry=self.registry)
        out = {}
        for ch in CHANNELS:
            if ch in inner.outputs:
                node, slot = inner.outputs[ch]
                out[ch] = sub.node_outputs(node)[slot]
        return out

    def run(self, names, threads=1):
        needed = set()
        for n in names:
            needed |= self.ancestors(n)
        order = [v.name for v in self.g.nodes if v.name in needed and v.name not in self.cache]
        if threads <= 1 or len(order) < 2:
            for n in order:
                self.node_outputs(n)
            return
        depth = topo_positions(self.g)
        levels = {}
        for n in order:
            levels.setdefault(depth[n], []).append(n)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for d in sorted(levels):
                list(pool.map(self.node_outputs, levels[d]))


def eval_node(g: MaterialGraph, node: str, s: RenderSettings, cache: RenderCache = None,
              registry=None) -> ImageBuffer:
    """Primary-output image of ``node``; populates ``cache`` for it and its ancestors."""
    cache = cache if cache is not None else RenderCache(s)
    if cache.settings != s:
        raise ValueError("cache belongs to different render settings")
    ev = _Evaluator(g, s, cache, registry=registry)
    ev.run([node])
    return cache[node]


def default_channel(ch, res) -> ImageBuffer:
    return ImageBuffer.constant(res, res, CHANNEL_DEFAULTS[ch])


def eval_graph(g: MaterialGraph, s: RenderSettings, cache: RenderCache = None, threads=1,
               registry=None) -> dict:
    """All five channel maps; unbound channels get their documented defaults."""
    cache = cache if cache is not None else RenderCache(s)
    ev = _Evaluator(g, s, cache, registry=registry)
    out = {}
    for ch in CHANNELS:
        if ch not in g.outputs:
            out[ch] = default_channel(ch, s.resolution)
            continue
        node, slot = g.outputs[ch]
        try:
            ev.run([node], threads)
            out[ch] = cache.outputs(node)[slot]
        except EngineError as e:
            raise e.with_channel(ch) from None
    return out


def composite(channels: dict, resolution=None) -> ImageBuffer:
    """Base color shaded by the normal map under a fixed directional light.

    shade = clamp(dot(n, L) / L.z, 0, 1.5) with L = normalize(0.4, 0.5, 1) and
    n = normalize(2 * rgb - 1); out.rgb = clamp(basecolor.rgb * shade), alpha 1.
    A flat normal map therefore reproduces the base color exactly.
    """
    base = to_rgba(channels["basecolor"]).data.astype(np.float64)
    nrm = to_rgba(channels["normal"]).data[..., :3].astype(np.float64) * 2.0 - 1.0
    length = np.linalg.norm(nrm, axis=-1, keepdims=True)
    nrm = nrm / np.maximum(length, 1e-12)
    shade = np.clip(nrm @ LIGHT / LIGHT[2], 0.0, 1.5)[..., None]
    out = np.concatenate([base[..., :3] * shade, np.ones(base.shape[:2] + (1,))], axis=-1)
    buf = ImageBuffer(finish(out))
    if resolution and resolution != buf.width:
        buf = resample_box(buf, resolution, resolution)
    return buf


def render_composite(g: MaterialGraph, s: RenderSettings, registry=None) -> ImageBuffer:
    return composite(eval_graph(g, s, registry=registry))
