"""Derivative-free refinement of continuous parameters against a target render.

Coordinate descent over every continuous scalar (tuple components
separately): a coarse grid scan over the parameter's range, then a
golden-section search in the best cell. A new value is kept only if it lowers
the loss, so the loss never increases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from ..core import MaterialGraph, node_issues, registry_builtin
from ..engine import EngineError, ImageBuffer, RenderSettings, render_composite, resample_box
from ..metrics import pixel_l1

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class OptimizeResult(NamedTuple):
    graph: MaterialGraph
    loss: float
    initial_loss: float
    evaluations: int
    history: tuple = ()     # (evaluation index, loss) after each accepted move


@dataclass(frozen=True)
class Coordinate:
    node: str
    param: str
    component: int      # -1 for scalars
    lo: float
    hi: float

    @property
    def log(self) -> bool:
        """Ratio-like ranges (gamma, intensity, scale) are searched in log space."""
        return self.lo > 0 and self.hi / self.lo >= 10.0

    def to_t(self, x):
        return math.log(x) if self.log else x

    def from_t(self, t):
        return math.exp(t) if self.log else t

    @property
    def span(self):
        return self.to_t(self.lo), self.to_t(self.hi)


def coordinates(g: MaterialGraph, registry=None) -> list:
    registry = registry or registry_builtin()
    out = []
    for v in g.nodes:
        spec = registry.get(v.type_name)
        if spec is None:
            continue
        for k, ps in spec.params.items():
            if ps.kind != "float" or not ps.continuous or ps.lo is None or ps.hi is None:
                continue
            comps = [-1] if ps.arity == 1 else list(range(ps.arity))
            out += [Coordinate(v.name, k, c, float(ps.lo), float(ps.hi)) for c in comps]
    return out


def get_value(g, c: Coordinate) -> float:
    x = g.node(c.node).params[c.param]
    return float(x if c.component < 0 else x[c.component])


def set_value(g, c: Coordinate, value: float) -> MaterialGraph:
    nodes = []
    for v in g.nodes:
        if v.name == c.node:
            params = dict(v.params)
            if c.component < 0:
                params[c.param] = float(value)
            else:
                t = list(params[c.param])
                t[c.component] = float(value)
                params[c.param] = tuple(t)
            v = replace(v, params=params)
        nodes.append(v)
    return MaterialGraph(tuple(nodes), g.outputs, g.extra_outputs)


class _Objective:
    def __init__(self, target, settings, registry, budget):
        self.target = target
        self.settings = settings
        self.registry = registry
        self.budget = budget
        self.evaluations = 0

    @property
    def left(self):
        return self.budget - self.evaluations

    def __call__(self, g, changed=None) -> float:
        if changed is not None:
            env = {}
            for v in g.nodes:
                if v.name == changed:
                    if node_issues(v, env, self.registry):
                        return math.inf
                    break
                env[v.name] = v.output_types
        self.evaluations += 1
        try:
            return pixel_l1(render_composite(g, self.settings), self.target)
        except EngineError:
            return math.inf


def _scan(f, lo, hi, obj, grid):
    """Loss at ``grid`` evenly spaced points (fewer if the budget runs out)."""
    xs, vals = [], []
    for x in np.linspace(lo, hi, grid):
        if obj.left <= 0:
            break
        xs.append(float(x))
        vals.append(f(x))
    return xs, vals


def _refine(f, xs, vals, lo, hi, obj):
    """Golden section inside the grid cell pair around the best scanned point."""
    k = int(np.argmin(vals))
    best_x, best_f = xs[k], vals[k]
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, len(xs) - 1)]
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc = f(c) if obj.left > 0 else math.inf
    fd = f(d) if obj.left > 0 else math.inf
    for x, fx in ((c, fc), (d, fd)):
        if fx < best_f:
            best_x, best_f = float(x), fx
    while obj.left > 0 and (b - a) > 1e-4 * (hi - lo):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            x = c
            fx = fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            x = d
            fx = fd = f(d)
        if fx < best_f:
            best_x, best_f = float(x), fx
    return best_x, best_f


def _line_search(f, lo, hi, obj, grid):
    xs, vals = _scan(f, lo, hi, obj, grid)
    if len(xs) < grid:
        k = int(np.argmin(vals)) if vals else 0
        return (xs[k], vals[k]) if vals else (None, math.inf)
    return _refine(f, xs, vals, lo, hi, obj)


def optimize_params_ex(g: MaterialGraph, target: ImageBuffer, budget: int = 500,
                       settings: RenderSettings = None, seed: int = 0, grid: int = 9,
                       registry=None) -> OptimizeResult:
    """Screened coordinate descent.

    Each round grid-scans every coordinate at the current point, then runs
    line searches in order of decreasing scanned gain, so the coordinate that
    explains most of the loss moves before others can partly compensate for
    it. A round with no accepted move ends the search.
    """
    registry = registry or registry_builtin()
    settings = settings or RenderSettings(64, 0)
    if (target.width, target.height) != (settings.resolution, settings.resolution):
        target = resample_box(target, settings.resolution, settings.resolution)
    if budget <= 0:
        return OptimizeResult(g, math.nan, math.nan, 0)
    obj = _Objective(target, settings, registry, budget)
    loss = obj(g)
    initial = loss
    history = [(obj.evaluations, loss)]
    coords = coordinates(g, registry)
    rng = np.random.default_rng(seed)

    def along(base, c):
        return lambda t: obj(set_value(base, c, min(max(c.from_t(t), c.lo), c.hi)), c.node)

    def accept(base, c, t):
        return set_value(base, c, min(max(c.from_t(t), c.lo), c.hi))

    while coords and obj.left > 0 and loss > 0.0:
        scans = []
        for k in rng.permutation(len(coords)):
            if obj.left <= 0:
                break
            xs, vals = _scan(along(g, coords[k]), *coords[k].span, obj, grid)
            if vals and min(vals) < loss:
                scans.append((loss - min(vals), len(scans), coords[k], xs, vals))
        scans.sort(key=lambda t: (-t[0], t[1]))
        start = g
        improved = False
        for _, _, c, xs, vals in scans:
            if obj.left <= 0 or loss == 0.0:
                break
            if g is start:
                x, fx = _refine(along(g, c), xs, vals, *c.span, obj)
            else:
                x, fx = _line_search(along(g, c), *c.span, obj, grid)
            if fx < loss:
                g, loss, improved = accept(g, c, x), fx, True
                history.append((obj.evaluations, loss))
        if not improved:
            break
    return OptimizeResult(g, loss, initial, obj.evaluations, tuple(history))


def optimize_params(g: MaterialGraph, target: ImageBuffer, budget: int = 500, **kw) -> MaterialGraph:
    """Continuous parameters of ``g`` tuned to match ``target``; never worse than ``g``."""
    return optimize_params_ex(g, target, budget, **kw).graph
