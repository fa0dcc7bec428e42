from dataclasses import replace

import numpy as np
import pytest

from conftest import chain, const, diamond
from matgraph.core import MaterialGraph
from matgraph.engine import ImageBuffer, RenderCache, RenderSettings, eval_node
from matgraph.viz import VizError, layout, render_graph_card, render_thumbnail
from matgraph.viz.card import CELL_W, THUMB
from matgraph.viz.font import CELL, GLYPH_H, glyph, text_mask

S = RenderSettings(32, 0)


def filled_cache(g):
    cache = RenderCache(S)
    for v in g.nodes:
        eval_node(g, v.name, S, cache)
    return cache


def test_thumbnail_identity_and_constant():
    rng = np.random.default_rng(0)
    x = ImageBuffer(rng.random((140, 140, 4), dtype=np.float32))
    t = render_thumbnail(x).data
    assert np.array_equal(t[..., :3], x.data[..., :3]) and np.all(t[..., 3] == 1)
    c = render_thumbnail(const([0.3], 64)).data
    assert c.shape == (140, 140, 4)
    assert np.allclose(c[..., :3], 0.3) and np.ptp(c[..., :3]) == 0


def test_thumbnail_checker_halved():
    cells = (np.add.outer(np.arange(280) // 2, np.arange(280) // 2) % 2).astype(np.float32)
    t = render_thumbnail(ImageBuffer(cells[..., None])).data
    want = (np.add.outer(np.arange(140), np.arange(140)) % 2).astype(np.float32)
    for k in range(3):
        assert np.array_equal(t[..., k], want)


def test_layout_chain():
    g = chain(("a", "checker"), ("b", "invert", None, {"input": "a.output"}),
              ("c", "invert", None, {"input": "b.output"}))
    assert layout(g).positions == {"a": (0, 0), "b": (1, 0), "c": (2, 0)}


def test_layout_independent_generators():
    g = chain(("a", "checker"), ("b", "perlin_noise"))
    assert layout(g).positions == {"a": (0, 0), "b": (0, 1)}


def test_layout_diamond():
    pos = layout(diamond()).positions
    assert sorted(r for n, (c, r) in pos.items() if c == 1) == [0, 1]
    assert len(set(pos.values())) == len(pos)


def test_layout_barycenter_order():
    g = chain(("a", "checker"), ("b", "perlin_noise"),
              ("x", "invert", None, {"input": "b.output"}),
              ("y", "invert", None, {"input": "a.output"}))
    pos = layout(g).positions
    assert pos["y"] == (1, 0) and pos["x"] == (1, 1)


def test_layout_ignores_params():
    g = diamond()
    h = chain(("g", "checker", {"tiles": 9}), *[(v.name, v.type_name, None,
              {c.dst_slot: f"{c.src_node}.{c.src_slot}" for c in v.connections}) for v in g.nodes[1:]])
    assert layout(g) == layout(h)


def test_single_node_card():
    g = chain(("a", "checker"))
    card = render_graph_card(g, filled_cache(g))
    plan = layout(g)
    assert (card.height, card.width) == (plan.height, plan.width)
    x, y = plan.origin("a")
    tx = x + (CELL_W - THUMB) // 2
    ty = y + 2 * (CELL + 2)
    thumb = render_thumbnail(filled_cache(g)["a"]).data
    assert np.array_equal(card.data[ty:ty + THUMB, tx:tx + THUMB], thumb)
    label = card.data[y:y + CELL, x:x + CELL_W, 0]
    assert label.min() < 0.2   # ink present


def test_empty_graph_card():
    card = render_graph_card(MaterialGraph(), RenderCache(S))
    assert card.width > 0 and card.height > 0


def test_card_determinism():
    g = diamond()
    a = render_graph_card(g, filled_cache(g)).data
    b = render_graph_card(g, filled_cache(g)).data
    assert a.tobytes() == b.tobytes()


def test_rename_changes_only_label_pixels():
    g = diamond()
    ren = MaterialGraph(tuple(
        replace(v, name="zz") if v.name == "a" else replace(v, connections=tuple(
            replace(c, src_node="zz") if c.src_node == "a" else c for c in v.connections))
        for v in g.nodes), g.outputs)
    a = render_graph_card(g, filled_cache(g)).data
    b = render_graph_card(ren, filled_cache(ren)).data
    assert a.shape == b.shape
    diff = np.any(a != b, axis=-1)
    x, y = layout(g).origin("a")
    box = np.zeros_like(diff)
    box[y:y + CELL, x:x + CELL_W] = True
    assert diff.any() and not (diff & ~box).any()


def test_missing_preview():
    g = diamond()
    with pytest.raises(VizError) as e:
        render_graph_card(g, RenderCache(S))
    assert e.value.code == "MISSING_PREVIEW"


def test_glyphs_legible():
    assert GLYPH_H >= 7
    for ch in "abcdefghijklmnopqrstuvwxyz0123456789_.:->/~?":
        m = glyph(ch)
        rows = np.where(m.any(axis=1))[0]
        assert m.any()
        if ch.isalnum():
            assert rows.max() - rows.min() + 1 >= 7
    assert not np.array_equal(glyph("o"), glyph("0"))
    assert text_mask("ab").shape[1] == 2 * CELL
