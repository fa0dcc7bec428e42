import json

import numpy as np
import pytest

from conftest import diamond
from matgraph.cli import main
from matgraph.core import MaterialGraph, make_node
from matgraph.corpus import random_graph
from matgraph.metrics import write_features
from matgraph.transpiler import emit_compact, emit_verbose, graphs_equal, parse_compact


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    pairs = dict(line.split("=", 1) for line in out.splitlines() if "=" in line)
    return code, pairs


@pytest.fixture
def graph_file(tmp_path):
    p = tmp_path / "d.sbsc"
    p.write_text(emit_compact(diamond()))
    return p


def test_validate(capsys, tmp_path, graph_file):
    assert run(capsys, "validate", graph_file)[0] == 0
    bad = tmp_path / "bad.sbsc"
    bad.write_text("nodes:\n  a:\n    type: invert\n    inputs: {input: b.output}\n"
                   "  b:\n    type: checker\noutputs:\n")
    code = main(["validate", str(bad)])
    assert code == 1 and "TOPOLOGY_VIOLATION" in capsys.readouterr().out


def test_missing_file_and_bad_extension(capsys, tmp_path):
    assert main(["validate", str(tmp_path / "none.sbsc")]) == 2
    (tmp_path / "x.txt").write_text("")
    assert main(["validate", str(tmp_path / "x.txt")]) == 2


def test_transpile_round_trip(capsys, tmp_path, graph_file):
    xml = tmp_path / "d.sbsv.xml"
    back = tmp_path / "e.sbsc"
    assert main(["transpile", str(graph_file), str(xml)]) == 0
    assert main(["transpile", str(xml), str(back)]) == 0
    assert back.read_bytes() == graph_file.read_bytes()
    assert main(["transpile", str(graph_file), str(tmp_path / "f.sbsc")]) == 2
    assert main(["transpile", "--canonical", str(graph_file), str(tmp_path / "f.sbsc")]) == 0


def test_render(capsys, tmp_path, graph_file):
    out = tmp_path / "r"
    code, kv = run(capsys, "render", graph_file, "--res", 32, "--outdir", out, "--per-node")
    assert code == 0
    for ch in ("basecolor", "normal", "roughness", "metallic", "height", "composite"):
        assert (out / f"{ch}.png").exists()
    assert {p.name for p in (out / "nodes").iterdir()} == {"g.png", "a.png", "b.png", "m.png"}
    assert (out / "channels_figure.png").exists()


def test_render_bad_resolution(capsys, graph_file):
    with pytest.raises(SystemExit) as e:
        main(["render", str(graph_file), "--res", "100"])
    assert e.value.code == 2


def test_render_unsupported(capsys, tmp_path):
    g = MaterialGraph((make_node("p", "pixel_processor"),), {"height": ("p", "output")})
    p = tmp_path / "p.sbsc"
    p.write_text(emit_compact(g))
    assert main(["render", str(p), "--res", "16", "--outdir", str(tmp_path / "o"), "--no-plot"]) == 1


def test_preprocess(capsys, tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    good = random_graph(4, 10)
    (src / "good.sbsv.xml").write_text(emit_verbose(good))
    (src / "good.sbsc").write_text("garbage")            # SBSV wins for the same stem
    bm = MaterialGraph((make_node("bm", "bitmap"),), {"basecolor": ("bm", "output")})
    (src / "bm.sbsv.xml").write_text(emit_verbose(bm))
    code, kv = run(capsys, "preprocess", src, tmp_path / "out")
    assert code == 0 and kv["accepted"] == "1" and kv["rejected"] == "1"
    report = (tmp_path / "out" / "report.txt").read_text().splitlines()
    assert any("bm.sbsv.xml accepted=false reasons=EMBEDDED_BITMAP" in r for r in report)
    out = parse_compact((tmp_path / "out" / "good.sbsc").read_text())
    assert len(out) <= len(good)
    (src / "broken.sbsv.xml").write_text("<graph>")
    assert main(["preprocess", str(src), str(tmp_path / "out2")]) == 1


def test_corpusgen_deterministic(capsys, tmp_path):
    code, kv = run(capsys, "corpusgen", "--n", 5, "--seed", 3, "--max-nodes", 12,
                   "--outdir", tmp_path / "a", "--plot", tmp_path / "h.png")
    assert code == 0 and float(kv["compression_mean"]) > 0.5
    run(capsys, "corpusgen", "--n", 5, "--seed", 3, "--max-nodes", 12, "--outdir", tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(files) == 10
    assert all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    assert (tmp_path / "h.png").exists()


def test_synth_replay(capsys, tmp_path):
    g = random_graph(9, 12)
    script = tmp_path / "s.sbsc"
    script.write_text(emit_compact(g))
    out = tmp_path / "run"
    code, kv = run(capsys, "synth", "--proposer", f"replay:{script}", "--mode", "text",
                   "--res", 32, "--outdir", out)
    assert code == 0 and kv["status"] == "OK" and float(kv["ner"]) == 0.0
    assert graphs_equal(parse_compact((out / "final.sbsc").read_text()), g)
    for name in ("manifest.json", "stats.txt", "trace.png", "phases.png", "final.sbsv.xml"):
        assert (out / name).exists()
    assert len(list((out / "steps").glob("*.sbsc"))) == len(g) + 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["run_id"] == kv["run_id"] and len(manifest["proposals"]) == len(g) + 1

    code, kv2 = run(capsys, "eval", "--metric", "ner", out / "manifest.json")
    assert code == 0 and float(kv2["value"]) == 0.0


def test_synth_manifest_replay(capsys, tmp_path):
    a = tmp_path / "a"
    code, kv = run(capsys, "synth", "--proposer", "random:3", "--mode", "text", "--res", 16,
                   "--max-nodes", 12, "--fault-rate", 0.3, "--outdir", a, "--no-plot")
    assert code == 0
    b = tmp_path / "b"
    code, kv2 = run(capsys, "synth", "--replay-manifest", a / "manifest.json", "--outdir", b,
                    "--no-plot")
    assert code == 0 and kv2["run_id"] == kv["run_id"]
    assert (a / "final.sbsc").read_bytes() == (b / "final.sbsc").read_bytes()
    assert kv2["nodes_discarded"] == kv["nodes_discarded"]


def test_synth_usage_errors(capsys, tmp_path):
    assert main(["synth", "--outdir", str(tmp_path / "x")]) == 2
    assert main(["synth", "--proposer", "magic:1", "--outdir", str(tmp_path / "y")]) == 2


def test_synth_budget_exhausted(capsys, tmp_path):
    code, kv = run(capsys, "synth", "--proposer", "random:1", "--mode", "text", "--res", 16,
                   "--fault-rate", 1.0, "--fault-kinds", "syntax", "--max-proposals", 5,
                   "--outdir", tmp_path / "r", "--no-plot")
    assert code == 1 and kv["status"] == "BUDGET_EXHAUSTED"


def test_eval_kid(capsys, tmp_path):
    rng = np.random.default_rng(0)
    write_features(tmp_path / "x.bin", rng.normal(size=(8, 4)))
    write_features(tmp_path / "y.bin", rng.normal(size=(8, 4)))
    code, kv = run(capsys, "eval", "--metric", "kid", tmp_path / "x.bin", tmp_path / "y.bin")
    assert code == 0 and float(kv["value_x100"]) == pytest.approx(100 * float(kv["value"]), rel=1e-5)
    write_features(tmp_path / "one.bin", rng.normal(size=(1, 4)))
    code, kv = run(capsys, "eval", "--metric", "kid", tmp_path / "one.bin", tmp_path / "y.bin")
    assert code == 1 and kv["error"] == "INSUFFICIENT_SAMPLES"


def test_eval_consec_gram_l1(capsys, tmp_path, graph_file):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "d.sbsc").write_text(graph_file.read_text())
    code, kv = run(capsys, "eval", "--metric", "consec", graph_file, corpus)
    assert code == 0 and float(kv["value"]) == 1.0
    rng = np.random.default_rng(1)
    np.savez(tmp_path / "a.npz", l0=rng.normal(size=(3, 4)))
    code, kv = run(capsys, "eval", "--metric", "gram", tmp_path / "a.npz", tmp_path / "a.npz")
    assert code == 0 and float(kv["value"]) == 0.0
    run(capsys, "render", graph_file, "--res", 16, "--outdir", tmp_path / "r", "--no-plot")
    c = tmp_path / "r" / "composite.png"
    code, kv = run(capsys, "eval", "--metric", "l1", c, c)
    assert code == 0 and float(kv["value"]) == 0.0
