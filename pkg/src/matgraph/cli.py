"""Command-line entry point: ``matgraph <command> ...``.

Exit codes: 0 success, 1 failure (invalid input, evaluation or metric error),
2 usage or I/O error. Results are printed as ``key=value`` lines.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .core import CHANNELS, validate_graph
from .corpus import random_graph
from .engine import (
    EngineError, RenderCache, RenderSettings, composite, eval_graph, eval_node, export_png,
    load_png,
)
from .metrics import (
    MetricError, consec_match_score, corpus_ner, gram_l1, kid, mask_params, pixel_l1,
    read_features,
)
from .preprocess import FilterVerdict, PreprocessError, standardize
from .transpiler import (
    ParseFailure, compression_ratio, emit_compact, emit_verbose, parse_compact,
    parse_compact_raw, parse_verbose,
)

SBSC = ".sbsc"
SBSV = ".sbsv.xml"


class UsageError(Exception):
    pass


def kv(**pairs):
    for k, v in pairs.items():
        if isinstance(v, float):
            v = f"{v:.6g}"
        print(f"{k}={v}")


def fmt_of(path) -> str:
    name = str(path)
    if name.endswith(SBSV):
        return "sbsv"
    if name.endswith(SBSC):
        return "sbsc"
    raise UsageError(f"{path}: expected a {SBSC} or {SBSV} file")


def read_text(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def load_graph(path, raw=False):
    text = read_text(path)
    if fmt_of(path) == "sbsv":
        return parse_verbose(text)
    return parse_compact_raw(text) if raw else parse_compact(text)


def write_graph(g, stem: Path):
    stem.parent.mkdir(parents=True, exist_ok=True)
    a = stem.with_name(stem.name + SBSC)
    b = stem.with_name(stem.name + SBSV)
    a.write_text(emit_compact(g), encoding="utf-8")
    b.write_text(emit_verbose(g), encoding="utf-8")
    return a, b


def stem_of(path: Path) -> str:
    name = path.name
    for ext in (SBSV, SBSC):
        if name.endswith(ext):
            return name[: -len(ext)]
    return path.stem


def print_parse_failure(path, e: ParseFailure):
    for err in e.errors:
        print(f"{path}:{err}", file=sys.stderr)


def resolution(text) -> int:
    r = int(text)
    if not (16 <= r <= 4096) or r & (r - 1):
        raise argparse.ArgumentTypeError(f"resolution must be a power of two in 16..4096, got {r}")
    return r


# -- commands ---------------------------------------------------------------

def cmd_validate(args) -> int:
    try:
        g = load_graph(args.path, raw=True)
    except ParseFailure as e:
        print_parse_failure(args.path, e)
        kv(ok=False, errors=len(e.errors))
        return 1
    report = validate_graph(g)
    for issue in report.errors:
        print(f"{issue.code.value} {issue.where}: {issue.message}")
    kv(ok=report.ok, nodes=len(g), errors=len(report.errors))
    return 0 if report.ok else 1


def cmd_transpile(args) -> int:
    src, dst = fmt_of(args.input), fmt_of(args.output)
    if src == dst and not args.canonical:
        raise UsageError("same input and output format; pass --canonical to normalize")
    try:
        g = load_graph(args.input)
    except ParseFailure as e:
        print_parse_failure(args.input, e)
        return 1
    text = emit_compact(g) if dst == "sbsc" else emit_verbose(g)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    kv(input=args.input, output=out, nodes=len(g), bytes=len(text.encode("utf-8")))
    return 0


def _render_outputs(g, s, outdir: Path, per_node=False, threads=1, plot=True):
    outdir.mkdir(parents=True, exist_ok=True)
    cache = RenderCache(s)
    maps = eval_graph(g, s, cache, threads=threads)
    for ch in CHANNELS:
        export_png(maps[ch], outdir / f"{ch}.png")
    comp = composite(maps)
    export_png(comp, outdir / "composite.png")
    n_prev = 0
    if per_node:
        (outdir / "nodes").mkdir(exist_ok=True)
        for v in g.nodes:
            eval_node(g, v.name, s, cache)
            export_png(cache[v.name], outdir / "nodes" / f"{v.name}.png")
            n_prev += 1
    if plot:
        from .plotting import plot_channels
        plot_channels({**maps, "composite": comp}, outdir / "channels_figure.png")
    return comp, n_prev


def cmd_render(args) -> int:
    try:
        g = load_graph(args.input)
    except ParseFailure as e:
        print_parse_failure(args.input, e)
        return 1
    s = RenderSettings(args.res, args.seed)
    outdir = Path(args.outdir)
    try:
        _, n_prev = _render_outputs(g, s, outdir, args.per_node, args.threads, not args.no_plot)
    except EngineError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    kv(outdir=outdir, resolution=args.res, seed=args.seed, previews=n_prev)
    return 0


def cmd_preprocess(args) -> int:
    """Standardize every graph in ``indir``; SBSV wins when a stem has both formats.

    Writes ``<stem>.sbsc`` for accepted graphs and ``report.txt`` with one
    ``path accepted=... reasons=...`` line per input.
    """
    indir, outdir = Path(args.indir), Path(args.outdir)
    if not indir.is_dir():
        raise FileNotFoundError(f"{indir}: not a directory")
    chosen = {}
    for p in sorted(indir.iterdir()):
        if p.name.endswith(SBSV) or (p.name.endswith(SBSC) and stem_of(p) not in chosen):
            chosen[stem_of(p)] = p
    outdir.mkdir(parents=True, exist_ok=True)
    counts = {"accepted": 0, "rejected": 0, "failed": 0}
    report = []
    for stem, p in sorted(chosen.items()):
        try:
            result = standardize(load_graph(p), args.max_nodes)
        except ParseFailure as e:
            print_parse_failure(p, e)
            counts["failed"] += 1
            report.append(f"{p} accepted=false reasons=PARSE_ERROR")
            continue
        except PreprocessError as e:
            print(f"{p}: {e}", file=sys.stderr)
            counts["failed"] += 1
            report.append(f"{p} accepted=false reasons={e.code}")
            continue
        if isinstance(result, FilterVerdict):
            counts["rejected"] += 1
            report.append(f"{p} accepted=false reasons={','.join(r.value for r in result.reasons)}")
            continue
        (outdir / (stem + SBSC)).write_text(emit_compact(result), encoding="utf-8")
        counts["accepted"] += 1
        report.append(f"{p} accepted=true reasons=")
    (outdir / "report.txt").write_text("".join(line + "\n" for line in report), encoding="utf-8")
    kv(files=len(chosen), **counts, report=outdir / "report.txt")
    return 1 if counts["failed"] else 0


def _fault_kinds(text):
    from .synth import FAULT_KINDS
    kinds = tuple(k for k in text.split(",") if k)
    bad = [k for k in kinds if k not in FAULT_KINDS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown fault kind(s) {bad}; choose from {FAULT_KINDS}")
    return kinds


def make_proposer(spec: str, args, log_dir=None):
    from .synth import HttpProposer, RandomProposer, ReplayProposer
    kind, _, rest = spec.partition(":")
    if kind == "replay":
        return ReplayProposer(read_text(rest))
    if kind == "random":
        return RandomProposer(int(rest or args.seed), end_prob=args.end_prob,
                              min_nodes=args.min_nodes)
    if kind == "http":
        return HttpProposer(rest, args.model, args.temperature, args.top_p, log_dir=log_dir)
    raise UsageError(f"unknown proposer {spec!r}; use replay:FILE, random:SEED or http:URL")


class _Recorder:
    def __init__(self, inner):
        self.inner = inner
        self.proposals = []

    def __call__(self, ctx):
        p = self.inner(ctx)
        self.proposals.append((p.kind, p.text))
        return p


def _synth_config(d: dict):
    from .synth import Mode, SynthConfig
    return SynthConfig(
        max_nodes=d["max_nodes"], max_total_proposals=d["max_total_proposals"], mode=Mode(d["mode"]),
        render=RenderSettings(d["resolution"], d["seed"]), repair_enabled=d["repair"],
        seed=d["seed"], temperature=d["temperature"], top_p=d["top_p"],
    )


def cmd_synth(args) -> int:
    from .plotting import plot_loss_history, plot_phase_times, plot_synthesis_trace
    from .synth import (
        CorruptingProposer, FaultPlan, ManifestProposer, SynthError, optimize_params_ex,
        synthesize,
    )

    outdir = Path(args.outdir)
    if args.replay_manifest:
        old = json.loads(read_text(args.replay_manifest))
        config = old["config"]
        proposer = ManifestProposer([tuple(p) for p in old["proposals"]])
    else:
        if not args.proposer:
            raise UsageError("--proposer is required unless --replay-manifest is given")
        config = {
            "proposer": args.proposer, "mode": args.mode, "max_nodes": args.max_nodes,
            "max_total_proposals": args.max_proposals, "resolution": args.res, "seed": args.seed,
            "repair": not args.no_repair, "fault_rate": args.fault_rate,
            "fault_kinds": list(args.fault_kinds), "target": args.target,
            "optimize": args.optimize, "temperature": args.temperature, "top_p": args.top_p,
        }
        proposer = make_proposer(args.proposer, args, outdir / "http")
        if args.fault_rate > 0:
            proposer = CorruptingProposer(
                proposer, FaultPlan(rate=args.fault_rate, kinds=tuple(args.fault_kinds), seed=args.seed))
    cfg = _synth_config(config)
    target = load_png(config["target"]) if config.get("target") else None
    run_id = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:12]
    recorder = _Recorder(proposer)
    snapshots = outdir / "steps"
    snapshots.mkdir(parents=True, exist_ok=True)

    def on_event(ev, tree, cache):
        g = tree.graph()
        (snapshots / f"step{ev.step:04d}{SBSC}").write_text(emit_compact(g), encoding="utf-8")
        if ev.verdict != "invalid" and g.nodes:
            v = g.nodes[-1]
            if v.name in cache:
                export_png(cache[v.name], snapshots / f"step{ev.step:04d}_{v.name}.png")

    code, message = "OK", ""
    try:
        g, tree, stats = synthesize(recorder, cfg, target, on_event=on_event)
    except SynthError as e:
        code, message = e.code, str(e)
        g, tree, stats = None, e.tree, e.stats

    opt = None
    if g is not None and config.get("optimize") and target is not None:
        opt = optimize_params_ex(g, target, config["optimize"], seed=config["seed"])
        g = opt.graph

    manifest = {
        "run_id": run_id,
        "config": config,
        "status": code,
        "events": [
            {**{k: v for k, v in asdict(ev).items() if k != "text"},
             "text_sha256": hashlib.sha256(ev.text.encode()).hexdigest()}
            for ev in stats.events
        ],
        "proposals": [list(p) for p in recorder.proposals],
        "outputs": {},
    }
    kv(run_id=run_id, status=code)
    if message:
        print(f"error: {message}", file=sys.stderr)
    if g is not None:
        a, b = write_graph(g, outdir / "final")
        try:
            _render_outputs(g, cfg.render, outdir / "render", plot=not args.no_plot)
        except EngineError as e:
            print(f"error: {e}", file=sys.stderr)
            code = "EVAL_FAILED"
        manifest["outputs"] = {"sbsc": a.name, "sbsv": b.name, "render": "render"}
    stats_lines = {
        "nodes": len(g) if g is not None else 0,
        "nodes_generated": stats.nodes_generated, "nodes_discarded": stats.nodes_discarded,
        "ner": stats.ner, "repairs": stats.repairs, "end_failures": stats.end_failures,
        "proposals": stats.proposals, "auto_bound": stats.auto_bound,
        **{f"time_{k}": v for k, v in stats.timings.items()},
    }
    if opt is not None:
        stats_lines.update(opt_initial_loss=opt.initial_loss, opt_loss=opt.loss,
                           opt_evaluations=opt.evaluations)
    (outdir / "stats.txt").write_text(
        "".join(f"{k}={v}\n" for k, v in stats_lines.items()), encoding="utf-8")
    manifest["stats"] = stats_lines
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    if not args.no_plot:
        plot_synthesis_trace(stats.events, outdir / "trace.png")
        plot_phase_times(stats.timings, outdir / "phases.png")
        if opt is not None:
            plot_loss_history(opt.history, outdir / "optimize_loss.png")
    kv(**stats_lines, outdir=outdir)
    return 0 if code == "OK" else 1


def _masked_corpus(paths):
    out = []
    for p in paths:
        p = Path(p)
        files = sorted(p.glob(f"*{SBSC}")) if p.is_dir() else [p]
        out += [mask_params(read_text(f)) for f in files]
    return out


def _load_layers(path):
    with np.load(path) as z:
        return [z[k] for k in sorted(z.files)]


def cmd_eval(args) -> int:
    m, inputs = args.metric, args.inputs
    try:
        if m == "kid":
            if len(inputs) != 2:
                raise UsageError("kid takes two feature files")
            value = kid(read_features(inputs[0]), read_features(inputs[1]), args.block_size)
        elif m == "ner":
            ratios = []
            for p in inputs:
                s = json.loads(read_text(p))["stats"]
                ratios.append(s["nodes_discarded"] / s["nodes_generated"] if s["nodes_generated"] else 0.0)
            value = corpus_ner(ratios)
            kv(runs=len(ratios))
        elif m == "consec":
            if len(inputs) < 2:
                raise UsageError("consec takes a candidate and one or more corpus files/directories")
            cand = mask_params(read_text(inputs[0]))
            corpus = _masked_corpus(inputs[1:])
            value = consec_match_score(cand, corpus)
            kv(corpus_size=len(corpus), candidate_tokens=len(cand))
        elif m == "gram":
            if len(inputs) != 2:
                raise UsageError("gram takes two .npz feature-map stacks")
            value = gram_l1(_load_layers(inputs[0]), _load_layers(inputs[1]))
        else:
            if len(inputs) != 2:
                raise UsageError("l1 takes two PNG images")
            value = pixel_l1(load_png(inputs[0]), load_png(inputs[1]))
    except MetricError as e:
        print(f"error: {e}", file=sys.stderr)
        kv(metric=m, error=e.code)
        return 1
    except ParseFailure as e:
        print_parse_failure(inputs[0], e)
        return 1
    kv(metric=m, value=value, value_x100=100.0 * value)
    return 0


def cmd_corpusgen(args) -> int:
    outdir = Path(args.outdir)
    ratios = []
    for k in range(args.n):
        seed = args.seed + k
        g = random_graph(seed, args.max_nodes)
        write_graph(g, outdir / f"g{seed:06d}")
        ratios.append(compression_ratio(g))
    if args.plot:
        from .plotting import plot_histogram
        plot_histogram(ratios, args.plot, "compression ratio", threshold=0.70)
    kv(graphs=args.n, outdir=outdir, compression_mean=float(np.mean(ratios)) if ratios else 0.0,
       compression_min=float(np.min(ratios)) if ratios else 0.0)
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="matgraph", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a graph file")
    p.add_argument("path")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("transpile", help="convert between .sbsc and .sbsv.xml")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--canonical", action="store_true", help="allow same-format normalization")
    p.set_defaults(fn=cmd_transpile)

    p = sub.add_parser("render", help="render channel maps and the composite")
    p.add_argument("input")
    p.add_argument("--res", type=resolution, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", default="render")
    p.add_argument("--per-node", action="store_true")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("preprocess", help="flatten, prune and filter a directory of graphs")
    p.add_argument("indir")
    p.add_argument("outdir")
    p.add_argument("--max-nodes", type=int, default=128)
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("synth", help="run the tree-search synthesis loop")
    p.add_argument("--proposer", help="replay:FILE, random:SEED or http:URL")
    p.add_argument("--mode", choices=("mixed", "graph", "text"), default="mixed")
    p.add_argument("--target", help="target composite PNG")
    p.add_argument("--optimize", type=int, default=0, metavar="EVALS",
                   help="refine continuous params against --target")
    p.add_argument("--max-nodes", type=int, default=128)
    p.add_argument("--max-proposals", type=int, default=1000)
    p.add_argument("--res", type=resolution, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-repair", action="store_true")
    p.add_argument("--fault-rate", type=float, default=0.0)
    p.add_argument("--fault-kinds", type=_fault_kinds,
                   default=("unknown_param", "type_mismatch", "forward_ref", "syntax"))
    p.add_argument("--end-prob", type=float, default=0.05)
    p.add_argument("--min-nodes", type=int, default=1)
    p.add_argument("--model", default="material-vlm")
    p.add_argument("--temperature", type=float, default=0.8)
    p.add_argument("--top-p", type=float, default=0.95)
    p.add_argument("--outdir", default="synth_run")
    p.add_argument("--replay-manifest", help="re-run from a recorded manifest.json")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("eval", help="compute an evaluation metric")
    p.add_argument("--metric", required=True, choices=("kid", "ner", "consec", "gram", "l1"))
    p.add_argument("--block-size", type=int)
    p.add_argument("inputs", nargs="+")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("corpusgen", help="write random valid graphs in both formats")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--max-nodes", type=int, default=128)
    p.add_argument("--outdir", default="corpus")
    p.add_argument("--plot", help="write a compression-ratio histogram to this PNG")
    p.set_defaults(fn=cmd_corpusgen)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as e:
        ap.print_usage(sys.stderr)
        print(f"matgraph: error: {e}", file=sys.stderr)
        return 2
    except (OSError, UnicodeDecodeError) as e:
        print(f"matgraph: I/O error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
