"""Batch command line mirroring the service for scripted runs and CI.

Subcommands: ingest, project, metrics, evaluate, theory, treecut, refine,
serve, bench. A flat key=value config file can supply defaults; explicit
flags always win. Every subcommand takes --seed where randomness exists, so
mock-provider runs are bit-reproducible.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .bench import run_benchmark
from .corpus import load_corpus, save_corpus
from .errors import DatasteerError
from .evaluate import compare
from .hierarchy import build_hierarchy, name_nodes, tree_cut
from .layout import load_layout, save_layout
from .projection import ContrastiveProjector, OrderPreservingProjector, save_history
from .prompts import PromptTemplate
from .providers import ProviderConfig, make_providers, provider_config_from_env
from .refine import EvolveConfig, FeedbackAction, evolve
from .theory import count_distance_orders, order_bound, verify_order_infeasibility


def read_flat_config(path: str | Path) -> dict:
    """Flat `key = value` file; values may be quoted strings, ints, floats,
    or true/false. Lines starting with # are comments."""
    out: dict = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line without '=': {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if value.startswith(('"', "'")) and value.endswith(value[0]):
            out[key] = value[1:-1]
        elif value.lower() in ("true", "false"):
            out[key] = value.lower() == "true"
        else:
            try:
                out[key] = int(value)
            except ValueError:
                try:
                    out[key] = float(value)
                except ValueError:
                    out[key] = value
    return out


def _merge_config(args: argparse.Namespace, keys: list[str]) -> dict:
    """Config-file values for `keys`, overridden by explicitly set flags."""
    merged = {}
    if getattr(args, "config", None):
        file_cfg = read_flat_config(args.config)
        merged.update({k: v for k, v in file_cfg.items() if k in keys})
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def cmd_ingest(args) -> int:
    corpus = load_corpus(args.corpus)
    if args.out:
        save_corpus(corpus, args.out)
    print(f"ok: {corpus.n_images} images, {corpus.n_labels} labels, "
          f"{len(corpus.graph.edges)} edges, dimension {corpus.dimension}")
    return 0


def cmd_project(args) -> int:
    corpus = load_corpus(args.corpus)
    cfg = _merge_config(args, ["epochs", "batch_size", "tau", "k", "m_negatives",
                               "lr", "seed"])
    if args.method == "contrastive":
        projector = ContrastiveProjector(**cfg)
    elif args.method == "image-only":
        projector = ContrastiveProjector(loss_kinds=("II",), **cfg)
    elif args.method == "order":
        projector = OrderPreservingProjector(
            epochs=cfg.get("epochs", 300), lr=cfg.get("lr", 1e-2),
            seed=cfg.get("seed", 0))
    else:
        raise DatasteerError(f"unknown method '{args.method}'")
    layout = projector.fit_transform(corpus)
    save_layout(layout, corpus, args.out)
    if args.history:
        if args.method == "order":
            Path(args.history).write_text(json.dumps(projector.history_, indent=2))
        else:
            save_history(projector.history_, args.history)
    print(f"layout written to {args.out}")
    return 0


def cmd_metrics(args) -> int:
    corpus = load_corpus(args.corpus)
    iterations = sorted({im.iteration for im in corpus.images if im.kind == "generated"})
    if not iterations:
        print("no generated images; nothing to score", file=sys.stderr)
        return 1
    points = [metrics_mod.metric_snapshot(corpus, it) for it in iterations]
    header = f"{'iter':>4}  {'informativeness':>15}  {'diversity':>9}  {'distance':>8}  {'count':>5}"
    print(header)
    for p in points:
        print(f"{p.iteration:>4}  {p.informativeness:>15.4f}  {p.diversity:>9.4f}  "
              f"{p.distance:>8.4f}  {p.generated_count:>5}")
    if args.out:
        metrics_mod.save_timeline(points, args.out)
    if args.svg:
        Path(args.svg).write_text(metrics_mod.render_timeline_svg(points))
    return 0


def cmd_evaluate(args) -> int:
    corpus = load_corpus(args.corpus)
    methods = {}
    for spec in args.layout:
        if "=" in spec:
            name, path = spec.split("=", 1)
        else:
            name, path = Path(spec).stem, spec
        methods[name] = load_layout(path)
    report = compare(methods, corpus, k=args.k)
    print(report.to_table())
    if args.out:
        Path(args.out).write_text(report.to_json())
    return 0


def cmd_theory(args) -> int:
    if args.bound is not None:
        print(order_bound(args.bound))
        return 0
    if args.count_orders:
        pts = json.loads(Path(args.count_orders).read_text())
        cert = count_distance_orders(pts)
        print(json.dumps({"n": cert.n, "realized": cert.realized, "bound": cert.bound,
                          "orders": sorted(list(o) for o in cert.realized_orders)}))
        return 0
    if args.infeasibility:
        corpus = load_corpus(args.infeasibility)
        report = verify_order_infeasibility(corpus, trials=args.trials, seed=args.seed or 0)
        print(json.dumps({
            "n_images": report.n_images, "demanded_orders": report.demanded_orders,
            "bound": report.bound, "certified_infeasible": report.certified_infeasible,
            "trials": report.trials, "min_residual": report.min_residual,
            "evidence_only": report.evidence_only}))
        return 0
    print("theory: pass --bound N, --count-orders FILE, or --infeasibility CORPUS",
          file=sys.stderr)
    return 2


def cmd_treecut(args) -> int:
    corpus = load_corpus(args.corpus)
    tree = build_hierarchy(corpus.labels, corpus=corpus)
    providers = make_providers(provider_config_from_env(
        ProviderConfig(kind="mock", seed=args.seed or 0, dim=corpus.dimension)))
    tree = name_nodes(tree, providers.namer,
                      frequencies={la.id: la.frequency for la in corpus.labels})
    focus = args.focus or tree.root_id
    cut = tree_cut(tree, focus, args.budget)
    nodes = [{"id": nid, "name": tree.node(nid).name,
              "members": list(tree.node(nid).members),
              "original_count": tree.node(nid).original_count,
              "generated_count": tree.node(nid).generated_count}
             for nid in sorted(cut.node_ids)]
    print(json.dumps({"focus": focus, "budget": args.budget, "nodes": nodes}, indent=2))
    if args.tree_out:
        Path(args.tree_out).write_text(tree.to_json())
    return 0


def cmd_refine(args) -> int:
    corpus = load_corpus(args.corpus)
    fb = json.loads(Path(args.feedback).read_text())
    action = FeedbackAction(kind=fb["kind"], image_ids=frozenset(fb["image_ids"]),
                            class_name=fb["class"])
    prompt_data = json.loads(Path(args.prompt).read_text())
    prompt = PromptTemplate(id=prompt_data["id"], class_name=prompt_data["class_name"],
                            text=prompt_data["text"],
                            version=prompt_data.get("version", 0))
    providers = make_providers(provider_config_from_env(
        ProviderConfig(kind="mock", seed=args.seed or 0, dim=corpus.dimension)))
    new_prompt, trace = evolve(prompt, action, corpus, providers,
                               EvolveConfig(n_proxies=args.proxies, epsilon=args.epsilon,
                                            max_iter=args.max_iter, seed=args.seed or 0))
    Path(args.out).write_text(json.dumps(new_prompt.as_dict(), indent=2))
    if args.trace:
        Path(args.trace).write_text(json.dumps(trace.as_dict(), indent=2))
    print(f"refined prompt v{new_prompt.version}: {new_prompt.text}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def cmd_bench(args) -> int:
    result = run_benchmark(seed=args.seed or 0, epochs=args.epochs,
                           baseline_epochs=args.baseline_epochs)
    print(result.report.to_table())
    print(f"inter-modal dominance: {result.inter_dominance}")
    print(f"intra-modal gap vs image-only: "
          f"{ {k: round(v, 4) for k, v in result.intra_gap.items()} }")
    if args.out:
        Path(args.out).write_text(result.report.to_json())
    if not result.dominant:
        print("FAIL: contrastive projector did not dominate the order baseline "
              "on the inter-modal columns", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="datasteer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a corpus file and normalize it")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("project", help="train a projector and export the layout")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history")
    p.add_argument("--method", default="contrastive",
                   choices=["contrastive", "order", "image-only"])
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--m-negatives", dest="m_negatives", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("metrics", help="print the metric timeline of a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", help="write line-delimited JSON timeline here")
    p.add_argument("--svg", help="write an SVG line chart here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("evaluate", help="score one or more layouts against a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--layout", action="append", required=True,
                   help="layout file, optionally name=path; repeatable")
    p.add_argument("--k", type=int, default=30)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("theory", help="order bounds, order counting, infeasibility probes")
    p.add_argument("--bound", type=int)
    p.add_argument("--count-orders", dest="count_orders",
                   help="JSON file with a list of [x, y] points")
    p.add_argument("--infeasibility", help="corpus file to probe")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("treecut", help="build the label hierarchy and cut it")
    p.add_argument("--corpus", required=True)
    p.add_argument("--budget", type=int, default=8)
    p.add_argument("--focus")
    p.add_argument("--seed", type=int)
    p.add_argument("--tree-out", dest="tree_out")
    p.set_defaults(func=cmd_treecut)

    p = sub.add_parser("refine", help="evolve a prompt from feedback")
    p.add_argument("--corpus", required=True)
    p.add_argument("--feedback", required=True, help='JSON {"kind", "class", "image_ids"}')
    p.add_argument("--prompt", required=True, help="JSON prompt file")
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.add_argument("--proxies", type=int, default=8)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="run the synthetic projection benchmark")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--baseline-epochs", dest="baseline_epochs", type=int, default=200)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DatasteerError as exc:
        print(f"error [{exc.__class__.__name__}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
