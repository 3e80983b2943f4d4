"""Command-line entry point wiring ingestion, graph building, training,
evaluation, synthesis, and report rendering into reproducible pipelines."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    MasterTables,
    SchemaError,
    TraceDiagError,
    read_master_tables,
    validate_master_tables,
    write_master_tables,
)
from .graphs import build_all_graphs, dump_graph, export_text, read_embedding_table
from .ingest import (
    DEFAULT_LABEL_RULES,
    IngestConfig,
    ingest_bgl_file,
    load_label_rules,
    tracebench_filter,
    tracebench_to_master_tables,
)
from .models import McvModel, gcn_forward, load_checkpoint, predict_logits, save_checkpoint
from .pipeline import (
    build_graph_dataset,
    build_vector_dataset,
    derive_seed,
    make_pseudo_embeddings,
    split_for_task,
    task_labels,
)
from .synth import SynthConfig, generate_dataset
from .traineval import (
    Metrics,
    TrainConfig,
    evaluate_predictions,
    make_batch,
    read_splits,
    train_loop,
    write_report,
    write_splits,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


def _load_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _write_manifest(out_dir: Path, command: str, args: dict, started: float, status: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "config": {k: v for k, v in args.items() if not k.startswith("_")},
        "status": status,
        "tool_version": __version__,
        "duration_seconds": round(time.time() - started, 3),
    }
    tmp = out_dir / "manifest.json.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, out_dir / "manifest.json")


def _load_tables(path: str, kind: str) -> MasterTables:
    tables = read_master_tables(path, dataset_kind=kind)
    report = validate_master_tables(tables)
    if not report.ok:
        raise SchemaError(f"{path}: {len(report.violations)} validation violations, first: {report.violations[0]}")
    return tables


def _embeddings_for(args, tables: MasterTables):
    if getattr(args, "embeddings", None):
        return read_embedding_table(args.embeddings)
    if getattr(args, "pseudo_dim", 0):
        return make_pseudo_embeddings(tables, args.pseudo_dim)
    return None


def cmd_parse_bgl(args) -> int:
    config = IngestConfig(window_seconds=args.window_seconds)
    tables = ingest_bgl_file(args.input, config)
    write_master_tables(tables, args.out)
    return EXIT_OK


def cmd_ingest_tracebench(args) -> int:
    rules = load_label_rules(args.rules) if args.rules else DEFAULT_LABEL_RULES
    tables = tracebench_to_master_tables(args.traces, args.events, args.edges, rules)
    config = IngestConfig(
        excluded_faults=set(args.excluded_faults.split(",")) if args.excluded_faults else {"slowHDFS"},
        keep_default_scenario_only=not args.no_filter,
    )
    if not args.no_filter:
        tables = tracebench_filter(tables, config, getattr(tables, "_scenarios", None))
    write_master_tables(tables, args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    mix = {}
    if args.fault_mix:
        for item in args.fault_mix.split(","):
            kind, _, p = item.partition("=")
            mix[kind] = float(p)
    lo, _, hi = args.events.partition(":")
    flo, _, fhi = args.fanout.partition(":")
    config = SynthConfig(
        n_traces=args.n_traces,
        events_per_trace=(int(lo), int(hi or lo)),
        fanout=(int(flo), int(fhi or flo)),
        fault_mix=mix,
        semantic_vocab_size=args.vocab_size,
        seed=derive_seed(args.seed, "synth"),
    )
    tables = generate_dataset(config)
    write_master_tables(tables, args.out)
    return EXIT_OK


def cmd_build_graphs(args) -> int:
    tables = _load_tables(args.tables, args.dataset_kind)
    embeddings = _embeddings_for(args, tables)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    graphs = build_all_graphs(tables)
    if embeddings is not None:
        from .graphs import attach_embeddings

        graphs = [attach_embeddings(g, embeddings) for g in graphs]
    with open(out_dir / "graphs-summary.tsv", "w", encoding="utf-8") as fh:
        fh.write("TraceId\tNodes\tEdges\tFeatureDim\tLabel\n")
        for g in graphs:
            fh.write(f"{g.trace_id}\t{g.n}\t{len(g.edges)}\t{g.features.shape[1]}\t{g.label.as_str()}\n")
    if args.dump:
        dump_dir = out_dir / "graphs"
        dump_dir.mkdir(exist_ok=True)
        for g in graphs:
            dump_graph(g, dump_dir / f"{g.trace_id}.txt")
    return EXIT_OK


def cmd_export_text(args) -> int:
    tables = _load_tables(args.tables, args.dataset_kind)
    export_text(tables, args.out)
    return EXIT_OK


def cmd_split(args) -> int:
    tables = _load_tables(args.tables, args.dataset_kind)
    data, split = split_for_task(tables, args.task, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_splits(data.trace_ids, split, out_dir / "splits.tsv")
    return EXIT_OK


def cmd_train(args) -> int:
    tables = _load_tables(args.tables, args.dataset_kind)
    data = task_labels(tables, args.task)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.splits:
        split = read_splits(args.splits, data.trace_ids)
    else:
        _, split = split_for_task(tables, args.task, args.seed)
    write_splits(data.trace_ids, split, out_dir / "splits.tsv")

    config = TrainConfig(
        task=args.task,
        model_kind=args.model,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=derive_seed(args.seed, f"train-{args.model}"),
        lr=args.lr,
        weight_decay=args.weight_decay,
        hidden=args.hidden,
    )
    if args.model == "baseline":
        dataset = build_vector_dataset(tables, args.task, split, key_field=args.mcv_key)
    else:
        embeddings = _embeddings_for(args, tables) if args.model == "hybrid" else None
        if args.model == "hybrid" and embeddings is None:
            raise SchemaError("hybrid model requires --embeddings or --pseudo-dim")
        dataset = build_graph_dataset(tables, args.task, split, embeddings)

    model, epoch_log = train_loop(dataset, config)
    meta = {
        "task": args.task,
        "model_kind": args.model,
        "dataset_kind": args.dataset_kind,
        "num_classes": data.num_classes,
        "class_names": data.class_names,
        "mcv_key": args.mcv_key,
        "pseudo_dim": args.pseudo_dim,
    }
    save_checkpoint(out_dir / "checkpoint.json", model, meta)

    metrics = {}
    for part in ("val", "test"):
        preds, labels = _predict_part(model, dataset, part, args.task)
        metrics[part] = evaluate_predictions(preds, labels, args.task, data.num_classes)
    metadata = {
        "dataset": args.dataset_kind,
        "task": args.task,
        "model_kind": args.model,
        "seed": args.seed,
        "config": {
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "lr": args.lr,
            "weight_decay": args.weight_decay,
            "hidden": args.hidden,
        },
        "tool_version": __version__,
    }
    write_report(metadata, metrics, epoch_log, out_dir / "report.json")
    return EXIT_OK


def _predict_part(model, dataset, part: str, task: str):
    items, labels = dataset.part(part)
    if isinstance(model, McvModel):
        preds = predict_logits(items @ model.w + model.b, task)
    else:
        batch = make_batch(items, list(labels))
        logits, _ = gcn_forward(model, batch)
        preds = predict_logits(logits, task)
    return preds, labels


def cmd_evaluate(args) -> int:
    tables = _load_tables(args.tables, args.dataset_kind)
    model, meta = load_checkpoint(args.checkpoint)
    if meta.get("task") and meta["task"] != args.task:
        raise SchemaError(f"checkpoint was trained for task {meta['task']!r}, not {args.task!r}")
    data = task_labels(tables, args.task)
    split = read_splits(args.splits, data.trace_ids) if args.splits else split_for_task(tables, args.task, args.seed)[1]

    if isinstance(model, McvModel):
        dataset = build_vector_dataset(tables, args.task, split, key_field=meta.get("mcv_key", "auto"))
        # Evaluation must score against the trained vocabulary, not a rebuilt one.
        from .models import mcv_vectorize
        from .pipeline import slices_for

        slices = slices_for(tables, data.trace_ids)
        dataset.x = np.vstack(
            [mcv_vectorize(s, model.vocab, tables.dataset_kind, meta.get("mcv_key", "auto")) for s in slices]
        )
    else:
        embeddings = _embeddings_for(args, tables)
        if embeddings is None and meta.get("model_kind") == "hybrid" and meta.get("pseudo_dim"):
            embeddings = make_pseudo_embeddings(tables, meta["pseudo_dim"])
        dataset = build_graph_dataset(tables, args.task, split, embeddings)
        if dataset.graphs and dataset.graphs[0].features.shape[1] != model.f:
            raise SchemaError(
                f"checkpoint expects feature width {model.f}, data provides {dataset.graphs[0].features.shape[1]}"
            )

    metrics = {}
    for part in ("val", "test"):
        preds, labels = _predict_part(model, dataset, part, args.task)
        metrics[part] = evaluate_predictions(preds, labels, args.task, data.num_classes)
    metadata = {
        "dataset": args.dataset_kind,
        "task": args.task,
        "model_kind": meta.get("model_kind", "unknown"),
        "seed": args.seed,
        "config": {"checkpoint": str(args.checkpoint)},
        "tool_version": __version__,
    }
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report(metadata, metrics, [], out_dir / "report.json")
    return EXIT_OK


def cmd_report(args) -> int:
    """Aggregate run reports into a delimited summary plus comparison figures."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    runs = []
    for path in args.runs:
        with open(path, encoding="utf-8") as fh:
            runs.append(json.load(fh))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "summary.tsv", "w", encoding="utf-8") as fh:
        fh.write("Model\tTask\tDataset\tSplit\tPrecision\tRecall\tF1\n")
        for run in runs:
            for part, m in sorted(run.get("metrics", {}).items()):
                fh.write(
                    f"{run.get('model_kind')}\t{run.get('task')}\t{run.get('dataset')}\t{part}"
                    f"\t{m['precision']:.4f}\t{m['recall']:.4f}\t{m['f1']:.4f}\n"
                )

    labels = [f"{r.get('model_kind')}\n{r.get('task')}" for r in runs]
    test = [r.get("metrics", {}).get("test", {}) for r in runs]
    x = np.arange(len(runs))
    width = 0.25
    fig, ax = plt.subplots(figsize=(max(6, 2 * len(runs)), 4))
    for i, metric in enumerate(("precision", "recall", "f1")):
        ax.bar(x + (i - 1) * width, [m.get(metric, 0.0) for m in test], width, label=metric)
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score (test split)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "comparison.png", dpi=150)
    plt.close(fig)

    for run in runs:
        log = run.get("epoch_log", [])
        if not log:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot([e["epoch"] for e in log], [e["train_loss"] for e in log], label="train loss")
        ax2 = ax.twinx()
        ax2.plot([e["epoch"] for e in log], [e["val_f1"] for e in log], color="tab:orange", label="val F1")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax2.set_ylabel("val F1")
        ax2.set_ylim(0, 1.05)
        fig.tight_layout()
        fig.savefig(out_dir / f"curve-{run.get('model_kind')}-{run.get('task')}.png", dpi=150)
        plt.close(fig)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracediag", description=__doc__)
    parser.add_argument("--config", help="key=value config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--dataset-kind", choices=["tracebench", "bgl"], default="tracebench")

    p = sub.add_parser("parse-bgl", help="parse a raw BGL log into master tables")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--window-seconds", type=int, default=21600)
    p.set_defaults(func=cmd_parse_bgl)

    p = sub.add_parser("ingest-tracebench", help="load TraceBench exports into master tables")
    common(p)
    p.add_argument("--traces", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--rules", help="label rules file")
    p.add_argument("--excluded-faults", default="")
    p.add_argument("--no-filter", action="store_true")
    p.set_defaults(func=cmd_ingest_tracebench)

    p = sub.add_parser("synth", help="generate a synthetic fault dataset")
    common(p)
    p.add_argument("--n-traces", type=int, default=100)
    p.add_argument("--events", default="6:10", help="MIN:MAX events per trace")
    p.add_argument("--fanout", default="1:3", help="MIN:MAX children per node")
    p.add_argument("--fault-mix", default="", help="kind=prop,kind=prop")
    p.add_argument("--vocab-size", type=int, default=8)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-graphs", help="build per-trace graphs and a summary")
    common(p)
    p.add_argument("--tables", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--pseudo-dim", type=int, default=0)
    p.add_argument("--dump", action="store_true", help="write per-trace edge-list dumps")
    p.set_defaults(func=cmd_build_graphs)

    p = sub.add_parser("export-text", help="write trace/event text encodings")
    common(p)
    p.add_argument("--tables", required=True)
    p.set_defaults(func=cmd_export_text)

    p = sub.add_parser("split", help="write a stratified 70/15/15 split")
    common(p)
    p.add_argument("--tables", required=True)
    p.add_argument("--task", choices=["ad", "fc"], default="ad")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model and write checkpoint + report")
    common(p)
    p.add_argument("--tables", required=True)
    p.add_argument("--task", choices=["ad", "fc"], default="ad")
    p.add_argument("--model", choices=["baseline", "gcn", "hybrid"], default="gcn")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--splits", help="existing splits.tsv to reuse")
    p.add_argument("--embeddings")
    p.add_argument("--pseudo-dim", type=int, default=0)
    p.add_argument("--mcv-key", choices=["auto", "op", "template"], default="auto")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    common(p)
    p.add_argument("--tables", required=True)
    p.add_argument("--task", choices=["ad", "fc"], default="ad")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--splits")
    p.add_argument("--embeddings")
    p.add_argument("--pseudo-dim", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="summarize run reports with figures")
    common(p)
    p.add_argument("--runs", nargs="+", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    config = _load_config_file(args.config)
    for key, value in config.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and f"--{key}" not in (argv or sys.argv[1:]):
            current = getattr(args, attr)
            caster = type(current) if current is not None and not isinstance(current, bool) else str
            setattr(args, attr, caster(value))

    started = time.time()
    out_dir = Path(getattr(args, "out", "."))
    try:
        code = args.func(args)
        _write_manifest(out_dir, args.command, vars(args) | {"func": None}, started, "ok")
        return code
    except (TraceDiagError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _write_manifest(out_dir, args.command, vars(args) | {"func": None}, started, f"error: {exc}")
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
