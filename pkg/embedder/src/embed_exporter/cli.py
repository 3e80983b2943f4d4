"""Command-line wrapper: export embeddings, fine-tune, or run the MIL path."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .encoder import DEFAULT_MODEL, EncoderUnavailableError, load_encoder
from .export import export_event_embeddings
from .finetune import FinetuneConfig, finetune_trace_classifier
from .io import FormatError, read_events_text, read_splits, read_traces_text, write_report
from .mil import MilConfig, MilTrace, mil_train_and_score

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


def cmd_export(args) -> int:
    encoder = load_encoder(args.model, max_length=args.max_length)
    count = export_event_embeddings(args.events_text, encoder, args.out)
    print(f"wrote {count} embedding rows (dim={encoder.dim}) to {args.out}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    traces = read_traces_text(args.traces_text)
    splits = read_splits(args.splits)
    encoder = load_encoder(args.model, max_length=args.max_length)
    config = FinetuneConfig(task=args.task, epochs=args.epochs, batch_size=args.batch_size,
                            lr=args.lr, seed=args.seed)
    _, epoch_log, metrics = finetune_trace_classifier(traces, splits, encoder, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metadata = {
        "dataset": "export",
        "task": args.task,
        "model_kind": "finetune",
        "seed": args.seed,
        "config": {"model": args.model, "epochs": args.epochs, "batch_size": args.batch_size, "lr": args.lr},
        "tool_version": __version__,
    }
    write_report(metadata, metrics, epoch_log, out_dir / "report.json")
    return EXIT_OK


def cmd_mil(args) -> int:
    events = read_events_text(args.events_text)
    traces = read_traces_text(args.traces_text)
    splits = read_splits(args.splits)
    by_trace: dict[str, list[str]] = {}
    for ev in events:
        by_trace.setdefault(ev.trace_id, []).append(ev.text)
    mil_traces = [
        MilTrace(trace_id=t.trace_id, event_texts=by_trace.get(t.trace_id, []), label=int(t.label != "normal"))
        for t in traces
        if by_trace.get(t.trace_id)
    ]
    encoder = load_encoder(args.model, max_length=args.max_length)
    config = MilConfig(segment_size=args.segment_size, epochs=args.epochs,
                       batch_size=args.batch_size, lr=args.lr, seed=args.seed)
    _, epoch_log, metrics = mil_train_and_score(mil_traces, splits, encoder, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metadata = {
        "dataset": "export",
        "task": "ad",
        "model_kind": "mil",
        "seed": args.seed,
        "config": {"model": args.model, "segment_size": args.segment_size, "epochs": args.epochs},
        "tool_version": __version__,
    }
    write_report(metadata, metrics, epoch_log, out_dir / "report.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embed-exporter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", default=DEFAULT_MODEL,
                       help="encoder identifier; 'local-small' for the self-contained encoder")
        p.add_argument("--max-length", type=int, default=512)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("export", help="write per-event embeddings in EmbeddingTable format")
    common(p)
    p.add_argument("--events-text", required=True)
    p.add_argument("--out", required=True, help="output TSV path")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("finetune", help="fine-tune a trace classifier, write a report")
    common(p)
    p.add_argument("--traces-text", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--task", choices=["ad", "fc"], default="ad")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("mil", help="segment-based MIL training with noisy-OR pooling")
    common(p)
    p.add_argument("--events-text", required=True)
    p.add_argument("--traces-text", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--segment-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_mil)

    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (FormatError, FileNotFoundError, ValueError, EncoderUnavailableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
