"""Readers and writers for the file formats shared with the graph toolkit."""

from __future__ import annotations

import datetime
import json
import os
from dataclasses import dataclass, field
from pathlib import Path


class FormatError(ValueError):
    """Raised when a shared-format file does not match its documented schema."""


@dataclass
class EventText:
    trace_id: str
    event_id: str
    text: str


@dataclass
class TraceText:
    trace_id: str
    label: str  # "normal" or a fault kind
    text: str


@dataclass
class SplitAssignment:
    seed: int = 0
    parts: dict[str, str] = field(default_factory=dict)  # trace_id -> train/val/test

    def trace_ids(self, part: str) -> list[str]:
        return [tid for tid, which in self.parts.items() if which == part]


def read_events_text(path: str | Path) -> list[EventText]:
    rows = _read_tsv(path, "TraceId\tEventId\tText")
    return [EventText(*cols) for cols in rows]


def read_traces_text(path: str | Path) -> list[TraceText]:
    rows = _read_tsv(path, "TraceId\tLabel\tText")
    return [TraceText(*cols) for cols in rows]


def _read_tsv(path: str | Path, header: str) -> list[list[str]]:
    expected_cols = header.count("\t") + 1
    out = []
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != header:
            raise FormatError(f"{path}: expected header {header!r}, got {first!r}")
        for lineno, line in enumerate(fh, start=2):
            cols = line.rstrip("\n").split("\t")
            if len(cols) != expected_cols:
                raise FormatError(f"{path} line {lineno}: expected {expected_cols} columns, got {len(cols)}")
            out.append(cols)
    return out


def read_splits(path: str | Path) -> SplitAssignment:
    out = SplitAssignment()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line.startswith("# seed="):
                out.seed = int(line[len("# seed=") :])
                continue
            if not line or line.startswith("TraceId"):
                continue
            cols = line.split("\t")
            if len(cols) != 2 or cols[1] not in ("train", "val", "test"):
                raise FormatError(f"{path} line {lineno}: bad split row {line!r}")
            out.parts[cols[0]] = cols[1]
    return out


def write_embedding_table(rows: dict[tuple[str, str], "list[float]"], dim: int, path: str | Path) -> None:
    """EmbeddingTable TSV: `dim=<d>` header then sorted `tid\teid\tv1 v2 ...` rows.

    Written atomically (temp file + rename) so a crashed export never leaves a
    truncated table behind.
    """
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(f"dim={dim}\n")
        for (tid, eid), vec in sorted(rows.items()):
            if len(vec) != dim:
                raise FormatError(f"vector for ({tid}, {eid}) has length {len(vec)}, expected {dim}")
            values = " ".join(format(float(v), ".9g") for v in vec)
            fh.write(f"{tid}\t{eid}\t{values}\n")
    os.replace(tmp, path)


def write_report(metadata: dict, metrics: dict[str, dict], epoch_log: list[dict], out_path: str | Path) -> None:
    """Report JSON in the shared schema: sorted keys, one volatile timestamp."""
    doc = dict(metadata)
    doc["metrics"] = metrics
    doc["epoch_log"] = epoch_log
    doc["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
