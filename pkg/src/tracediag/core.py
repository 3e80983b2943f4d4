"""Master-table data model: traces, events, edges, and chronological views."""

from __future__ import annotations

import collections
from dataclasses import dataclass, field
from pathlib import Path

NORMAL = "normal"

TRACEBENCH = "tracebench"
BGL = "bgl"

# Injected HDFS fault kinds, canonical casing.
TRACEBENCH_FAULT_KINDS = (
    "killDN",
    "suspendDN",
    "disconnectDN",
    "slowHDFS",
    "slowDN",
    "corruptBlk",
    "corruptMeta",
    "lossBlk",
    "lossMeta",
    "cutBlk",
    "cutMeta",
    "panicDN",
    "deadDN",
    "readOnlyDN",
)


class TraceDiagError(Exception):
    """Base class for all toolkit errors."""


class NotFoundError(TraceDiagError):
    pass


class EmptyTraceError(TraceDiagError):
    pass


class SchemaError(TraceDiagError):
    pass


@dataclass(frozen=True)
class TraceLabel:
    """Either the normal label or a named fault kind."""

    fault_kind: str | None = None

    def __post_init__(self):
        if self.fault_kind == "":
            raise ValueError("fault_kind must be non-empty for fault labels")

    @property
    def is_fault(self) -> bool:
        return self.fault_kind is not None

    def as_str(self) -> str:
        return self.fault_kind if self.fault_kind is not None else NORMAL

    @staticmethod
    def normal() -> "TraceLabel":
        return TraceLabel(None)

    @staticmethod
    def fault(kind: str) -> "TraceLabel":
        if not kind:
            raise ValueError("fault kind must be non-empty")
        return TraceLabel(kind)


@dataclass(frozen=True)
class TraceRecord:
    trace_id: str
    label: TraceLabel
    source_name: str = ""


@dataclass(frozen=True)
class EventRecord:
    event_id: str
    trace_id: str
    seq: int
    op_name: str
    description: str
    start_time: int
    end_time: int | None = None


@dataclass(frozen=True)
class EdgeRecord:
    trace_id: str
    father_event_id: str
    child_event_id: str


@dataclass
class MasterTables:
    """Relational bundle shared by every model: traces, events, edges."""

    traces: list[TraceRecord] = field(default_factory=list)
    events: list[EventRecord] = field(default_factory=list)
    edges: list[EdgeRecord] = field(default_factory=list)
    dataset_kind: str = TRACEBENCH

    def events_by_trace(self) -> dict[str, list[EventRecord]]:
        out: dict[str, list[EventRecord]] = collections.defaultdict(list)
        for ev in self.events:
            out[ev.trace_id].append(ev)
        return dict(out)

    def edges_by_trace(self) -> dict[str, list[EdgeRecord]]:
        out: dict[str, list[EdgeRecord]] = collections.defaultdict(list)
        for e in self.edges:
            out[e.trace_id].append(e)
        return dict(out)


@dataclass(frozen=True)
class Violation:
    kind: str
    table: str
    row: int
    detail: str


@dataclass
class ValidationReport:
    ok: bool
    violations: list[Violation]


@dataclass
class TraceSlice:
    """One trace's events in chronological order plus its edges."""

    trace_id: str
    events: list[EventRecord]
    edges: list[EdgeRecord]


def validate_master_tables(tables: MasterTables) -> ValidationReport:
    """Check every structural invariant, reporting all failing rows."""
    violations: list[Violation] = []

    seen_traces: set[str] = set()
    for i, tr in enumerate(tables.traces):
        if tr.trace_id in seen_traces:
            violations.append(Violation("duplicate-trace", "traces", i, tr.trace_id))
        seen_traces.add(tr.trace_id)

    trace_ids = {tr.trace_id for tr in tables.traces}
    event_keys: set[tuple[str, str]] = set()
    traces_with_events: set[str] = set()
    seqs: dict[str, list[int]] = collections.defaultdict(list)
    for i, ev in enumerate(tables.events):
        key = (ev.trace_id, ev.event_id)
        if key in event_keys:
            violations.append(Violation("duplicate-event", "events", i, ev.event_id))
        event_keys.add(key)
        traces_with_events.add(ev.trace_id)
        if ev.trace_id not in trace_ids:
            violations.append(Violation("dangling-event", "events", i, ev.trace_id))
        if ev.seq < 0:
            violations.append(Violation("negative-seq", "events", i, str(ev.seq)))
        if ev.end_time is not None and ev.end_time < ev.start_time:
            violations.append(Violation("end-before-start", "events", i, ev.event_id))
        seqs[ev.trace_id].append(ev.seq)

    for tid, s in seqs.items():
        if sorted(s) != list(range(len(s))):
            violations.append(Violation("seq-gap", "events", -1, tid))

    for i, tr in enumerate(tables.traces):
        if tr.trace_id not in traces_with_events:
            violations.append(Violation("empty-trace", "traces", i, tr.trace_id))

    for i, e in enumerate(tables.edges):
        if e.father_event_id == e.child_event_id:
            violations.append(Violation("self-edge", "edges", i, e.father_event_id))
        if (e.trace_id, e.father_event_id) not in event_keys:
            violations.append(Violation("dangling-edge", "edges", i, e.father_event_id))
        if (e.trace_id, e.child_event_id) not in event_keys:
            violations.append(Violation("dangling-edge", "edges", i, e.child_event_id))

    return ValidationReport(ok=not violations, violations=violations)


def trace_view(tables: MasterTables, trace_id: str) -> TraceSlice:
    """Chronological slice of one trace: events by (start_time, seq), its edges."""
    events = [ev for ev in tables.events if ev.trace_id == trace_id]
    if not events:
        known = any(tr.trace_id == trace_id for tr in tables.traces)
        if not known:
            raise NotFoundError(f"unknown trace_id: {trace_id!r}")
    events.sort(key=lambda ev: (ev.start_time, ev.seq))
    edges = [e for e in tables.edges if e.trace_id == trace_id]
    return TraceSlice(trace_id=trace_id, events=events, edges=edges)


def encode_trace_text(slice_: TraceSlice, kind: str) -> str:
    """Render a trace as one text sequence, events in chronological order."""
    if not slice_.events:
        raise EmptyTraceError(f"trace {slice_.trace_id!r} has no events")
    if kind == TRACEBENCH:
        parts = [f"{ev.op_name}:{ev.description}" for ev in slice_.events]
    elif kind == BGL:
        parts = [ev.description for ev in slice_.events]
    else:
        raise ValueError(f"unknown dataset kind: {kind!r}")
    return " [SEP] ".join(parts)


def label_distribution(tables: MasterTables) -> dict[str, int]:
    counts: dict[str, int] = collections.Counter()
    for tr in tables.traces:
        counts[tr.label.as_str()] += 1
    return dict(counts)


# ---------------------------------------------------------------------------
# TSV serialization.  Three files with header rows; tabs/newlines inside text
# fields are escaped so one record is always one line.

_TRACES_HEADER = ["TraceId", "Label", "FaultType", "SourceName"]
_EVENTS_HEADER = ["EventId", "TraceId", "Seq", "OpName", "Description", "StartTime", "EndTime"]
_EDGES_HEADER = ["TraceId", "FatherEventId", "ChildEventId"]


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "t":
                out.append("\t")
            elif nxt == "n":
                out.append("\n")
            elif nxt == "\\":
                out.append("\\")
            else:
                out.append(nxt)
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def write_master_tables(tables: MasterTables, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "traces.tsv", "w", encoding="utf-8") as fh:
        fh.write("\t".join(_TRACES_HEADER) + "\n")
        for tr in tables.traces:
            label = "fault" if tr.label.is_fault else NORMAL
            fault = tr.label.fault_kind or ""
            fh.write("\t".join([tr.trace_id, label, fault, _escape(tr.source_name)]) + "\n")

    with open(out_dir / "events.tsv", "w", encoding="utf-8") as fh:
        fh.write("\t".join(_EVENTS_HEADER) + "\n")
        for ev in tables.events:
            end = "" if ev.end_time is None else str(ev.end_time)
            fh.write(
                "\t".join(
                    [
                        ev.event_id,
                        ev.trace_id,
                        str(ev.seq),
                        _escape(ev.op_name),
                        _escape(ev.description),
                        str(ev.start_time),
                        end,
                    ]
                )
                + "\n"
            )

    with open(out_dir / "edges.tsv", "w", encoding="utf-8") as fh:
        fh.write("\t".join(_EDGES_HEADER) + "\n")
        for e in tables.edges:
            fh.write("\t".join([e.trace_id, e.father_event_id, e.child_event_id]) + "\n")


def _read_tsv(path: Path, expected_header: list[str]) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = lines[0].split("\t")
    if header != expected_header:
        raise SchemaError(f"{path}: bad header {header!r}, expected {expected_header!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cols = line.split("\t")
        if len(cols) != len(expected_header):
            raise SchemaError(f"{path}:{lineno}: expected {len(expected_header)} columns, got {len(cols)}")
        rows.append(cols)
    return rows


def read_master_tables(in_dir: str | Path, dataset_kind: str = TRACEBENCH) -> MasterTables:
    in_dir = Path(in_dir)
    traces = []
    for cols in _read_tsv(in_dir / "traces.tsv", _TRACES_HEADER):
        tid, label, fault, source = cols
        tl = TraceLabel.fault(fault) if label != NORMAL else TraceLabel.normal()
        traces.append(TraceRecord(trace_id=tid, label=tl, source_name=_unescape(source)))
    events = []
    for cols in _read_tsv(in_dir / "events.tsv", _EVENTS_HEADER):
        eid, tid, seq, op, desc, start, end = cols
        events.append(
            EventRecord(
                event_id=eid,
                trace_id=tid,
                seq=int(seq),
                op_name=_unescape(op),
                description=_unescape(desc),
                start_time=int(start),
                end_time=int(end) if end else None,
            )
        )
    edges = []
    for cols in _read_tsv(in_dir / "edges.tsv", _EDGES_HEADER):
        tid, father, child = cols
        edges.append(EdgeRecord(trace_id=tid, father_event_id=father, child_event_id=child))
    return MasterTables(traces=traces, events=events, edges=edges, dataset_kind=dataset_kind)
