"""Raw-input ingestion: BGL log parsing and windowing, TraceBench table loading."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .core import (
    BGL,
    TRACEBENCH,
    TRACEBENCH_FAULT_KINDS,
    EdgeRecord,
    EventRecord,
    MasterTables,
    SchemaError,
    TraceDiagError,
    TraceLabel,
    TraceRecord,
)


class MalformedLineError(TraceDiagError):
    def __init__(self, message: str, lineno: int | None = None):
        super().__init__(message if lineno is None else f"line {lineno}: {message}")
        self.lineno = lineno


class UnknownFaultError(TraceDiagError):
    pass


@dataclass(frozen=True)
class ParsedBglLine:
    alert_label: str
    epoch: int
    date: str
    node: str
    full_timestamp: str
    node_repeat: str
    message_type: str
    component: str
    severity: str
    message: str
    template: str


@dataclass(frozen=True)
class LabelRule:
    """Regex rule mapping a trace's source name to a label.

    The pattern may carry a named group "fault"; when it matches, the captured
    kind is canonicalized against the fault vocabulary.  A match without the
    group (or with the group unmatched) yields the rule's default label, as
    does the no-rule-matched fallback of the last rule in a list.
    """

    pattern: str
    default_label: TraceLabel = TraceLabel.normal()

    def compiled(self) -> re.Pattern:
        return re.compile(self.pattern)


DEFAULT_LABEL_RULES = [
    LabelRule(pattern=r"^(?P<fault>(?!normal)[A-Za-z]+)_", default_label=TraceLabel.normal()),
]


@dataclass
class IngestConfig:
    window_seconds: int = 21600
    excluded_faults: set[str] = field(default_factory=lambda: {"slowHDFS"})
    keep_default_scenario_only: bool = True
    timestamp_unit: str = "us"
    # Scenario fallback when traces carry no scenario column: a trace is
    # "default scenario" iff this regex finds a match in its source name.
    default_scenario_pattern: str = r"(^|_)default($|_)|^normal"

    def __post_init__(self):
        if self.window_seconds <= 0:
            raise ValueError("window_seconds must be positive")


def parse_bgl_line(line: str, lineno: int | None = None) -> ParsedBglLine:
    """Split one raw BGL record into its positional fields.

    The public corpus prefixes each line with an alert token ("-" for normal);
    the token is optional here: if the first token already parses as an integer
    epoch the line is treated as unlabeled-normal.
    """
    tokens = line.split()
    if not tokens:
        raise MalformedLineError("empty line", lineno)

    if _is_int(tokens[0]):
        alert = "-"
        rest = tokens
    else:
        alert = tokens[0]
        rest = tokens[1:]

    if len(rest) < 9:
        raise MalformedLineError(f"expected >= 9 positional fields, got {len(rest)}", lineno)
    if not _is_int(rest[0]):
        raise MalformedLineError(f"bad epoch token {rest[0]!r}", lineno)

    message = " ".join(rest[8:])
    return ParsedBglLine(
        alert_label=alert,
        epoch=int(rest[0]),
        date=rest[1],
        node=rest[2],
        full_timestamp=rest[3],
        node_repeat=rest[4],
        message_type=rest[5],
        component=rest[6],
        severity=rest[7],
        message=message,
        template=extract_template(message),
    )


def _is_int(token: str) -> bool:
    try:
        int(token)
    except ValueError:
        return False
    return True


_DECIMAL_RE = re.compile(r"^[0-9]+$")
_HEX_RE = re.compile(r"^(0[xX])?[0-9a-fA-F]{4,}$")
_KV_RE = re.compile(r"=[0-9]")


def extract_template(message: str) -> str:
    """Mask parameter-like tokens with <*>: decimals, long hex runs, key=digits."""
    out = []
    for token in message.split():
        if _DECIMAL_RE.match(token) or _HEX_RE.match(token) or _KV_RE.search(token):
            out.append("<*>")
        else:
            out.append(token)
    return " ".join(out)


@dataclass
class WindowGroup:
    index: int
    lines: list[ParsedBglLine]


def group_into_windows(lines: list[ParsedBglLine], config: IngestConfig) -> list[WindowGroup]:
    """Tumbling windows anchored at the first line's epoch; empty windows omitted."""
    if not lines:
        return []
    t0 = lines[0].epoch
    groups: dict[int, list[ParsedBglLine]] = {}
    for ln in lines:
        idx = (ln.epoch - t0) // config.window_seconds
        groups.setdefault(idx, []).append(ln)
    return [WindowGroup(index=i, lines=groups[i]) for i in sorted(groups)]


def label_window(group: WindowGroup) -> TraceLabel:
    """Normal iff every line carries the "-" alert tag; otherwise a binary anomaly."""
    if not group.lines:
        raise ValueError("cannot label an empty window")
    if all(ln.alert_label == "-" for ln in group.lines):
        return TraceLabel.normal()
    return TraceLabel.fault("anomaly")


def bgl_to_master_tables(groups: list[WindowGroup]) -> MasterTables:
    """One trace per window; events are templated lines; edges chain by time order."""
    width = max(6, len(str(groups[-1].index)) if groups else 1)
    traces: list[TraceRecord] = []
    events: list[EventRecord] = []
    edges: list[EdgeRecord] = []
    for group in groups:
        trace_id = str(group.index).zfill(width)
        traces.append(
            TraceRecord(trace_id=trace_id, label=label_window(group), source_name=f"window_{trace_id}")
        )
        ordered = sorted(range(len(group.lines)), key=lambda i: (group.lines[i].epoch, i))
        prev_eid = None
        for seq, i in enumerate(ordered):
            ln = group.lines[i]
            eid = f"{trace_id}-{seq}"
            events.append(
                EventRecord(
                    event_id=eid,
                    trace_id=trace_id,
                    seq=seq,
                    op_name="",
                    description=ln.template,
                    start_time=ln.epoch,
                    end_time=None,
                )
            )
            if prev_eid is not None:
                edges.append(EdgeRecord(trace_id=trace_id, father_event_id=prev_eid, child_event_id=eid))
            prev_eid = eid
    return MasterTables(traces=traces, events=events, edges=edges, dataset_kind=BGL)


def ingest_bgl_file(path: str | Path, config: IngestConfig) -> MasterTables:
    lines: list[ParsedBglLine] = []
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            lines.append(parse_bgl_line(raw, lineno))
    lines.sort(key=lambda ln: ln.epoch)
    return bgl_to_master_tables(group_into_windows(lines, config))


_CANONICAL_FAULTS = {kind.lower(): kind for kind in TRACEBENCH_FAULT_KINDS}


def tracebench_label_from_name(source_name: str, rules: list[LabelRule]) -> TraceLabel:
    """First matching rule wins; captured kinds are canonicalized case-insensitively."""
    if not rules:
        raise ValueError("rules must be non-empty")
    for rule in rules:
        m = rule.compiled().search(source_name)
        if m is None:
            continue
        kind = m.groupdict().get("fault")
        if kind is None:
            return rule.default_label
        canonical = _CANONICAL_FAULTS.get(kind.lower())
        if canonical is None:
            raise UnknownFaultError(f"{source_name!r}: fault kind {kind!r} not in vocabulary")
        return TraceLabel.fault(canonical)
    return rules[-1].default_label


def tracebench_filter(
    tables: MasterTables,
    config: IngestConfig,
    scenarios: dict[str, str] | None = None,
) -> MasterTables:
    """Drop non-default-scenario traces and excluded fault kinds, keeping integrity.

    `scenarios` maps trace_id to a scenario string when the source data carried
    one; otherwise the default-scenario regex is applied to source names.
    """
    scenario_re = re.compile(config.default_scenario_pattern)
    keep_ids: set[str] = set()
    kept: list[TraceRecord] = []
    for tr in tables.traces:
        if tr.label.is_fault and tr.label.fault_kind in config.excluded_faults:
            continue
        if config.keep_default_scenario_only:
            if scenarios is not None and tr.trace_id in scenarios:
                if scenarios[tr.trace_id] != "default":
                    continue
            elif not scenario_re.search(tr.source_name):
                continue
        keep_ids.add(tr.trace_id)
        kept.append(tr)
    return MasterTables(
        traces=kept,
        events=[ev for ev in tables.events if ev.trace_id in keep_ids],
        edges=[e for e in tables.edges if e.trace_id in keep_ids],
        dataset_kind=tables.dataset_kind,
    )


def _sniff_rows(path: Path, required: list[str]) -> tuple[list[dict[str, str]], list[str]]:
    """Read a headered TSV/CSV file into dict rows; delimiter is sniffed."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    delim = "\t" if "\t" in lines[0] else ","
    header = lines[0].split(delim)
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cols = line.split(delim)
        if len(cols) != len(header):
            raise SchemaError(f"{path}:{lineno}: expected {len(header)} columns, got {len(cols)}")
        rows.append(dict(zip(header, cols)))
    return rows, header


def tracebench_to_master_tables(
    trace_file: str | Path,
    event_file: str | Path,
    edge_file: str | Path,
    rules: list[LabelRule] | None = None,
) -> MasterTables:
    """Load the three relational exports into validated master tables.

    Expected columns — trace file: TraceId, TraceName (optional Scenario);
    event file: EventId, TraceId, OpName, Description, StartTime (optional
    EndTime); edge file: TraceId, FatherEventId, ChildEventId.
    """
    rules = rules if rules is not None else DEFAULT_LABEL_RULES

    trace_rows, trace_header = _sniff_rows(Path(trace_file), ["TraceId", "TraceName"])
    traces = []
    scenarios: dict[str, str] = {}
    for row in trace_rows:
        label = tracebench_label_from_name(row["TraceName"], rules)
        traces.append(TraceRecord(trace_id=row["TraceId"], label=label, source_name=row["TraceName"]))
        if "Scenario" in trace_header:
            scenarios[row["TraceId"]] = row["Scenario"]
    trace_ids = {tr.trace_id for tr in traces}

    event_rows, event_header = _sniff_rows(Path(event_file), ["EventId", "TraceId", "OpName", "Description", "StartTime"])
    by_trace: dict[str, list[dict[str, str]]] = {}
    for lineno, row in enumerate(event_rows, start=2):
        if row["TraceId"] not in trace_ids:
            raise SchemaError(f"{event_file}:{lineno}: event references unknown trace {row['TraceId']!r}")
        by_trace.setdefault(row["TraceId"], []).append(row)

    events = []
    for tid, rows in by_trace.items():
        order = sorted(range(len(rows)), key=lambda i: (int(rows[i]["StartTime"]), i))
        for seq, i in enumerate(order):
            row = rows[i]
            end = row.get("EndTime", "")
            events.append(
                EventRecord(
                    event_id=row["EventId"],
                    trace_id=tid,
                    seq=seq,
                    op_name=row["OpName"],
                    description=row["Description"],
                    start_time=int(row["StartTime"]),
                    end_time=int(end) if end else None,
                )
            )
    event_keys = {(ev.trace_id, ev.event_id) for ev in events}

    edge_rows, _ = _sniff_rows(Path(edge_file), ["TraceId", "FatherEventId", "ChildEventId"])
    edges = []
    for lineno, row in enumerate(edge_rows, start=2):
        for col in ("FatherEventId", "ChildEventId"):
            if (row["TraceId"], row[col]) not in event_keys:
                raise SchemaError(f"{edge_file}:{lineno}: edge references unknown event {row[col]!r}")
        edges.append(
            EdgeRecord(
                trace_id=row["TraceId"],
                father_event_id=row["FatherEventId"],
                child_event_id=row["ChildEventId"],
            )
        )

    tables = MasterTables(traces=traces, events=events, edges=edges, dataset_kind=TRACEBENCH)
    tables._scenarios = scenarios  # type: ignore[attr-defined]
    return tables


def load_label_rules(path: str | Path) -> list[LabelRule]:
    """Rules file: one rule per line, "PATTERN<TAB>DEFAULT" where DEFAULT is
    "normal" or a fault kind; blank lines and #-comments ignored."""
    rules = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            pattern, _, default = line.partition("\t")
            label = TraceLabel.normal() if default in ("", "normal") else TraceLabel.fault(default)
            rules.append(LabelRule(pattern=pattern, default_label=label))
    if not rules:
        raise SchemaError(f"{path}: no rules")
    return rules
