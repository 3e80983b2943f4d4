"""Per-trace graph construction and the structural/temporal node-feature matrix."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import MasterTables, TraceDiagError, TraceLabel, TraceSlice, encode_trace_text, trace_view

STRUCTURAL_DIM = 5


class IntegrityError(TraceDiagError):
    pass


class MissingEmbeddingError(TraceDiagError):
    pass


@dataclass
class TraceGraph:
    trace_id: str
    node_ids: list[str]
    edges: list[tuple[int, int]]
    features: np.ndarray
    label: TraceLabel

    @property
    def n(self) -> int:
        return len(self.node_ids)


@dataclass
class EmbeddingTable:
    dim: int
    rows: dict[tuple[str, str], np.ndarray]


def build_trace_graph(slice_: TraceSlice, label: TraceLabel) -> TraceGraph:
    """Directed graph over the slice: chronological node order, index edges."""
    if not slice_.events:
        raise IntegrityError(f"trace {slice_.trace_id!r} has no events")
    index = {ev.event_id: i for i, ev in enumerate(slice_.events)}
    edges: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for e in slice_.edges:
        if e.father_event_id not in index or e.child_event_id not in index:
            raise IntegrityError(
                f"trace {slice_.trace_id!r}: edge endpoint missing "
                f"({e.father_event_id!r} -> {e.child_event_id!r})"
            )
        pair = (index[e.father_event_id], index[e.child_event_id])
        if pair not in seen:
            seen.add(pair)
            edges.append(pair)
    graph = TraceGraph(
        trace_id=slice_.trace_id,
        node_ids=[ev.event_id for ev in slice_.events],
        edges=edges,
        features=np.zeros((len(slice_.events), 0)),
        label=label,
    )
    graph.features = compute_node_features(graph, [ev.start_time for ev in slice_.events])
    return graph


def compute_node_features(graph: TraceGraph, timestamps: list[int]) -> np.ndarray:
    """n x 5 matrix: in/out degree, normalized position, distance to end, time."""
    n = graph.n
    feats = np.zeros((n, STRUCTURAL_DIM))
    for src, dst in graph.edges:
        feats[src, 1] += 1.0
        feats[dst, 0] += 1.0
    if n > 1:
        idx = np.arange(n, dtype=np.float64)
        feats[:, 2] = idx / (n - 1)
        feats[:, 3] = (n - 1 - idx) / (n - 1)
    else:
        feats[0, 2] = 0.0
        feats[0, 3] = 1.0
    t = np.asarray(timestamps, dtype=np.float64)
    span = t.max() - t.min()
    if span > 0:
        feats[:, 4] = (t - t.min()) / span
    return feats


def attach_embeddings(graph: TraceGraph, table: EmbeddingTable) -> TraceGraph:
    """Widen features to 5+d by appending each node's semantic vector."""
    vecs = []
    for eid in graph.node_ids:
        key = (graph.trace_id, eid)
        if key not in table.rows:
            raise MissingEmbeddingError(f"no embedding for event {eid!r} of trace {graph.trace_id!r}")
        vecs.append(table.rows[key])
    stacked = np.vstack(vecs)
    return TraceGraph(
        trace_id=graph.trace_id,
        node_ids=list(graph.node_ids),
        edges=list(graph.edges),
        features=np.hstack([graph.features[:, :STRUCTURAL_DIM], stacked]),
        label=graph.label,
    )


def build_all_graphs(tables: MasterTables) -> list[TraceGraph]:
    labels = {tr.trace_id: tr.label for tr in tables.traces}
    events = tables.events_by_trace()
    edges = tables.edges_by_trace()
    graphs = []
    for tr in tables.traces:
        evs = sorted(events.get(tr.trace_id, []), key=lambda ev: (ev.start_time, ev.seq))
        slice_ = TraceSlice(trace_id=tr.trace_id, events=evs, edges=edges.get(tr.trace_id, []))
        graphs.append(build_trace_graph(slice_, labels[tr.trace_id]))
    return graphs


# ---------------------------------------------------------------------------
# Embedding table file format: first line "dim=<d>", then one row per event:
# TraceId <TAB> EventId <TAB> d space-separated reals.

def write_embedding_table(table: EmbeddingTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={table.dim}\n")
        for (tid, eid), vec in sorted(table.rows.items()):
            values = " ".join(format(v, ".9g") for v in vec)
            fh.write(f"{tid}\t{eid}\t{values}\n")


def read_embedding_table(path: str | Path) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("dim="):
            raise IntegrityError(f"{path}: expected 'dim=<d>' header, got {header!r}")
        dim = int(header[4:])
        rows: dict[tuple[str, str], np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            tid, eid, values = line.split("\t")
            vec = np.array([float(v) for v in values.split(" ")])
            if vec.size != dim:
                raise IntegrityError(f"{path}:{lineno}: vector length {vec.size} != dim {dim}")
            if not np.all(np.isfinite(vec)):
                raise IntegrityError(f"{path}:{lineno}: non-finite component")
            rows[(tid, eid)] = vec
    return EmbeddingTable(dim=dim, rows=rows)


def pseudo_embeddings(tables: MasterTables, dim: int = 32) -> EmbeddingTable:
    """Hashed bag-of-words event vectors, a deterministic stand-in for encoder output.

    Each token of the event's text contributes a count at a hashed index;
    rows are scaled by 1/(1+count) so magnitudes stay O(1).
    """
    rows: dict[tuple[str, str], np.ndarray] = {}
    for ev in tables.events:
        text = f"{ev.op_name}:{ev.description}" if ev.op_name else ev.description
        vec = np.zeros(dim)
        tokens = text.split()
        for token in tokens:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            vec[int.from_bytes(digest[:4], "big") % dim] += 1.0
        if tokens:
            vec /= 1.0 + len(tokens)
        rows[(ev.trace_id, ev.event_id)] = vec
    return EmbeddingTable(dim=dim, rows=rows)


def dump_graph(graph: TraceGraph, path: str | Path) -> None:
    """Debug edge-list dump: node manifest then one "src<TAB>dst" line per edge."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# trace {graph.trace_id} label {graph.label.as_str()}\n")
        for i, eid in enumerate(graph.node_ids):
            fh.write(f"# node {i} {eid}\n")
        for src, dst in graph.edges:
            fh.write(f"{src}\t{dst}\n")


def export_text(tables: MasterTables, out_dir: str | Path) -> None:
    """Write per-event and per-trace text encodings for external encoders."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "events-text.tsv", "w", encoding="utf-8") as fh:
        fh.write("TraceId\tEventId\tText\n")
        for tr in tables.traces:
            slice_ = trace_view(tables, tr.trace_id)
            for ev in slice_.events:
                text = f"{ev.op_name}:{ev.description}" if tables.dataset_kind == "tracebench" else ev.description
                fh.write(f"{tr.trace_id}\t{ev.event_id}\t{_flat(text)}\n")
    with open(out_dir / "traces-text.tsv", "w", encoding="utf-8") as fh:
        fh.write("TraceId\tLabel\tText\n")
        for tr in tables.traces:
            text = encode_trace_text(trace_view(tables, tr.trace_id), tables.dataset_kind)
            fh.write(f"{tr.trace_id}\t{tr.label.as_str()}\t{_flat(text)}\n")


def _flat(text: str) -> str:
    return text.replace("\t", " ").replace("\n", " ")
