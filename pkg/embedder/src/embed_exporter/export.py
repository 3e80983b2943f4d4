"""Per-event embedding export in the shared EmbeddingTable format."""

from __future__ import annotations

from pathlib import Path

from .encoder import Encoder, encode_texts
from .io import read_events_text, write_embedding_table


def export_event_embeddings(events_text_path: str | Path, encoder: Encoder, out_path: str | Path) -> int:
    """Embed every event row of an `export-text` file; returns the row count.

    One row per event, keyed (trace_id, event_id); identical inputs produce a
    byte-identical file.
    """
    events = read_events_text(events_text_path)
    vectors = encode_texts(encoder, [ev.text for ev in events])
    rows = {(ev.trace_id, ev.event_id): vectors[i].tolist() for i, ev in enumerate(events)}
    if len(rows) != len(events):
        raise ValueError("duplicate (trace_id, event_id) pairs in text export")
    write_embedding_table(rows, encoder.dim, out_path)
    return len(rows)
