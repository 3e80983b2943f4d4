"""Dataset assembly shared by the CLI and the test harness: tables to model-ready
graph or count-vector datasets, with deterministic seed derivation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .core import MasterTables, TraceSlice
from .graphs import EmbeddingTable, attach_embeddings, build_all_graphs, pseudo_embeddings
from .models import mcv_build_vocab, mcv_vectorize
from .traineval import GraphDataset, SplitIndices, VectorDataset, stratified_split


def derive_seed(seed: int, subsystem: str) -> int:
    """Stable per-subsystem seed: low 32 bits of sha256("<seed>:<subsystem>")."""
    digest = hashlib.sha256(f"{seed}:{subsystem}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


@dataclass
class TaskData:
    trace_ids: list[str]
    labels: np.ndarray  # integer labels for the task
    class_names: list[str]  # ["normal", "abnormal"] for ad, fault kinds for fc
    num_classes: int  # 1 for the detection logit, len(class_names) for fc


def task_labels(tables: MasterTables, task: str) -> TaskData:
    """Trace subset and integer labels for a task.

    Detection keeps every trace (abnormal = 1); classification keeps only the
    faulted traces, classes being the sorted fault kinds present.
    """
    if task == "ad":
        ids = [tr.trace_id for tr in tables.traces]
        labels = np.array([1 if tr.label.is_fault else 0 for tr in tables.traces], dtype=np.int64)
        return TaskData(trace_ids=ids, labels=labels, class_names=["normal", "abnormal"], num_classes=1)
    if task == "fc":
        faulted = [tr for tr in tables.traces if tr.label.is_fault]
        kinds = sorted({tr.label.fault_kind for tr in faulted})
        index = {kind: i for i, kind in enumerate(kinds)}
        ids = [tr.trace_id for tr in faulted]
        labels = np.array([index[tr.label.fault_kind] for tr in faulted], dtype=np.int64)
        return TaskData(trace_ids=ids, labels=labels, class_names=kinds, num_classes=len(kinds))
    raise ValueError(f"unknown task {task!r}")


def split_for_task(tables: MasterTables, task: str, seed: int) -> tuple[TaskData, SplitIndices]:
    data = task_labels(tables, task)
    split = stratified_split(list(data.labels), seed=derive_seed(seed, "split"))
    return data, split


def slices_for(tables: MasterTables, trace_ids: list[str]) -> list[TraceSlice]:
    events = tables.events_by_trace()
    edges = tables.edges_by_trace()
    out = []
    for tid in trace_ids:
        evs = sorted(events.get(tid, []), key=lambda ev: (ev.start_time, ev.seq))
        out.append(TraceSlice(trace_id=tid, events=evs, edges=edges.get(tid, [])))
    return out


def build_graph_dataset(
    tables: MasterTables,
    task: str,
    split: SplitIndices,
    embeddings: EmbeddingTable | None = None,
) -> GraphDataset:
    data = task_labels(tables, task)
    wanted = set(data.trace_ids)
    graphs = {g.trace_id: g for g in build_all_graphs(tables) if g.trace_id in wanted}
    ordered = [graphs[tid] for tid in data.trace_ids]
    if embeddings is not None:
        ordered = [attach_embeddings(g, embeddings) for g in ordered]
    return GraphDataset(graphs=ordered, labels=data.labels, split=split, num_classes=data.num_classes)


def build_vector_dataset(
    tables: MasterTables,
    task: str,
    split: SplitIndices,
    key_field: str = "auto",
) -> VectorDataset:
    data = task_labels(tables, task)
    slices = slices_for(tables, data.trace_ids)
    train_slices = [slices[i] for i in split.train]
    vocab = mcv_build_vocab(train_slices, tables.dataset_kind, key_field)
    x = np.vstack([mcv_vectorize(s, vocab, tables.dataset_kind, key_field) for s in slices])
    return VectorDataset(x=x, labels=data.labels, split=split, num_classes=data.num_classes, vocab=vocab)


def make_pseudo_embeddings(tables: MasterTables, dim: int) -> EmbeddingTable:
    return pseudo_embeddings(tables, dim)
