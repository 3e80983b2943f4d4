"""Deterministic synthetic trace generator with channel-isolated fault injection.

Fault kinds abstract the structural/temporal/semantic channels of real HDFS
faults: drop-subtree and duplicate-branch perturb structure, delay-timestamps
perturbs time, corrupt-description and swap-op-names perturb text only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    TRACEBENCH,
    EdgeRecord,
    EventRecord,
    MasterTables,
    TraceLabel,
    TraceRecord,
)

STRUCTURAL_KINDS = ("drop-subtree", "duplicate-branch")
TEMPORAL_KINDS = ("delay-timestamps",)
SEMANTIC_KINDS = ("corrupt-description", "swap-op-names")
FAULT_KINDS = STRUCTURAL_KINDS + TEMPORAL_KINDS + SEMANTIC_KINDS

_CORRUPT_DESCRIPTIONS = [
    "ERR unexpected fault token alpha",
    "ERR unexpected fault token beta",
    "ERR unexpected fault token gamma",
    "ERR unexpected fault token delta",
]


@dataclass
class SynthConfig:
    n_traces: int = 100
    events_per_trace: tuple[int, int] = (6, 10)
    fanout: tuple[int, int] = (1, 3)
    fault_mix: dict[str, float] = field(default_factory=dict)
    semantic_vocab_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if sum(self.fault_mix.values()) > 1.0 + 1e-9:
            raise ValueError("fault proportions must sum to at most 1")
        for kind in self.fault_mix:
            if kind not in FAULT_KINDS:
                raise ValueError(f"unknown fault kind {kind!r}")
        if self.events_per_trace[0] > self.events_per_trace[1] or self.events_per_trace[0] < 1:
            raise ValueError("bad events_per_trace range")
        if self.fanout[0] > self.fanout[1] or self.fanout[0] < 1:
            raise ValueError("bad fanout range")


@dataclass
class DraftEvent:
    event_id: str
    op_name: str
    description: str
    start_time: int


@dataclass
class TraceDraft:
    trace_id: str
    events: list[DraftEvent]
    edges: list[tuple[str, str]]  # (father_event_id, child_event_id)

    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {ev.event_id: [] for ev in self.events}
        for father, child in self.edges:
            out[father].append(child)
        return out


def _trace_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def generate_normal_trace(trace_id: str, config: SynthConfig, rng: np.random.Generator) -> TraceDraft:
    """Random rooted tree with bounded fanout, monotone timestamps, vocab text."""
    lo, hi = config.events_per_trace
    n = int(rng.integers(lo, hi + 1))
    events = []
    edges = []
    open_parents: list[tuple[str, int]] = []  # (event_id, remaining child slots)
    for j in range(n):
        token = int(rng.integers(config.semantic_vocab_size))
        eid = f"e{j}"
        events.append(
            DraftEvent(
                event_id=eid,
                op_name=f"op{token}",
                description=f"step {token} completed",
                start_time=j * 10,
            )
        )
        if j > 0:
            parent_id, slots = open_parents[0]
            edges.append((parent_id, eid))
            if slots - 1 <= 0:
                open_parents.pop(0)
            else:
                open_parents[0] = (parent_id, slots - 1)
        fanout = int(rng.integers(config.fanout[0], config.fanout[1] + 1))
        open_parents.append((eid, fanout))
    return TraceDraft(trace_id=trace_id, events=events, edges=edges)


def inject_fault(trace: TraceDraft, kind: str, seed: int) -> TraceDraft:
    rng = np.random.default_rng(seed)
    n = len(trace.events)
    if kind in STRUCTURAL_KINDS and n < 3:
        raise ValueError(f"{kind} requires at least 3 events, trace has {n}")

    if kind == "drop-subtree":
        victim = trace.events[int(rng.integers(1, n))].event_id
        doomed = _subtree(trace, victim)
        events = [ev for ev in trace.events if ev.event_id not in doomed]
        edges = [(f, c) for f, c in trace.edges if f not in doomed and c not in doomed]
        return TraceDraft(trace_id=trace.trace_id, events=events, edges=edges)

    if kind == "duplicate-branch":
        src = trace.events[int(rng.integers(1, n))].event_id
        members = _subtree(trace, src)
        parent = next(f for f, c in trace.edges if c == src)
        by_id = {ev.event_id: ev for ev in trace.events}
        t_next = max(ev.start_time for ev in trace.events) + 10
        clone_id = {eid: f"{eid}-dup" for eid in members}
        new_events = []
        for eid in sorted(members, key=lambda e: by_id[e].start_time):
            ev = by_id[eid]
            new_events.append(replace(ev, event_id=clone_id[eid], start_time=t_next))
            t_next += 10
        new_edges = [(clone_id[f], clone_id[c]) for f, c in trace.edges if f in members and c in members]
        return TraceDraft(
            trace_id=trace.trace_id,
            events=trace.events + new_events,
            edges=trace.edges + [(parent, clone_id[src])] + new_edges,
        )

    if kind == "delay-timestamps":
        cut = int(rng.integers(1, n))
        offset = 1000
        events = [
            replace(ev, start_time=ev.start_time + offset) if i >= cut else ev
            for i, ev in enumerate(trace.events)
        ]
        return TraceDraft(trace_id=trace.trace_id, events=events, edges=list(trace.edges))

    if kind == "corrupt-description":
        count = max(1, n // 3)
        chosen = set(rng.choice(n, size=count, replace=False).tolist())
        events = [
            replace(ev, description=_CORRUPT_DESCRIPTIONS[int(rng.integers(len(_CORRUPT_DESCRIPTIONS)))])
            if i in chosen
            else ev
            for i, ev in enumerate(trace.events)
        ]
        return TraceDraft(trace_id=trace.trace_id, events=events, edges=list(trace.edges))

    if kind == "swap-op-names":
        perm = rng.permutation(n)
        ops = [trace.events[int(i)].op_name for i in perm]
        events = [replace(ev, op_name=ops[i]) for i, ev in enumerate(trace.events)]
        return TraceDraft(trace_id=trace.trace_id, events=events, edges=list(trace.edges))

    raise ValueError(f"unknown fault kind {kind!r}")


def _subtree(trace: TraceDraft, root: str) -> set[str]:
    children = trace.children()
    out = set()
    stack = [root]
    while stack:
        node = stack.pop()
        out.add(node)
        stack.extend(children[node])
    return out


def fault_counts(config: SynthConfig) -> dict[str, int]:
    """Floor-based deterministic rounding of proportions, remainder stays normal."""
    return {kind: int(np.floor(p * config.n_traces)) for kind, p in sorted(config.fault_mix.items())}


def generate_dataset(config: SynthConfig) -> MasterTables:
    counts = fault_counts(config)
    kinds: list[str | None] = []
    for kind, count in counts.items():
        kinds.extend([kind] * count)
    kinds.extend([None] * (config.n_traces - len(kinds)))

    traces: list[TraceRecord] = []
    events: list[EventRecord] = []
    edges: list[EdgeRecord] = []
    for i, kind in enumerate(kinds):
        rng = _trace_rng(config.seed, i)
        trace_id = f"synth{i:05d}"
        draft = generate_normal_trace(trace_id, config, rng)
        if kind is not None:
            draft = inject_fault(draft, kind, seed=int(rng.integers(2**31)))
            label = TraceLabel.fault(kind)
            source = f"{kind}_{i}_default"
        else:
            label = TraceLabel.normal()
            source = f"normal_{i}_default"
        traces.append(TraceRecord(trace_id=trace_id, label=label, source_name=source))
        order = sorted(range(len(draft.events)), key=lambda j: (draft.events[j].start_time, j))
        for seq, j in enumerate(order):
            ev = draft.events[j]
            events.append(
                EventRecord(
                    event_id=ev.event_id,
                    trace_id=trace_id,
                    seq=seq,
                    op_name=ev.op_name,
                    description=ev.description,
                    start_time=ev.start_time,
                    end_time=None,
                )
            )
        for father, child in draft.edges:
            edges.append(EdgeRecord(trace_id=trace_id, father_event_id=father, child_event_id=child))
    return MasterTables(traces=traces, events=events, edges=edges, dataset_kind=TRACEBENCH)
