"""Trace statistics: filling number, accesses, storage times, fidelities."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .controller import Op, Trace
from .memarray import N_CELLS
from .qstate import LABELS

DEFAULT_THRESHOLD = 2 / 3
RETRIEVED = ("retrieved", "forced_retrieved")


@dataclass
class MetricsReport:
    n_instructions: int = 0
    n_writes: int = 0
    n_reads: int = 0
    n_stored: int = 0
    n_lost: int = 0
    n_retrieved: int = 0
    n_forced: int = 0
    forced_fraction: float = 0.0
    filling: list = field(default_factory=list)
    final_filling: int = 0
    access_counts: list = field(default_factory=lambda: [0] * N_CELLS)
    mean_access_all: float = 0.0
    mean_access_visited: float = 0.0
    max_access: int = 0
    storage_times: list = field(default_factory=list)
    storage_histogram: list = field(default_factory=list)  # [[storage_us, count], ...]
    mean_storage_time: float = 0.0
    max_storage_time: float = 0.0
    fidelity_by_pol: dict = field(default_factory=dict)  # label -> {"mean", "std", "n"}
    mean_fidelity: float = 0.0
    threshold: float = DEFAULT_THRESHOLD
    below_threshold: list = field(default_factory=list)  # [{"slot", "cell", "pol", "fidelity"}]
    mean_click_probability: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(**data)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def loads(cls, text: str) -> "MetricsReport":
        return cls.from_dict(json.loads(text))

    def tail_mean_filling(self, skip: int = 50) -> float:
        tail = self.filling[skip:]
        return float(np.mean(tail)) if tail else 0.0


def compute_metrics(trace: Trace, threshold: float = DEFAULT_THRESHOLD, capacity: int = N_CELLS) -> MetricsReport:
    rep = MetricsReport(threshold=threshold, access_counts=[0] * capacity)
    if not trace.records:
        return rep
    filling = 0
    fids: dict[str, list[float]] = {}
    clicks = []
    for ins, out in trace.records:
        rep.access_counts[ins.cell - 1] += 1
        if ins.op is Op.WRITE:
            rep.n_writes += 1
            filling += 1
            if out.kind == "stored":
                rep.n_stored += 1
            else:
                rep.n_lost += 1
        else:
            rep.n_reads += 1
            filling -= 1
            rep.n_forced += ins.forced
            if out.kind in RETRIEVED:
                rep.n_retrieved += 1
                rep.storage_times.append(out.storage_time_us)
                fids.setdefault(out.pol, []).append(out.fidelity)
                if out.click_probability is not None:
                    clicks.append(out.click_probability)
                if out.fidelity < threshold:
                    rep.below_threshold.append(
                        {"slot": ins.slot, "cell": ins.cell, "pol": out.pol, "fidelity": out.fidelity})
            else:
                rep.n_lost += 1
        rep.filling.append(filling)

    rep.n_instructions = len(trace.records)
    rep.forced_fraction = rep.n_forced / rep.n_instructions
    rep.final_filling = filling
    visited = [a for a in rep.access_counts if a]
    rep.mean_access_all = sum(rep.access_counts) / capacity
    rep.mean_access_visited = sum(visited) / len(visited)
    rep.max_access = max(rep.access_counts)
    if rep.storage_times:
        rep.storage_histogram = [[t, n] for t, n in sorted(Counter(rep.storage_times).items())]
        rep.mean_storage_time = float(np.mean(rep.storage_times))
        rep.max_storage_time = float(max(rep.storage_times))
    order = [p for p in LABELS if p in fids] + sorted(p for p in fids if p not in LABELS)
    rep.fidelity_by_pol = {
        p: {"mean": float(np.mean(fids[p])), "std": float(np.std(fids[p])), "n": len(fids[p])} for p in order
    }
    all_f = [f for p in order for f in fids[p]]
    rep.mean_fidelity = float(np.mean(all_f)) if all_f else 0.0
    rep.mean_click_probability = float(np.mean(clicks)) if clicks else 0.0
    return rep
