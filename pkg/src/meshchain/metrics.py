"""Per-run measurements and their summaries.

Latency of a transaction runs from its proposal to the moment the reference
committer has committed it; notification time is kept separately. TTC
(time-to-commit) of a batch is the span from the first proposal to the last
commit.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean, median
from typing import Iterable

from .kernel import UtilizationTimeline

COMMITTED_VALID = "committed-valid"
COMMITTED_INVALID = "committed-invalid"
REJECTED = "rejected-at-client"
QUERY_COMPLETED = "query-completed"
OUTCOMES = (COMMITTED_VALID, COMMITTED_INVALID, REJECTED, QUERY_COMPLETED)

TX_HEADER = ["tx_id", "t_proposed", "t_endorsed", "t_submitted", "t_committed", "t_notified", "outcome"]
UTIL_HEADER = ["node", "role", "window_start", "busy_fraction"]
MEMORY_HEADER = ["node", "role", "window_start", "memory_fraction"]
ROLES = ("endorser", "committer", "orderer", "client")


@dataclass
class TxRecord:
    tx_id: str
    t_proposed: float | None = None
    t_endorsed: float | None = None
    t_submitted: float | None = None
    t_committed: float | None = None
    t_notified: float | None = None
    outcome: str | None = None

    TIMESTAMPS = ("t_proposed", "t_endorsed", "t_submitted", "t_committed", "t_notified")

    @property
    def committed(self) -> bool:
        return self.outcome in (COMMITTED_VALID, COMMITTED_INVALID)

    @property
    def latency(self) -> float | None:
        if self.t_committed is None or self.t_proposed is None:
            return None
        return self.t_committed - self.t_proposed

    def timestamps(self) -> list[float]:
        return [t for t in (getattr(self, n) for n in self.TIMESTAMPS) if t is not None]


@dataclass
class RunMetrics:
    tx_records: list[TxRecord]
    utilization: UtilizationTimeline
    roles: dict[str, str]
    memory: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    blocks_cut: int = 0
    end_time: float = 0.0
    wall_seconds: float = 0.0


@dataclass
class Summary:
    proposed: int
    committed: int
    valid: int
    invalid: int
    rejected: int
    queries: int
    blocks_cut: int
    ttc: float | None
    mean_latency: float | None
    median_latency: float | None
    p95_latency: float | None
    mean_notify_latency: float | None
    throughput_tps: float | None
    peak_cpu: dict[str, float] = field(default_factory=dict)
    peak_memory: dict[str, float] = field(default_factory=dict)

    def rows(self) -> list[tuple[str, str]]:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, float):
                return f"{x:.6f}"
            return str(x)

        out = [
            (name, fmt(getattr(self, name)))
            for name in (
                "proposed", "committed", "valid", "invalid", "rejected", "queries",
                "blocks_cut", "ttc", "mean_latency", "median_latency", "p95_latency",
                "mean_notify_latency", "throughput_tps",
            )
        ]
        out += [(f"peak_cpu_{r}", fmt(v)) for r, v in sorted(self.peak_cpu.items())]
        out += [(f"peak_memory_{r}", fmt(v)) for r, v in sorted(self.peak_memory.items())]
        return out


def _nearest_rank(values: list[float], q: float) -> float:
    ordered = sorted(values)
    rank = max(1, math.ceil(q * len(ordered)))
    return ordered[rank - 1]


def summarize(metrics: RunMetrics) -> Summary:
    recs = metrics.tx_records
    committed = [r for r in recs if r.committed]
    latencies = [r.latency for r in committed]
    notify = [r.t_notified - r.t_proposed for r in committed if r.t_notified is not None]
    ttc = None
    if committed:
        ttc = max(r.t_committed for r in committed) - min(r.t_proposed for r in committed)

    peak_cpu: dict[str, float] = {}
    peak_mem: dict[str, float] = {}
    for node, role in metrics.roles.items():
        peak_cpu[role] = max(peak_cpu.get(role, 0.0), metrics.utilization.peak(node))
        mem = max((m for _, m in metrics.memory.get(node, [])), default=None)
        if mem is not None:
            peak_mem[role] = max(peak_mem.get(role, 0.0), mem)

    return Summary(
        proposed=len(recs),
        committed=len(committed),
        valid=sum(r.outcome == COMMITTED_VALID for r in recs),
        invalid=sum(r.outcome == COMMITTED_INVALID for r in recs),
        rejected=sum(r.outcome == REJECTED for r in recs),
        queries=sum(r.outcome == QUERY_COMPLETED for r in recs),
        blocks_cut=metrics.blocks_cut,
        ttc=ttc,
        mean_latency=fmean(latencies) if latencies else None,
        median_latency=median(latencies) if latencies else None,
        p95_latency=_nearest_rank(latencies, 0.95) if latencies else None,
        mean_notify_latency=fmean(notify) if notify else None,
        throughput_tps=len(committed) / ttc if ttc else None,
        peak_cpu=peak_cpu,
        peak_memory=peak_mem,
    )


def compare(baseline: Summary, candidate: Summary) -> float:
    """Relative latency reduction of ``candidate`` over ``baseline``."""
    return gain(baseline.mean_latency, candidate.mean_latency)


def gain(baseline_latency: float | None, candidate_latency: float | None) -> float:
    if not baseline_latency:
        raise ValueError("baseline mean latency is zero or undefined")
    if candidate_latency is None:
        raise ValueError("candidate mean latency is undefined")
    return (baseline_latency - candidate_latency) / baseline_latency


# ---------------------------------------------------------------------------
# CSV output


def _f(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def tx_csv(records: Iterable[TxRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TX_HEADER)
    for r in records:
        w.writerow([r.tx_id] + [_f(getattr(r, n)) for n in TxRecord.TIMESTAMPS] + [r.outcome or ""])
    return buf.getvalue()


def utilization_csv(metrics: RunMetrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(UTIL_HEADER)
    for node in sorted(metrics.roles):
        for start, frac in metrics.utilization.busy.get(node, []):
            w.writerow([node, metrics.roles[node], _f(start), _f(frac)])
    return buf.getvalue()


def memory_csv(metrics: RunMetrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MEMORY_HEADER)
    for node in sorted(metrics.roles):
        for start, frac in metrics.memory.get(node, []):
            w.writerow([node, metrics.roles[node], _f(start), _f(frac)])
    return buf.getvalue()


def summary_csv(summary: Summary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    w.writerows(summary.rows())
    return buf.getvalue()


def read_tx_csv(path) -> list[TxRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TX_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        out = []
        for row in reader:
            rec = TxRecord(row["tx_id"], outcome=row["outcome"] or None)
            for n in TxRecord.TIMESTAMPS:
                setattr(rec, n, float(row[n]) if row[n] else None)
            out.append(rec)
        return out


def read_utilization_csv(path) -> tuple[UtilizationTimeline, dict[str, str]]:
    busy: dict[str, list[tuple[float, float]]] = {}
    roles: dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != UTIL_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            roles[row["node"]] = row["role"]
            busy.setdefault(row["node"], []).append(
                (float(row["window_start"]), float(row["busy_fraction"]))
            )
    width = 1.0
    starts = sorted({s for series in busy.values() for s, _ in series})
    if len(starts) > 1:
        width = starts[1] - starts[0]
    horizon = (starts[-1] + width) if starts else 0.0
    return UtilizationTimeline(width, horizon, busy), roles


def metrics_from_dir(directory) -> RunMetrics:
    d = Path(directory)
    records = read_tx_csv(d / "tx.csv")
    timeline, roles = read_utilization_csv(d / "utilization.csv")
    return RunMetrics(records, timeline, roles)
