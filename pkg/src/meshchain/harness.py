"""Experiment orchestration: single runs, sweeps and report files."""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean

from . import metrics as M
from . import scenario as sc
from .compensation import CONSUMPTION, CONTRIBUTION, record_args
from .kernel import CpuProfile, rng_for
from .ledger import TxProposal
from .placement import Placement, place
from .protocol import ConfigurationError, FabricSimulation, MessageSizes, OrdererConfig
from .scenario import Scenario, ScenarioError, SweepSpec
from .svg import line_chart
from .topology import NetworkGraph, TopologyError, generate_topology, lab_topology, load_topology

RUN_FILES = ("tx.csv", "utilization.csv", "memory.csv", "summary.csv", "scenario.ini")
SWEEP_COLUMNS = [
    "row", "axis", "value", "seed", "runs", "ttc", "mean_latency", "median_latency",
    "p95_latency", "committed", "valid", "rejected",
    "peak_cpu_endorser", "peak_cpu_committer", "peak_cpu_orderer",
]

_graph_cache: dict[tuple, NetworkGraph] = {}


def build_graph(s: Scenario) -> NetworkGraph:
    if s.topology == "lab":
        key = ("lab", s.lab_nodes, s.lab_capacity_bps, s.lab_latency_s)
        make = lambda: lab_topology(s.lab_nodes, s.lab_capacity_bps, s.lab_latency_s)  # noqa: E731
    elif s.topology == "generate":
        key = ("gen", s.n_nodes, s.avg_degree, s.topology_seed)
        make = lambda: generate_topology(s.n_nodes, s.avg_degree, seed=s.topology_seed)  # noqa: E731
    else:
        path = Path(s.topology)
        if not path.is_absolute() and s.base_dir and (Path(s.base_dir) / path).exists():
            path = Path(s.base_dir) / path
        elif not path.exists():
            bundled = sc.DATA / "topologies" / f"{s.topology}.topo"
            if not bundled.is_file():
                raise ScenarioError([f"topology: no file or bundled topology {s.topology!r}"])
            path = Path(str(bundled))
        stat = path.stat()
        key = ("file", str(path.resolve()), stat.st_mtime_ns, stat.st_size)
        make = lambda: load_topology(path)  # noqa: E731
    if key not in _graph_cache:
        _graph_cache[key] = make()
    return _graph_cache[key]


def client_node(s: Scenario, graph: NetworkGraph) -> str:
    if s.client:
        if s.client not in graph:
            raise ScenarioError([f"client: node {s.client!r} not in topology"])
        return s.client
    return (graph.hosts or graph.nodes)[0]


def build_placement(s: Scenario, graph: NetworkGraph) -> Placement:
    candidates = graph.hosts or graph.nodes
    return place(s.strategy, graph, s.n_endorsers, candidates, s.effective_placement_seed(),
                 client_node(s, graph), s.n_committers)


def build_workload(s: Scenario, client: str) -> list[TxProposal]:
    rng = rng_for(s.seed, "workload")
    width = max(4, len(str(max(s.tx_count - 1, 0))))
    participants = s.participants or max(s.tx_count, 1)
    out = []
    for i in range(s.tx_count):
        who = f"p{i % participants:0{width}d}"
        query = s.function == "query_balance" or rng.random() < s.query_fraction
        if query:
            args = (s.period.encode(), who.encode())
            fn = "query_balance"
        else:
            kind = CONTRIBUTION if rng.random() < 0.5 else CONSUMPTION
            qty = int(rng.integers(0, 101))
            unit = f"0.{int(rng.integers(1, 100)):02d}"
            args = record_args(who, kind, qty, unit, s.period)
            fn = "record"
        out.append(TxProposal(f"tx{i:0{width}d}", client, s.chaincode, fn, args, s.start_time))
    return out


def build_simulation(s: Scenario) -> tuple[FabricSimulation, Placement]:
    s.validate()
    graph = build_graph(s)
    placement = build_placement(s, graph)
    sim = FabricSimulation(
        graph,
        placement.roles,
        required_k=s.required_k,
        orderer=OrdererConfig(s.block_size, s.batch_timeout),
        cpu=CpuProfile(s.cost_endorse, s.cost_validate_per_tx, s.cost_validate_per_block,
                       s.cost_order_per_tx, s.cost_client_per_response),
        sizes=MessageSizes(s.size_proposal, s.size_response, s.size_submission,
                           s.size_block_header, s.size_block_per_tx, s.size_notification),
        endorsement_timeout=s.endorsement_timeout,
        net_jitter=s.net_jitter,
        seed=s.seed,
    )
    sim.submit(build_workload(s, placement.roles.client), s.mode, s.start_time)
    return sim, placement


@dataclass
class RunResult:
    scenario: Scenario
    placement: Placement
    metrics: M.RunMetrics
    summary: M.Summary
    files: dict[str, str] = field(default_factory=dict)


def run_scenario(s: Scenario, out_dir: str | Path | None = None) -> RunResult:
    sim, placement = build_simulation(s)
    metrics = sim.run(s.until)
    summary = M.summarize(metrics)
    files = {
        "tx.csv": M.tx_csv(metrics.tx_records),
        "utilization.csv": M.utilization_csv(metrics),
        "memory.csv": M.memory_csv(metrics),
        "summary.csv": M.summary_csv(summary),
        "scenario.ini": sc.dumps(s),
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, content in files.items():
            (out / name).write_text(content)
    return RunResult(s, placement, metrics, summary, files)


# ---------------------------------------------------------------------------
# sweeps


def _row(summary: M.Summary) -> dict:
    return {
        "ttc": summary.ttc,
        "mean_latency": summary.mean_latency,
        "median_latency": summary.median_latency,
        "p95_latency": summary.p95_latency,
        "committed": summary.committed,
        "valid": summary.valid,
        "rejected": summary.rejected,
        "peak_cpu_endorser": summary.peak_cpu.get("endorser"),
        "peak_cpu_committer": summary.peak_cpu.get("committer"),
        "peak_cpu_orderer": summary.peak_cpu.get("orderer"),
    }


def _run_point(args) -> tuple[str, dict]:
    s, out_dir, label = args
    try:
        result = run_scenario(s, out_dir)
    except ScenarioError as exc:
        raise ScenarioError([f"sweep point {label}: {e}" for e in exc.errors]) from exc
    except (ConfigurationError, TopologyError) as exc:
        raise type(exc)(f"sweep point {label}: {exc}") from exc
    except Exception as exc:  # identify the failing point
        raise RuntimeError(f"sweep point {label} failed: {exc}") from exc
    return out_dir, _row(result.summary)


@dataclass
class SweepResult:
    spec: SweepSpec
    points: list[dict]
    aggregates: list[dict]
    csv_text: str
    svg_text: str

    def aggregate(self, value) -> dict:
        for row in self.aggregates:
            if row["value"] == str(value):
                return row
        raise KeyError(value)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def run_sweep(spec: SweepSpec, out_dir: str | Path | None = None, jobs: int = 1) -> SweepResult:
    spec.validate()
    tasks = []
    for value in spec.values:
        for seed in spec.seeds:
            point_dir = None
            if out_dir is not None:
                point_dir = str(Path(out_dir) / "points" / f"{spec.axis}-{value}" / f"seed-{seed}")
            tasks.append((value, seed, spec.point(value, seed), point_dir))

    work = [(s, d, f"{spec.axis}={v} seed={seed}") for v, seed, s, d in tasks]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, work))
    else:
        results = [_run_point(w) for w in work]

    points = []
    for (value, seed, _, _), (_, row) in zip(tasks, results):
        points.append({"row": "point", "axis": spec.axis, "value": str(value), "seed": seed, "runs": 1, **row})
    aggregates = []
    for value in spec.values:
        group = [p for p in points if p["value"] == str(value)]
        agg = {"row": "aggregate", "axis": spec.axis, "value": str(value), "seed": None, "runs": len(group)}
        for col in SWEEP_COLUMNS[5:]:
            vals = [p[col] for p in group if p[col] is not None]
            agg[col] = fmean(vals) if vals else None
        aggregates.append(agg)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in points + aggregates:
        w.writerow([_fmt(row[c]) for c in SWEEP_COLUMNS])
    metric = spec.metric if spec.metric in SWEEP_COLUMNS[5:] else "ttc"
    svg = line_chart(
        {metric: [(a["value"], a[metric]) for a in aggregates if a[metric] is not None]},
        x_label=spec.axis,
        y_label=metric,
        title=f"{spec.base.name}: {metric} vs {spec.axis}",
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(buf.getvalue())
        (out / "sweep.svg").write_text(svg)
        (out / "sweep.ini").write_text(sc.dumps(spec.base, spec))
    return SweepResult(spec, points, aggregates, buf.getvalue(), svg)


def default_jobs() -> int:
    return max(1, min(4, os.cpu_count() or 1))
