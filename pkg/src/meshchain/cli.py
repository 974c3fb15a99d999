"""Command-line entry point.

Exit status: 0 on success, 1 when the input (scenario, topology, flags) is
invalid, 2 when a run fails.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import __version__
from . import harness as H
from . import metrics as M
from . import scenario as sc
from .placement import STRATEGIES
from .protocol import ConfigurationError
from .topology import TopologyError, generate_topology, load_topology, save_topology, select_hosts, topology_stats

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
INVALID = (sc.ScenarioError, ConfigurationError, TopologyError, FileNotFoundError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# output helpers


def _emit(header: list[str], rows: list[list], fmt: str, out=None) -> None:
    out = out or sys.stdout
    cells = [[_cell(v) for v in r] for r in rows]
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(cells)
        return
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(header)]
    out.write("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for r in cells:
        out.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for p in pairs or []:
        key, sep, value = p.partition("=")
        if not sep or not key.strip():
            raise sc.ScenarioError([f"--set {p!r}: expected key=value"])
        out[key.strip()] = value.strip()
    return out


def _load(args) -> tuple[sc.Scenario, sc.SweepSpec | None]:
    overrides = _overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    scenario, sweep = sc.load(args.scenario, overrides)
    if sweep is not None and args.seed is not None:
        sweep = sc.SweepSpec(sweep.base, sweep.axis, sweep.values, [args.seed], sweep.metric).validate()
    return scenario, sweep


def _print_sweep(result: H.SweepResult, fmt: str) -> None:
    cols = H.SWEEP_COLUMNS[1:3] + ["runs", "ttc", "mean_latency", "p95_latency", "committed"]
    _emit(cols, [[row[c] for c in cols] for row in result.aggregates], fmt)


def _print_summary(summary: M.Summary, fmt: str) -> None:
    _emit(["metric", "value"], [list(r) for r in summary.rows()], fmt)


# ---------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    scenario, sweep = _load(args)
    if sweep is not None:
        return _do_sweep(sweep, args)
    result = H.run_scenario(scenario, args.out)
    _print_summary(result.summary, args.format)
    return EXIT_OK


def cmd_sweep(args) -> int:
    _, sweep = _load(args)
    if sweep is None:
        raise sc.ScenarioError([f"{args.scenario}: no [sweep] section"])
    return _do_sweep(sweep, args)


def _do_sweep(sweep: sc.SweepSpec, args) -> int:
    jobs = args.jobs if args.jobs is not None else H.default_jobs()
    result = H.run_sweep(sweep, args.out, jobs=jobs)
    _print_sweep(result, args.format)
    return EXIT_OK


def cmd_topology_gen(args) -> int:
    graph = generate_topology(args.nodes, args.avg_degree, seed=args.seed or 0)
    if args.hosts:
        graph = graph.with_hosts(select_hosts(graph, total=args.hosts))
    header = f"generated: nodes={args.nodes} avg_degree={args.avg_degree} seed={args.seed or 0}"
    if args.out:
        save_topology(graph, args.out, header)
    else:
        from .topology import dumps

        sys.stdout.write(dumps(graph, header))
    return EXIT_OK


def _topology_arg(name: str):
    path = Path(name)
    if path.exists():
        return load_topology(path)
    bundled = sc.DATA / "topologies" / f"{name}.topo"
    if bundled.is_file():
        return load_topology(Path(str(bundled)))
    raise FileNotFoundError(f"no such topology file or bundled name: {name}")


def cmd_topology_stats(args) -> int:
    st = topology_stats(_topology_arg(args.topology))
    rows = [
        ["nodes", st.nodes], ["links", st.links], ["hosts", st.hosts],
        ["mean_capacity_bps", st.mean_capacity_bps], ["frac_le_10mbps", st.frac_le_10mbps],
        ["max_background_bps", st.max_background_bps], ["mean_degree", st.mean_degree],
    ]
    rows += [[f"top_degree_{n}", v] for n, v in st.top_degree]
    rows += [[f"top_betweenness_{n}", v] for n, v in st.top_betweenness]
    _emit(["metric", "value"], rows, args.format)
    return EXIT_OK


def cmd_topology_validate(args) -> int:
    graph = _topology_arg(args.topology)
    if not graph.is_connected():
        raise TopologyError("topology is not connected")
    print(f"ok: {len(graph)} nodes, {len(graph.links)} links, {len(graph.hosts)} hosts")
    return EXIT_OK


def cmd_placement_compare(args) -> int:
    overrides = _overrides(args.set)
    base, sweep = sc.load(args.scenario, overrides)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    bad = [s for s in strategies if s not in STRATEGIES]
    if bad:
        raise sc.ScenarioError([f"strategies: unknown {bad}"])
    seeds = list(range(args.seeds)) if args.seeds else (sweep.seeds if sweep else [base.seed])
    spec = sc.SweepSpec(base, "strategy", strategies, seeds, "mean_latency").validate()
    jobs = args.jobs if args.jobs is not None else H.default_jobs()
    result = H.run_sweep(spec, args.out, jobs=jobs)
    ref = result.aggregates[0]["mean_latency"]
    rows = []
    for agg in result.aggregates:
        s = base.replace(strategy=agg["value"], seed=seeds[0])
        roles = H.build_placement(s, H.build_graph(s)).roles
        rows.append([
            agg["value"], roles.orderer, " ".join(roles.endorsers), agg["mean_latency"],
            M.gain(ref, agg["mean_latency"]) if ref else None,
        ])
    _emit(["strategy", "orderer", "endorsers", "mean_latency", f"gain_vs_{strategies[0]}"], rows, args.format)
    return EXIT_OK


def cmd_report(args) -> int:
    d = Path(args.dir)
    if (d / "sweep.csv").is_file():
        with open(d / "sweep.csv", newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if r["row"] == "aggregate"]
        cols = ["axis", "value", "runs", "ttc", "mean_latency", "p95_latency", "committed"]
        _emit(cols, [[r[c] for c in cols] for r in rows], args.format)
        return EXIT_OK
    if not (d / "tx.csv").is_file():
        raise FileNotFoundError(f"{d}: neither sweep.csv nor tx.csv found")
    _print_summary(M.summarize(M.metrics_from_dir(d)), args.format)
    return EXIT_OK


def cmd_presets(args) -> int:
    rows = []
    for name in sc.bundled_names("presets"):
        s, sweep = sc.load(name)
        axis = f"{sweep.axis} [{', '.join(map(str, sweep.values))}] x {len(sweep.seeds)} seeds" if sweep else ""
        rows.append([name, s.profile, s.mode, s.tx_count, axis])
    _emit(["preset", "profile", "mode", "tx_count", "sweep"], rows, args.format)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("table", "csv"), default="table")

    runner = _Parser(add_help=False)
    runner.add_argument("scenario", help="scenario file or bundled preset name")
    runner.add_argument("--seed", type=int)
    runner.add_argument("--out", help="output directory")
    runner.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario key")
    runner.add_argument("--jobs", type=int, help="parallel sweep workers")

    p = _Parser(prog="meshchain", description="Permissioned-ledger-over-mesh simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("run", parents=[common, runner], help="run a scenario (or a sweep file)").set_defaults(fn=cmd_run)
    sub.add_parser("sweep", parents=[common, runner], help="run a sweep file").set_defaults(fn=cmd_sweep)

    topo = sub.add_parser("topology", help="generate, inspect or check topologies")
    tsub = topo.add_subparsers(dest="topology_command", required=True, parser_class=_Parser)
    g = tsub.add_parser("gen", help="generate a random mesh")
    g.add_argument("--nodes", type=int, default=85)
    g.add_argument("--avg-degree", type=float, default=5.0)
    g.add_argument("--hosts", type=int, default=10, help="mark this many deployment hosts (0: none)")
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.set_defaults(fn=cmd_topology_gen)
    st = tsub.add_parser("stats", parents=[common], help="link and centrality statistics")
    st.add_argument("topology")
    st.set_defaults(fn=cmd_topology_stats)
    va = tsub.add_parser("validate", help="parse and check a topology file")
    va.add_argument("topology")
    va.set_defaults(fn=cmd_topology_validate)

    pl = sub.add_parser("placement", help="placement strategy comparisons")
    psub = pl.add_subparsers(dest="placement_command", required=True, parser_class=_Parser)
    pc = psub.add_parser("compare", parents=[common], help="run a scenario under several strategies")
    pc.add_argument("scenario")
    pc.add_argument("--strategies", default="random,basp")
    pc.add_argument("--seeds", type=int, help="number of seeds (default: the file's sweep seeds)")
    pc.add_argument("--set", action="append", metavar="KEY=VALUE")
    pc.add_argument("--out")
    pc.add_argument("--jobs", type=int)
    pc.set_defaults(fn=cmd_placement_compare)

    rp = sub.add_parser("report", parents=[common], help="summarize an output directory")
    rp.add_argument("dir")
    rp.set_defaults(fn=cmd_report)

    sub.add_parser("presets", parents=[common], help="list bundled presets").set_defaults(fn=cmd_presets)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except sc.ScenarioError as exc:
        print("invalid scenario:", file=sys.stderr)
        for e in exc.errors:
            print(f"  {e}", file=sys.stderr)
        return EXIT_INVALID
    except INVALID as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
