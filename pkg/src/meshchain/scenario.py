"""Scenario and sweep configuration files.

Files are INI-style: ``[section]`` headers followed by ``key = value``
lines, lists comma-separated. Every key is the name of a :class:`Scenario`
field and must sit under that field's section. A ``profile`` key names a
bundled (or on-disk) profile whose values are applied first, so a scenario
only needs to state what differs. An optional ``[sweep]`` section turns
the file into a sweep over one axis.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any

DATA = resources.files("meshchain") / "data"
SECTIONS = ("scenario", "topology", "placement", "orderer", "workload", "cpu", "messages")
AXES = ("block_size", "n_endorsers", "strategy")
STRATEGIES = ("random", "basp", "betweenness")


class ScenarioError(ValueError):
    """Invalid scenario; ``errors`` lists every violation found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _f(section: str, default: Any = None, **kw):
    return field(default=default, metadata={"section": section}, **kw)


@dataclass
class Scenario:
    name: str = _f("scenario", "scenario")
    profile: str = _f("scenario", "")
    seed: int = _f("scenario", 0)
    mode: str = _f("scenario", "parallel")
    tx_count: int = _f("scenario", 100)
    start_time: float = _f("scenario", 0.0)
    until: float | None = _f("scenario", None)
    endorsement_timeout: float = _f("scenario", 300.0)
    net_jitter: float = _f("scenario", 0.0)

    topology: str = _f("topology", "lab")
    lab_nodes: int = _f("topology", 8)
    lab_capacity_bps: float = _f("topology", 100e6)
    lab_latency_s: float = _f("topology", 0.0002)
    n_nodes: int = _f("topology", 85)
    avg_degree: float = _f("topology", 5.0)
    topology_seed: int = _f("topology", 0)

    strategy: str = _f("placement", "basp")
    placement_seed: int | None = _f("placement", None)
    client: str = _f("placement", "")
    n_endorsers: int = _f("placement", 1)
    n_committers: int = _f("placement", 1)
    required_k: int = _f("placement", 1)

    block_size: int = _f("orderer", 10)
    batch_timeout: float = _f("orderer", 2.0)

    chaincode: str = _f("workload", "compensation")
    function: str = _f("workload", "record")
    participants: int = _f("workload", 0)
    period: str = _f("workload", "2018-03")
    query_fraction: float = _f("workload", 0.0)

    cost_endorse: float = _f("cpu", 0.3)
    cost_validate_per_tx: float = _f("cpu", 0.1)
    cost_validate_per_block: float = _f("cpu", 0.0)
    cost_order_per_tx: float = _f("cpu", 0.05)
    cost_client_per_response: float = _f("cpu", 0.01)

    size_proposal: int = _f("messages", 3 * 1024)
    size_response: int = _f("messages", 4 * 1024)
    size_submission: int = _f("messages", 7 * 1024)
    size_block_header: int = _f("messages", 1024)
    size_block_per_tx: int = _f("messages", 7 * 1024)
    size_notification: int = _f("messages", 512)

    # where relative topology paths are resolved; not part of the file
    base_dir: str = field(default="", compare=False, repr=False, metadata={"section": None})

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def effective_placement_seed(self) -> int:
        return self.seed if self.placement_seed is None else self.placement_seed

    def validate(self) -> "Scenario":
        errs = []
        if self.mode not in ("serial", "parallel"):
            errs.append(f"mode: {self.mode!r} is not serial|parallel")
        if self.tx_count < 0:
            errs.append("tx_count: must be >= 0")
        if self.start_time < 0:
            errs.append("start_time: must be >= 0")
        if self.until is not None and self.until <= 0:
            errs.append("until: must be > 0")
        if self.endorsement_timeout <= 0:
            errs.append("endorsement_timeout: must be > 0")
        if not 0 <= self.net_jitter < 1:
            errs.append("net_jitter: must be in [0, 1)")
        if self.lab_nodes < 2:
            errs.append("lab_nodes: must be >= 2")
        if self.n_nodes < 2:
            errs.append("n_nodes: must be >= 2")
        if self.avg_degree < 2:
            errs.append("avg_degree: must be >= 2")
        if self.strategy not in STRATEGIES:
            errs.append(f"strategy: {self.strategy!r} not in {STRATEGIES}")
        if self.n_endorsers < 1:
            errs.append("n_endorsers: must be >= 1")
        if self.n_committers < 0:
            errs.append("n_committers: must be >= 0")
        if not 1 <= self.required_k <= max(self.n_endorsers, 1):
            errs.append("required_k: must be in [1, n_endorsers]")
        if self.block_size < 1:
            errs.append("block_size: must be >= 1")
        if self.batch_timeout <= 0:
            errs.append("batch_timeout: must be > 0")
        if self.function not in ("record", "query_balance"):
            errs.append(f"function: {self.function!r} not in (record, query_balance)")
        if self.participants < 0:
            errs.append("participants: must be >= 0")
        if not 0 <= self.query_fraction <= 1:
            errs.append("query_fraction: must be in [0, 1]")
        for f in fields(self):
            if f.name.startswith(("cost_", "size_")) and getattr(self, f.name) < 0:
                errs.append(f"{f.name}: must be >= 0")
        if errs:
            raise ScenarioError(errs)
        return self


@dataclass
class SweepSpec:
    base: Scenario
    axis: str
    values: list
    seeds: list[int]
    metric: str = "ttc"

    def validate(self) -> "SweepSpec":
        errs = []
        if self.axis not in AXES:
            errs.append(f"axis: {self.axis!r} not in {AXES}")
        if not self.values:
            errs.append("values: must not be empty")
        if not self.seeds:
            errs.append("seeds: must not be empty")
        if not errs:
            for v in self.values:
                try:
                    self.point(v, self.seeds[0]).validate()
                except ScenarioError as exc:
                    errs.extend(f"values[{v}]: {e}" for e in exc.errors)
        if errs:
            raise ScenarioError(errs)
        return self

    def point(self, value, seed: int) -> Scenario:
        return self.base.replace(**{self.axis: value, "seed": seed})


# ---------------------------------------------------------------------------
# parsing and serialization


_FIELDS = {f.name: f for f in fields(Scenario) if f.metadata.get("section")}


def _convert(name: str, raw: str):
    f = _FIELDS[name]
    raw = raw.strip()
    kind = f.type if isinstance(f.type, str) else f.type.__name__
    if "None" in kind and raw in ("", "none", "None"):
        return None
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ScenarioError([f"{name}: cannot parse {raw!r} as {kind.split(' ')[0]}"]) from None
    return raw


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def resolve(name_or_path: str | Path, kind: str = "presets") -> Path:
    """A path on disk, or the name of a bundled preset/profile."""
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = DATA / kind / f"{p.stem if p.suffix == '.ini' else p.name}.ini"
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"no such {kind[:-1]} file or bundled name: {name_or_path}")


def bundled_names(kind: str = "presets") -> list[str]:
    return sorted(p.name[:-4] for p in (DATA / kind).iterdir() if p.name.endswith(".ini"))


def _read(text: str, source: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ScenarioError([f"{source}: {exc}"]) from None
    return cp


def _collect(cp: configparser.ConfigParser, values: dict, errors: list[str]) -> None:
    for section in cp.sections():
        if section == "sweep":
            continue
        if section not in SECTIONS:
            errors.append(f"[{section}]: unknown section")
            continue
        for key, raw in cp.items(section):
            f = _FIELDS.get(key)
            if f is None:
                errors.append(f"[{section}] {key}: unknown key")
            elif f.metadata["section"] != section:
                errors.append(f"[{section}] {key}: belongs in [{f.metadata['section']}]")
            else:
                try:
                    values[key] = _convert(key, raw)
                except ScenarioError as exc:
                    errors.extend(exc.errors)


def parse(text: str, source: str = "<scenario>", base_dir: str = "",
          overrides: dict[str, str] | None = None) -> tuple[Scenario, SweepSpec | None]:
    cp = _read(text, source)
    values: dict[str, Any] = {}
    errors: list[str] = []

    profile = cp.get("scenario", "profile", fallback="").strip()
    if profile:
        try:
            pp = resolve(profile, "profiles")
        except FileNotFoundError as exc:
            raise ScenarioError([f"profile: {exc}"]) from None
        _collect(_read(pp.read_text(), str(pp)), values, errors)
    _collect(cp, values, errors)

    for key, raw in (overrides or {}).items():
        if key in _FIELDS:
            try:
                values[key] = _convert(key, str(raw))
            except ScenarioError as exc:
                errors.extend(exc.errors)
        elif not (cp.has_section("sweep") and key in ("axis", "values", "seeds", "metric")):
            errors.append(f"override {key}: unknown key")
    if errors:
        raise ScenarioError(errors)

    scenario = Scenario(**values, base_dir=base_dir)
    sweep = None
    if cp.has_section("sweep"):
        sec = dict(cp.items("sweep"))
        sec.update({k: str(v) for k, v in (overrides or {}).items() if k in ("axis", "values", "seeds", "metric")})
        sweep = _parse_sweep(sec, scenario)
        sweep.validate()
    else:
        scenario.validate()
    return scenario, sweep


def _parse_sweep(sec: dict[str, str], base: Scenario) -> SweepSpec:
    errs = []
    unknown = set(sec) - {"axis", "values", "seeds", "metric"}
    errs += [f"[sweep] {k}: unknown key" for k in sorted(unknown)]
    axis = sec.get("axis", "").strip()
    items = [v.strip() for v in sec.get("values", "").split(",") if v.strip()]
    values: list = items
    if axis in ("block_size", "n_endorsers"):
        try:
            values = [int(v) for v in items]
        except ValueError:
            errs.append(f"values: {axis} values must be integers")
    seeds_raw = sec.get("seeds", str(base.seed)).strip()
    try:
        seeds = [int(s) for s in seeds_raw.split(",") if s.strip()]
    except ValueError:
        errs.append("seeds: must be comma-separated integers")
        seeds = []
    if errs:
        raise ScenarioError(errs)
    return SweepSpec(base, axis, values, seeds, sec.get("metric", "ttc").strip())


def load(path_or_name, overrides: dict[str, str] | None = None) -> tuple[Scenario, SweepSpec | None]:
    path = resolve(path_or_name)
    base = str(path.parent.resolve())
    return parse(path.read_text(), str(path), base, overrides)


def dumps(scenario: Scenario, sweep: SweepSpec | None = None) -> str:
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        for name, f in _FIELDS.items():
            if f.metadata["section"] == section:
                lines.append(f"{name} = {_format(getattr(scenario, name))}".rstrip())
        lines.append("")
    if sweep is not None:
        lines += [
            "[sweep]",
            f"axis = {sweep.axis}",
            f"values = {', '.join(str(v) for v in sweep.values)}",
            f"seeds = {', '.join(str(s) for s in sweep.seeds)}",
            f"metric = {sweep.metric}",
            "",
        ]
    return "\n".join(lines)
