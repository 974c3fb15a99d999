"""Wireless mesh network model.

A :class:`NetworkGraph` is an undirected graph whose links carry a raw
capacity, a one-way latency and the background traffic already using the
link. A message crossing a path pays every hop's latency plus one
serialization term at the bottleneck's residual capacity.

Topology files are plain text::

    # comment
    node n00 host
    node n01
    link n00 n01 12000000 0.003 250000

Saving a graph and loading it back reproduces the file byte for byte.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from statistics import NormalDist
from typing import Iterable, Sequence

import numpy as np

from .kernel import rng_for

MBPS = 1_000_000
QMPSU_MEAN_BPS = 13.6 * MBPS
QMPSU_P60_BPS = 10 * MBPS
QMPSU_PEAK_TRAFFIC_BPS = 1736_000


class TopologyError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    capacity_bps: float
    latency_s: float
    background_bps: float = 0.0

    @property
    def effective_bps(self) -> float:
        return self.capacity_bps - self.background_bps

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a


def _pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


class NetworkGraph:
    def __init__(self, nodes: Iterable[str] = (), links: Iterable[Link] = (), hosts: Iterable[str] = ()):
        self._nodes: dict[str, bool] = {}
        self._links: dict[tuple[str, str], Link] = {}
        self._adj: dict[str, dict[str, Link]] = {}
        for n in nodes:
            self.add_node(n)
        for h in hosts:
            self.add_node(h, host=True)
        for link in links:
            self.add_link(link)

    # -- construction -------------------------------------------------------

    def add_node(self, node: str, host: bool = False) -> None:
        if not node or any(c.isspace() for c in node):
            raise TopologyError(f"invalid node id {node!r}")
        self._nodes[node] = self._nodes.get(node, False) or host
        self._adj.setdefault(node, {})

    def add_link(self, link: Link) -> None:
        if link.a == link.b:
            raise TopologyError(f"self-loop on {link.a}")
        for n in (link.a, link.b):
            if n not in self._nodes:
                raise TopologyError(f"link references unknown node {n}")
        key = _pair(link.a, link.b)
        if key in self._links:
            raise TopologyError(f"duplicate link {key[0]}-{key[1]}")
        if not link.capacity_bps > link.background_bps >= 0:
            raise TopologyError(
                f"link {key[0]}-{key[1]} needs capacity > background >= 0"
            )
        if link.latency_s < 0:
            raise TopologyError(f"link {key[0]}-{key[1]} has negative latency")
        self._links[key] = link
        self._adj[link.a][link.b] = link
        self._adj[link.b][link.a] = link

    # -- queries ------------------------------------------------------------

    @property
    def nodes(self) -> list[str]:
        return sorted(self._nodes)

    @property
    def hosts(self) -> list[str]:
        return sorted(n for n, h in self._nodes.items() if h)

    @property
    def links(self) -> list[Link]:
        return [self._links[k] for k in sorted(self._links)]

    def is_host(self, node: str) -> bool:
        return self._nodes[node]

    def __contains__(self, node: str) -> bool:
        return node in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def neighbors(self, node: str) -> list[str]:
        return sorted(self._adj[node])

    def link(self, a: str, b: str) -> Link:
        try:
            return self._links[_pair(a, b)]
        except KeyError:
            raise TopologyError(f"no link {a}-{b}") from None

    def incident(self, node: str) -> list[Link]:
        return [self._adj[node][m] for m in sorted(self._adj[node])]

    def degree(self, node: str) -> int:
        return len(self._adj[node])

    def is_connected(self) -> bool:
        if not self._nodes:
            return True
        start = next(iter(self._nodes))
        return len(_bfs_distances(self, start)) == len(self._nodes)

    def with_hosts(self, hosts: Iterable[str]) -> "NetworkGraph":
        hosts = set(hosts)
        return NetworkGraph(
            (n for n in self.nodes if n not in hosts), self.links, sorted(hosts)
        )

    def scaled(self, factor: float) -> "NetworkGraph":
        """Copy with every capacity and background multiplied by ``factor``."""
        links = [
            Link(l.a, l.b, l.capacity_bps * factor, l.latency_s, l.background_bps * factor)
            for l in self.links
        ]
        return NetworkGraph([n for n in self.nodes if not self.is_host(n)], links, self.hosts)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, NetworkGraph)
            and self._nodes == other._nodes
            and self._links == other._links
        )

    def __repr__(self) -> str:
        return f"NetworkGraph({len(self._nodes)} nodes, {len(self._links)} links)"


# ---------------------------------------------------------------------------
# routing and transfer time


def _bfs_distances(graph: NetworkGraph, src: str) -> dict[str, int]:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        v = queue.popleft()
        for w in graph.neighbors(v):
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def route(graph: NetworkGraph, src: str, dst: str) -> list[str]:
    """Minimum-hop path as a node list, lexicographically smallest among ties.

    Returns ``[]`` when ``src == dst``.
    """
    if src == dst:
        return []
    to_dst = _bfs_distances(graph, dst)
    if src not in to_dst:
        raise TopologyError(f"{dst} unreachable from {src}")
    # walking greedily toward dst over the smallest-id neighbour that is one
    # hop closer yields the lexicographically smallest shortest path
    path = [src]
    node = src
    while node != dst:
        node = min(w for w in graph.neighbors(node) if to_dst.get(w) == to_dst[node] - 1)
        path.append(node)
    return path


def path_links(graph: NetworkGraph, path: Sequence[str]) -> list[Link]:
    return [graph.link(a, b) for a, b in zip(path, path[1:])]


def transfer_time(graph: NetworkGraph, path: Sequence[str], size_bytes: float) -> float:
    links = path_links(graph, path)
    if not links:
        return 0.0
    latency = sum(l.latency_s for l in links)
    bottleneck = min(l.effective_bps for l in links)
    return latency + size_bytes * 8 / bottleneck


class Router:
    """Route cache over one immutable graph."""

    def __init__(self, graph: NetworkGraph):
        self.graph = graph
        self._cache: dict[tuple[str, str], tuple[float, float]] = {}

    def _path_params(self, src: str, dst: str) -> tuple[float, float]:
        key = (src, dst)
        if key not in self._cache:
            links = path_links(self.graph, route(self.graph, src, dst))
            if links:
                self._cache[key] = (
                    sum(l.latency_s for l in links),
                    min(l.effective_bps for l in links),
                )
            else:
                self._cache[key] = (0.0, math.inf)
        return self._cache[key]

    def transfer_time(self, src: str, dst: str, size_bytes: float) -> float:
        latency, bottleneck = self._path_params(src, dst)
        return latency + size_bytes * 8 / bottleneck


# ---------------------------------------------------------------------------
# centrality


def degree_centrality(graph: NetworkGraph) -> dict[str, float]:
    n = len(graph)
    if n < 2:
        raise ValueError("degree centrality needs at least two nodes")
    return {v: graph.degree(v) / (n - 1) for v in graph.nodes}


def betweenness_exact(graph: NetworkGraph) -> dict[str, Fraction]:
    """Brandes' algorithm with exact rational dependency accumulation."""
    nodes = graph.nodes
    cb = {v: Fraction(0) for v in nodes}
    for s in nodes:
        stack = []
        preds: dict[str, list[str]] = {v: [] for v in nodes}
        sigma = dict.fromkeys(nodes, 0)
        sigma[s] = 1
        dist = {s: 0}
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in graph.neighbors(v):
                if w not in dist:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = {v: Fraction(0) for v in nodes}
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += Fraction(sigma[v], sigma[w]) * (1 + delta[w])
            if w != s:
                cb[w] += delta[w]
    # every unordered pair was counted from both ends
    return {v: c / 2 for v, c in cb.items()}


def betweenness_centrality(graph: NetworkGraph) -> dict[str, float]:
    return {v: float(c) for v, c in betweenness_exact(graph).items()}


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class BandwidthModel:
    """Log-normal link capacity pinned by its mean and one quantile."""

    mean_bps: float = QMPSU_MEAN_BPS
    quantile_bps: float = QMPSU_P60_BPS
    quantile: float = 0.60

    def params(self) -> tuple[float, float]:
        """(mu, sigma) of the underlying normal."""
        z = NormalDist().inv_cdf(self.quantile)
        # mean = exp(mu + s^2/2), q = exp(mu + z s)  =>  s^2/2 - z s - ln(mean/q) = 0
        ratio = math.log(self.mean_bps / self.quantile_bps)
        disc = z * z + 2 * ratio
        if disc < 0:
            raise ValueError("mean/quantile combination has no log-normal fit")
        sigma = z + math.sqrt(disc)
        mu = math.log(self.quantile_bps) - z * sigma
        return mu, sigma

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        mu, sigma = self.params()
        return rng.lognormal(mu, sigma, size)

    def cdf(self, x: float) -> float:
        mu, sigma = self.params()
        return NormalDist(mu, sigma).cdf(math.log(x))


@dataclass(frozen=True)
class LatencyModel:
    low_s: float = 0.001
    high_s: float = 0.005

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.low_s, self.high_s, size)


@dataclass(frozen=True)
class TrafficModel:
    """Skewed busy-hour background load, rescaled so the busiest link
    carries ``peak_bps`` and capped at ``cap_fraction`` of capacity."""

    peak_bps: float = QMPSU_PEAK_TRAFFIC_BPS
    sigma: float = 1.2
    cap_fraction: float = 0.9

    def sample(self, rng: np.random.Generator, capacities: np.ndarray) -> np.ndarray:
        raw = rng.lognormal(0.0, self.sigma, len(capacities))
        if len(raw) == 0:
            return raw
        scaled = raw * (self.peak_bps / raw.max())
        return np.minimum(scaled, capacities * self.cap_fraction)


def node_ids(n: int) -> list[str]:
    width = max(2, len(str(n - 1)))
    return [f"n{i:0{width}d}" for i in range(n)]


def _pairs_connected(n: int, pairs) -> bool:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    components = n
    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            components -= 1
    return components == 1


def generate_topology(
    n_nodes: int,
    avg_degree: float = 5.0,
    bandwidth_model: BandwidthModel | None = None,
    latency_model: LatencyModel | None = None,
    seed: int = 0,
    traffic_model: TrafficModel | None = None,
    max_retries: int = 200,
) -> NetworkGraph:
    """Connected random geometric graph on the unit square.

    The radius is set per sample so the mean degree equals ``avg_degree``
    (up to rounding); disconnected samples are redrawn.
    """
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    if avg_degree < 2:
        raise ValueError("avg_degree must be >= 2")
    bandwidth_model = bandwidth_model or BandwidthModel()
    latency_model = latency_model or LatencyModel()
    traffic_model = traffic_model or TrafficModel()
    ids = node_ids(n_nodes)
    geo = rng_for(seed, "topology.geometry")
    n_pairs = n_nodes * (n_nodes - 1) // 2
    n_links = min(n_pairs, max(n_nodes - 1, round(n_nodes * avg_degree / 2)))
    iu = np.triu_indices(n_nodes, k=1)
    for _ in range(max_retries):
        pos = geo.uniform(0.0, 1.0, size=(n_nodes, 2))
        d = np.hypot(*(pos[:, None, :] - pos[None, :, :]).transpose(2, 0, 1))[iu]
        order = np.argsort(d, kind="stable")[:n_links]
        pairs = sorted((int(iu[0][k]), int(iu[1][k])) for k in order)
        if _pairs_connected(n_nodes, pairs):
            break
    else:
        raise TopologyError(
            f"no connected sample after {max_retries} tries (n={n_nodes}, avg_degree={avg_degree})"
        )

    link_rng = rng_for(seed, "topology.links")
    caps = np.round(bandwidth_model.sample(link_rng, len(pairs)))
    caps = np.maximum(caps, 1000.0)
    lats = np.round(latency_model.sample(link_rng, len(pairs)), 6)
    bg = np.floor(traffic_model.sample(link_rng, caps))
    graph = NetworkGraph(ids)
    for (i, j), c, l, b in zip(pairs, caps, lats, bg):
        graph.add_link(Link(ids[i], ids[j], float(c), float(l), float(b)))
    return graph


def node_bandwidth(graph: NetworkGraph, node: str) -> float:
    """Residual capacity summed over a node's links."""
    return sum(l.effective_bps for l in graph.incident(node))


def select_hosts(graph: NetworkGraph, per_criterion: int = 2, total: int = 10) -> list[str]:
    """Pick deployment hosts covering high bandwidth, high degree, high
    betweenness and poorly connected nodes, round-robin over the criteria."""
    nodes = graph.nodes
    bw = {v: node_bandwidth(graph, v) for v in nodes}
    deg = {v: graph.degree(v) for v in nodes}
    btw = betweenness_exact(graph)
    rankings = [
        sorted(nodes, key=lambda v: (-bw[v], v)),
        sorted(nodes, key=lambda v: (-deg[v], v)),
        sorted(nodes, key=lambda v: (-btw[v], v)),
        sorted(nodes, key=lambda v: (bw[v], deg[v], v)),
    ]
    chosen: list[str] = []
    cursors = [0] * len(rankings)
    while len(chosen) < min(total, len(nodes)):
        for r, ranking in enumerate(rankings):
            taken = 0
            while taken < per_criterion and len(chosen) < total and cursors[r] < len(ranking):
                v = ranking[cursors[r]]
                cursors[r] += 1
                if v not in chosen:
                    chosen.append(v)
                    taken += 1
    return sorted(chosen)


# ---------------------------------------------------------------------------
# file format


def dumps(graph: NetworkGraph, header: str | None = None) -> str:
    lines = []
    if header:
        lines.extend(f"# {h}" if h else "#" for h in header.splitlines())
    for n in graph.nodes:
        lines.append(f"node {n} host" if graph.is_host(n) else f"node {n}")
    for l in graph.links:
        lines.append(f"link {l.a} {l.b} {l.capacity_bps!r} {l.latency_s!r} {l.background_bps!r}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> NetworkGraph:
    graph = NetworkGraph()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "node":
                if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] != "host"):
                    raise TopologyError("expected: node <id> [host]")
                if parts[1] in graph:
                    raise TopologyError(f"duplicate node {parts[1]}")
                graph.add_node(parts[1], host=len(parts) == 3)
            elif parts[0] == "link":
                if len(parts) != 6:
                    raise TopologyError("expected: link <a> <b> <capacity_bps> <latency_s> <background_bps>")
                try:
                    cap, lat, bg = (float(x) for x in parts[3:])
                except ValueError:
                    raise TopologyError("non-numeric link attribute") from None
                if not all(math.isfinite(x) for x in (cap, lat, bg)):
                    raise TopologyError("non-finite link attribute")
                graph.add_link(Link(parts[1], parts[2], cap, lat, bg))
            else:
                raise TopologyError(f"unknown directive {parts[0]!r}")
        except TopologyError as exc:
            raise TopologyError(str(exc), lineno) from None
    if len(graph) == 0:
        raise TopologyError("topology has no nodes")
    if not graph.is_connected():
        raise TopologyError("topology is not connected")
    return graph


def load_topology(path) -> NetworkGraph:
    return loads(Path(path).read_text())


def save_topology(graph: NetworkGraph, path, header: str | None = None) -> None:
    Path(path).write_text(dumps(graph, header))


def lab_topology(n_nodes: int = 8, capacity_bps: float = 100 * MBPS, latency_s: float = 0.0002) -> NetworkGraph:
    """Switched LAN: every pair directly connected, no background load."""
    ids = node_ids(n_nodes)
    graph = NetworkGraph(hosts=ids)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            graph.add_link(Link(a, b, capacity_bps, latency_s, 0.0))
    return graph


@dataclass
class TopologyStats:
    nodes: int
    links: int
    hosts: int
    mean_capacity_bps: float
    frac_le_10mbps: float
    max_background_bps: float
    mean_degree: float
    top_degree: list[tuple[str, float]] = field(default_factory=list)
    top_betweenness: list[tuple[str, float]] = field(default_factory=list)


def topology_stats(graph: NetworkGraph, top: int = 5) -> TopologyStats:
    caps = [l.capacity_bps for l in graph.links]
    deg = degree_centrality(graph)
    btw = betweenness_centrality(graph)
    return TopologyStats(
        nodes=len(graph),
        links=len(caps),
        hosts=len(graph.hosts),
        mean_capacity_bps=float(np.mean(caps)) if caps else 0.0,
        frac_le_10mbps=float(np.mean(np.array(caps) <= 10 * MBPS)) if caps else 0.0,
        max_background_bps=max((l.background_bps for l in graph.links), default=0.0),
        mean_degree=2 * len(caps) / len(graph),
        top_degree=sorted(deg.items(), key=lambda kv: (-kv[1], kv[0]))[:top],
        top_betweenness=sorted(btw.items(), key=lambda kv: (-kv[1], kv[0]))[:top],
    )
