"""Assigning protocol roles to mesh nodes.

``basp`` ranks candidate hosts by the mean of their max-normalized residual
bandwidth and degree centrality and hands out roles in rank order: the
ordering service takes the best node, endorsers the next ones, dedicated
committers after that. ``betweenness`` ranks by betweenness centrality
instead. ``random`` draws the same roles uniformly without replacement.
The client's node is fixed by the caller and never scored.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .kernel import rng_for
from .protocol import ConfigurationError, RoleAssignment
from .topology import NetworkGraph, betweenness_exact, degree_centrality, node_bandwidth

STRATEGIES = ("random", "basp", "betweenness")


@dataclass(frozen=True)
class Placement:
    roles: RoleAssignment
    strategy: str


@dataclass(frozen=True)
class NodeScore:
    node: str
    bw_norm: float
    deg_norm: float
    score: float


def _pool(graph: NetworkGraph, candidates: Sequence[str] | None, client: str | None,
          n_endorsers: int, n_committers: int) -> list[str]:
    if candidates is None:
        candidates = graph.hosts or graph.nodes
    pool = sorted(dict.fromkeys(c for c in candidates if c != client))
    for c in pool:
        if c not in graph:
            raise ConfigurationError(f"candidate {c} not in topology")
    if n_endorsers < 1:
        raise ConfigurationError("need at least one endorser")
    needed = n_endorsers + n_committers + 1
    if len(pool) < needed:
        raise ConfigurationError(
            f"{len(pool)} candidate nodes for {needed} roles "
            f"(orderer + {n_endorsers} endorsers + {n_committers} committers)"
        )
    return pool


def _assign(ranked: Sequence[str], client: str, n_endorsers: int, n_committers: int) -> RoleAssignment:
    orderer = ranked[0]
    endorsers = tuple(ranked[1:1 + n_endorsers])
    dedicated = tuple(ranked[1 + n_endorsers:1 + n_endorsers + n_committers])
    return RoleAssignment(client, endorsers, dedicated + endorsers, orderer)


def _default_client(graph: NetworkGraph, candidates: Sequence[str] | None) -> str:
    pool = sorted(candidates) if candidates is not None else (graph.hosts or graph.nodes)
    return pool[0]


def basp_scores(graph: NetworkGraph, candidates: Sequence[str], weight: float = 0.5) -> list[NodeScore]:
    bw = {c: node_bandwidth(graph, c) for c in candidates}
    deg = degree_centrality(graph)
    max_bw = max(bw.values()) or 1.0
    max_deg = max(deg[c] for c in candidates) or 1.0
    out = []
    for c in candidates:
        b, d = bw[c] / max_bw, deg[c] / max_deg
        out.append(NodeScore(c, b, d, weight * b + (1 - weight) * d))
    return out


def place_basp(graph: NetworkGraph, n_endorsers: int, candidates: Sequence[str] | None = None,
               client: str | None = None, n_committers: int = 1, weight: float = 0.5) -> Placement:
    client = client or _default_client(graph, candidates)
    pool = _pool(graph, candidates, client, n_endorsers, n_committers)
    scores = basp_scores(graph, pool, weight)
    ranked = [s.node for s in sorted(scores, key=lambda s: (-s.score, s.node))]
    return Placement(_assign(ranked, client, n_endorsers, n_committers), "basp")


def place_betweenness(graph: NetworkGraph, n_endorsers: int, candidates: Sequence[str] | None = None,
                      client: str | None = None, n_committers: int = 1) -> Placement:
    client = client or _default_client(graph, candidates)
    pool = _pool(graph, candidates, client, n_endorsers, n_committers)
    btw = betweenness_exact(graph)
    ranked = sorted(pool, key=lambda c: (-btw[c], c))
    return Placement(_assign(ranked, client, n_endorsers, n_committers), "betweenness")


def place_random(graph: NetworkGraph, n_endorsers: int, candidates: Sequence[str] | None = None,
                 seed: int = 0, client: str | None = None, n_committers: int = 1) -> Placement:
    client = client or _default_client(graph, candidates)
    pool = _pool(graph, candidates, client, n_endorsers, n_committers)
    rng = rng_for(seed, "placement.random")
    picks = rng.permutation(len(pool))[: n_endorsers + n_committers + 1]
    ranked = [pool[int(i)] for i in picks]
    return Placement(_assign(ranked, client, n_endorsers, n_committers), "random")


def place(strategy: str, graph: NetworkGraph, n_endorsers: int, candidates: Sequence[str] | None = None,
          seed: int = 0, client: str | None = None, n_committers: int = 1) -> Placement:
    if strategy == "basp":
        return place_basp(graph, n_endorsers, candidates, client, n_committers)
    if strategy == "betweenness":
        return place_betweenness(graph, n_endorsers, candidates, client, n_committers)
    if strategy == "random":
        return place_random(graph, n_endorsers, candidates, seed, client, n_committers)
    raise ConfigurationError(f"unknown placement strategy {strategy!r}; expected one of {STRATEGIES}")
