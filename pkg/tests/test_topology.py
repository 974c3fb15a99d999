import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _support import adj_graph, brute_betweenness, brute_degree, random_connected_adj
from meshchain import scenario as sc
from meshchain.topology import (
    BandwidthModel,
    Link,
    NetworkGraph,
    Router,
    TopologyError,
    betweenness_centrality,
    betweenness_exact,
    degree_centrality,
    dumps,
    generate_topology,
    lab_topology,
    load_topology,
    loads,
    node_bandwidth,
    route,
    select_hosts,
    topology_stats,
    transfer_time,
)


def graph_from_edges(edges, cap=10e6, lat=0.0, bg=0.0, nodes=None):
    nodes = nodes or sorted({n for e in edges for n in e})
    return NetworkGraph(nodes, [Link(a, b, cap, lat, bg) for a, b in edges])


# -- transfer time ----------------------------------------------------------


def test_zero_bytes_one_hop():
    g = graph_from_edges([("a", "b")], lat=0.002)
    assert transfer_time(g, ["a", "b"], 0) == pytest.approx(0.002)


def test_one_mib_at_mean_bandwidth():
    g = graph_from_edges([("a", "b")], cap=13.6e6)
    assert transfer_time(g, ["a", "b"], 1024 * 1024) == pytest.approx(0.6168, abs=5e-5)
    assert transfer_time(g, ["a", "b"], 1024 * 1024) == pytest.approx(8388608 / 13.6e6)


def test_two_hop_bottleneck():
    g = NetworkGraph(["a", "b", "c"], [
        Link("a", "b", 25e6, 0.001, 5e6),   # 20 Mbps effective
        Link("b", "c", 12e6, 0.001, 2e6),   # 10 Mbps effective
    ])
    assert transfer_time(g, ["a", "b", "c"], 10 * 1024) == pytest.approx(0.010192)
    assert Router(g).transfer_time("a", "c", 10 * 1024) == pytest.approx(0.010192)


def test_empty_path_is_free():
    g = graph_from_edges([("a", "b")])
    assert transfer_time(g, [], 1000) == 0.0
    assert Router(g).transfer_time("a", "a", 10**6) == 0.0


def test_adding_a_hop_never_decreases_time():
    rng = np.random.default_rng(0)
    for _ in range(50):
        caps = rng.uniform(1e5, 1e8, size=4)
        lats = rng.uniform(0, 0.01, size=4)
        nodes = list("abcde")
        g = NetworkGraph(nodes, [Link(nodes[i], nodes[i + 1], caps[i], lats[i], 0.0) for i in range(4)])
        size = float(rng.uniform(0, 1e6))
        times = [transfer_time(g, nodes[: k + 1], size) for k in range(1, 5)]
        assert times == sorted(times)
        # one serialization term over the whole path
        assert times[-1] == pytest.approx(sum(lats) + size * 8 / min(caps))


# -- routing ----------------------------------------------------------------


def test_route_same_node():
    assert route(graph_from_edges([("a", "b")]), "a", "a") == []


def test_route_triangle_direct():
    g = graph_from_edges([("A", "B"), ("B", "C"), ("A", "C")])
    assert route(g, "A", "C") == ["A", "C"]


def test_route_ring_tie_lexicographic():
    g = graph_from_edges([("A", "B"), ("B", "C"), ("C", "D"), ("D", "A")])
    assert route(g, "A", "C") == ["A", "B", "C"]
    assert route(g, "C", "A") == ["C", "B", "A"]


def test_route_matches_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(40):
        adj = random_connected_adj(rng, int(rng.integers(2, 8)))
        g = adj_graph(adj)
        for s, t in itertools.permutations(g.nodes, 2):
            best = min(_all_simple_paths(adj, s, t), key=lambda p: (len(p), p))
            assert route(g, s, t) == best


def _all_simple_paths(adj, s, t, path=None):
    path = path or [s]
    if path[-1] == t:
        yield list(path)
        return
    for w in adj[path[-1]]:
        if w not in path:
            yield from _all_simple_paths(adj, s, t, path + [w])


def test_route_unreachable():
    g = NetworkGraph(["a", "b"])
    with pytest.raises(TopologyError):
        route(g, "a", "b")


# -- centrality -------------------------------------------------------------


def test_degree_examples():
    path = graph_from_edges([("A", "B"), ("B", "C")])
    assert degree_centrality(path) == {"A": 0.5, "B": 1.0, "C": 0.5}
    k4 = graph_from_edges(list(itertools.combinations("ABCD", 2)))
    assert set(degree_centrality(k4).values()) == {1.0}
    star = graph_from_edges([("h", f"l{i}") for i in range(5)])
    dc = degree_centrality(star)
    assert dc["h"] == 1.0 and all(dc[f"l{i}"] == pytest.approx(0.2) for i in range(5))


def test_betweenness_examples():
    assert betweenness_exact(graph_from_edges([("A", "B"), ("B", "C")]))["B"] == 1
    k5 = graph_from_edges(list(itertools.combinations("ABCDE", 2)))
    assert set(betweenness_exact(k5).values()) == {0}
    star = graph_from_edges([("h", f"l{i}") for i in range(5)])
    assert betweenness_exact(star)["h"] == 10
    assert betweenness_centrality(star)["l0"] == 0.0


def test_betweenness_ring_halves():
    # C4: each opposite pair has two shortest paths, so every node gets 1/2
    g = graph_from_edges([("A", "B"), ("B", "C"), ("C", "D"), ("D", "A")])
    assert set(betweenness_exact(g).values()) == {Fraction(1, 2)}


def test_centrality_matches_brute_force():
    rng = np.random.default_rng(99)
    for _ in range(60):
        adj = random_connected_adj(rng, int(rng.integers(2, 10)))
        g = adj_graph(adj)
        assert betweenness_exact(g) == brute_betweenness(adj)
        assert {v: Fraction(c).limit_denominator(100) for v, c in degree_centrality(g).items()} == brute_degree(adj)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 7))
def test_betweenness_bounds(seed, n):
    g = adj_graph(random_connected_adj(np.random.default_rng(seed), n))
    for v, c in betweenness_exact(g).items():
        assert 0 <= c <= Fraction((n - 1) * (n - 2), 2)
    assert sum(betweenness_exact(g).values()) >= 0


# -- graph invariants and file format --------------------------------------


def test_graph_rejects_bad_links():
    with pytest.raises(TopologyError):
        NetworkGraph(["a"], [Link("a", "a", 1e6, 0, 0)])
    with pytest.raises(TopologyError):
        NetworkGraph(["a", "b"], [Link("a", "b", 1e6, 0, 0), Link("b", "a", 1e6, 0, 0)])
    with pytest.raises(TopologyError):
        NetworkGraph(["a", "b"], [Link("a", "b", 1e6, 0, 1e6)])
    with pytest.raises(TopologyError):
        NetworkGraph(["a", "b"], [Link("a", "b", 1e6, -1, 0)])
    with pytest.raises(TopologyError):
        NetworkGraph(["a"], [Link("a", "zz", 1e6, 0, 0)])


def test_file_round_trip():
    g = generate_topology(12, 3.0, seed=4)
    g = g.with_hosts(select_hosts(g, total=3))
    again = loads(dumps(g, "header\nsecond line"))
    assert again == g and again.hosts == g.hosts
    assert [l.capacity_bps for l in again.links] == [l.capacity_bps for l in g.links]


@pytest.mark.parametrize("text,line", [
    ("node a\nnode b\nlink a a 1e6 0 0\n", 3),
    ("node a\nnode b\nlink a b 1e6 0 0\nlink b a 1e6 0 0\n", 4),
    ("node a\nnode b\nlink a b 1e6 0\n", 3),
    ("node a\nnode b\nlink a b fast 0 0\n", 3),
    ("node a\nnode a\n", 2),
    ("node a\nbridge a b\n", 2),
    ("node a extra\n", 1),
    ("node a\nnode b\nlink a b 1e6 0 2e6\n", 3),
    ("node a\nnode b\nlink a b inf 0 0\n", 3),
])
def test_malformed_lines_report_line_number(text, line):
    with pytest.raises(TopologyError) as info:
        loads(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_disconnected_and_empty_files():
    with pytest.raises(TopologyError, match="not connected"):
        loads("node a\nnode b\n")
    with pytest.raises(TopologyError):
        loads("# nothing\n")


def test_comments_and_blank_lines_ignored():
    g = loads("# hi\n\nnode a host # the client\nnode b\nlink a b 1e6 0.001 0\n")
    assert g.hosts == ["a"] and len(g.links) == 1


def test_bundled_topology():
    g = load_topology(sc.DATA / "topologies" / "qmpsu-like.topo")
    assert len(g) == 85 and len(g.hosts) == 10 and g.is_connected()


# -- generation -------------------------------------------------------------


def test_bandwidth_model_parameters():
    m = BandwidthModel()
    mu, sigma = m.params()
    assert np.exp(mu + sigma**2 / 2) == pytest.approx(13.6e6, rel=1e-9)
    assert m.cdf(10e6) == pytest.approx(0.6, abs=1e-9)
    assert mu == pytest.approx(15.845, abs=1e-3) and sigma == pytest.approx(1.0775, abs=1e-3)


def test_bandwidth_model_rejects_impossible_pair():
    with pytest.raises(ValueError):
        BandwidthModel(mean_bps=5e6, quantile_bps=10e6, quantile=0.4).params()


def test_two_nodes_single_link():
    g = generate_topology(2, 2.0, seed=1)
    assert len(g.links) == 1 and g.links[0].capacity_bps >= 1000


def test_generation_deterministic_and_connected():
    a, b = generate_topology(40, 4.0, seed=8), generate_topology(40, 4.0, seed=8)
    assert a == b and a.is_connected()
    assert a != generate_topology(40, 4.0, seed=9)


def test_generation_degree_and_background():
    g = generate_topology(85, 5.0, seed=3)
    assert 2 * len(g.links) / len(g) == pytest.approx(5.0, abs=0.02)
    for l in g.links:
        assert 0 <= l.background_bps <= 0.9 * l.capacity_bps
        assert 0.001 <= l.latency_s <= 0.005
    assert max(l.background_bps for l in g.links) <= 1_736_000


def test_generation_failure_is_reported():
    with pytest.raises(TopologyError, match="no connected sample"):
        generate_topology(85, 2.0, seed=0, max_retries=3)


def test_generation_argument_checks():
    with pytest.raises(ValueError):
        generate_topology(1)
    with pytest.raises(ValueError):
        generate_topology(10, 1.5)


def test_select_hosts_covers_criteria():
    g = generate_topology(85, 5.0, seed=0)
    hosts = select_hosts(g)
    assert len(hosts) == 10 == len(set(hosts))
    best_bw = max(g.nodes, key=lambda v: (node_bandwidth(g, v), v))
    worst = min(g.nodes, key=lambda v: (node_bandwidth(g, v), g.degree(v), v))
    assert best_bw in hosts and worst in hosts


def test_lab_topology_and_stats():
    g = lab_topology(4)
    assert len(g.links) == 6 and g.hosts == g.nodes
    st_ = topology_stats(g)
    assert st_.mean_degree == 3 and st_.mean_capacity_bps == 100e6 and st_.frac_le_10mbps == 0.0
