import csv

import pytest
from hypothesis import given, settings, strategies as st

from meshchain import harness as H
from meshchain import metrics as M
from meshchain import scenario as sc
from meshchain.protocol import ConfigurationError


def small(name="table1-lab", **kw):
    s, _ = sc.load(name)
    return s.replace(**{"tx_count": 10, **kw})


def test_zero_transactions(tmp_path):
    r = H.run_scenario(small(tx_count=0), tmp_path)
    assert r.summary.proposed == 0 and r.summary.blocks_cut == 0 and r.summary.ttc is None
    assert (tmp_path / "tx.csv").read_text().splitlines() == [",".join(M.TX_HEADER)]


def test_run_writes_every_file(tmp_path):
    r = H.run_scenario(small(), tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(H.RUN_FILES)
    assert set(r.files) == set(H.RUN_FILES)
    again, _ = sc.parse((tmp_path / "scenario.ini").read_text())
    assert again == r.scenario


def test_report_roundtrip(tmp_path):
    r = H.run_scenario(small(), tmp_path)
    back = M.summarize(M.metrics_from_dir(tmp_path))
    assert back.committed == r.summary.committed
    assert back.ttc == pytest.approx(r.summary.ttc, abs=2e-6)
    assert back.peak_cpu == pytest.approx(r.summary.peak_cpu, abs=2e-6)


def test_same_scenario_same_bytes(tmp_path):
    s = small("table1-qmpsu", seed=3)
    H.run_scenario(s, tmp_path / "a")
    H.run_scenario(s, tmp_path / "b")
    for name in H.RUN_FILES:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_jittered_run():
    a = H.run_scenario(small("table1-qmpsu", seed=0)).files["tx.csv"]
    b = H.run_scenario(small("table1-qmpsu", seed=1)).files["tx.csv"]
    assert a != b


def test_every_transaction_accounted_for():
    r = H.run_scenario(small(tx_count=25, block_size=4))
    assert r.summary.proposed == 25
    assert r.summary.committed + r.summary.rejected + r.summary.queries == 25
    assert r.summary.blocks_cut == 7


# A partial last block waits for the batch timeout, so the ordering only
# holds when every block is cut by size.
DIVISORS = [1, 2, 3, 4, 5, 6, 10, 12, 15, 20, 30, 60]


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 50), sizes=st.lists(st.sampled_from(DIVISORS), min_size=2, max_size=4, unique=True))
def test_ttc_grows_with_block_size(seed, sizes):
    s = small(tx_count=60, seed=seed)
    ttcs = [H.run_scenario(s.replace(block_size=b)).summary.ttc for b in sorted(sizes)]
    assert all(b >= a - 1e-9 for a, b in zip(ttcs, ttcs[1:])), ttcs


def test_sweep_rows_and_aggregates(tmp_path):
    s = small()
    spec = sc.SweepSpec(s, "block_size", [2, 5], [0, 1])
    res = H.run_sweep(spec, tmp_path)
    assert len(res.points) == 4 and len(res.aggregates) == 2
    for agg in res.aggregates:
        group = [p for p in res.points if p["value"] == agg["value"]]
        assert agg["runs"] == 2
        assert agg["ttc"] == pytest.approx(sum(p["ttc"] for p in group) / 2)
    with open(tmp_path / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["row"] for r in rows] == ["point"] * 4 + ["aggregate"] * 2
    assert list(rows[0]) == H.SWEEP_COLUMNS
    assert (tmp_path / "sweep.svg").read_text().startswith("<svg")
    assert (tmp_path / "points" / "block_size-5" / "seed-1" / "tx.csv").is_file()
    assert res.aggregate(5)["value"] == "5"


def test_single_value_axis():
    res = H.run_sweep(sc.SweepSpec(small(), "strategy", ["basp"], [0]))
    assert len(res.points) == 1 and len(res.aggregates) == 1
    assert res.aggregates[0]["ttc"] == res.points[0]["ttc"]


def test_parallel_sweep_matches_serial():
    spec = sc.SweepSpec(small(), "block_size", [1, 3], [0, 1])
    assert H.run_sweep(spec, jobs=2).csv_text == H.run_sweep(spec, jobs=1).csv_text


def test_failing_point_is_named():
    spec = sc.SweepSpec(small(tx_count=2), "n_endorsers", [1, 7], [0])
    with pytest.raises(ConfigurationError, match="n_endorsers=7 seed=0"):
        H.run_sweep(spec)


def test_invalid_sweep_rejected_before_running():
    with pytest.raises(sc.ScenarioError):
        H.run_sweep(sc.SweepSpec(small(), "block_size", [0], [0]))


def test_unknown_topology():
    with pytest.raises(sc.ScenarioError, match="topology"):
        H.run_scenario(small(topology="no-such-mesh"))


def test_generated_topology_run():
    r = H.run_scenario(small(topology="generate", n_nodes=30, topology_seed=2, tx_count=5))
    assert r.summary.committed == 5


@pytest.mark.parametrize("name", sc.bundled_names())
def test_presets_run_end_to_end(name):
    s, sweep = sc.load(name)
    point = sweep.point(sweep.values[-1], sweep.seeds[0]) if sweep else s
    r = H.run_scenario(point)
    assert r.summary.committed > 0
    assert r.summary.proposed == point.tx_count or point.until is not None
