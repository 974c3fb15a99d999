"""Search generator seeds, client host and message-size scale for the
bundled QMPSU-like topology.

Each candidate runs the placement comparison (BASP against 30 random
placements, one and four endorsers) on a short serial workload and is
scored against the latency and gain targets.
Usage: python3 tools/search_qmpsu.py N_SEEDS SCALE [SCALE ...]
"""

import sys
from statistics import fmean

from meshchain.harness import run_scenario
from meshchain.scenario import Scenario
from meshchain.topology import generate_topology, save_topology, select_hosts

CPU = dict(cost_endorse=0.63, cost_validate_per_tx=0.2145, cost_validate_per_block=0.0,
           cost_order_per_tx=0.02, cost_client_per_response=0.01)
SIZES = dict(size_proposal=3 * 1024, size_response=4 * 1024, size_submission=7 * 1024,
             size_block_header=1024, size_block_per_tx=7 * 1024, size_notification=512)
TARGET = {"single": 1.2, "gain1": 0.308, "gain4": 0.24}
SEEDS = range(30)


def scaled_sizes(f):
    return {k: int(v * f) for k, v in SIZES.items()}


def evaluate(path, client, scale, tx_count=5):
    base = Scenario(topology=path, client=client, mode="serial", tx_count=tx_count, block_size=1,
                    batch_timeout=120.0, **CPU, **scaled_sizes(scale))
    out = {}
    single = run_scenario(base.replace(tx_count=1)).summary.mean_latency
    for ne in (1, 4):
        b = run_scenario(base.replace(n_endorsers=ne)).summary.mean_latency
        rs = [run_scenario(base.replace(n_endorsers=ne, strategy="random", seed=s)).summary.mean_latency
              for s in SEEDS]
        out[ne] = (b, fmean(rs), sum(b <= r for r in rs) / len(rs))
    return single, out


def main():
    n = int(sys.argv[1])
    scales = [float(x) for x in sys.argv[2:]] or [1.0]
    rows = []
    for seed in range(n):
        g = generate_topology(85, 5.0, seed=seed)
        g = g.with_hosts(select_hosts(g))
        path = f"/tmp/cal/seed{seed}.topo"
        save_topology(g, path)
        for client in g.hosts:
            for f in scales:
                single, res = evaluate(path, client, f)
                g1 = 1 - res[1][0] / res[1][1]
                g4 = 1 - res[4][0] / res[4][1]
                ok = min(res[1][2], res[4][2])
                err = (abs(single - TARGET["single"]) / 0.4 + abs(g1 - TARGET["gain1"]) / 0.1
                       + abs(g4 - TARGET["gain4"]) / 0.1)
                rows.append((round(err, 3), seed, client, f, round(single, 3), round(g1, 3), round(g4, 3), ok))
                print(rows[-1], flush=True)
    rows = sorted(r for r in rows if r[-1] >= 0.9)
    print("best:")
    for r in rows[:15]:
        print(r)


if __name__ == "__main__":
    main()
