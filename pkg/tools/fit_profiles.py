"""Grid fit of the CPU cost profiles against the transaction-delivery targets.

Prints, for each grid point, the TTC at every block size and the worst
relative error; the lab grid also reports the utilization peaks of the
fig6-utilization preset. The committed profiles are the chosen rows.
Usage: python3 tools/fit_profiles.py lab|qmpsu
"""

import sys

from meshchain import scenario as sc
from meshchain.harness import run_scenario

TARGETS = {"lab": [33.4, 35.0, 39.2, 45.3], "qmpsu": [64.2, 69.7, 75.3, 84.8]}
GRIDS = {
    "lab": dict(cost_endorse=[0.3195, 0.32], cost_validate_per_tx=[0.1313],
                cost_validate_per_block=[0.0, 0.13], cost_order_per_tx=[0.05, 0.227]),
    "qmpsu": dict(cost_endorse=[0.55, 0.58, 0.6, 0.61], cost_validate_per_tx=[0.04, 0.08, 0.1]),
}


def grid(space):
    keys = list(space)
    def rec(i, acc):
        if i == len(keys):
            yield dict(acc)
            return
        for v in space[keys[i]]:
            acc[keys[i]] = v
            yield from rec(i + 1, acc)
    yield from rec(0, {})


def main():
    profile = sys.argv[1]
    base, sweep = sc.load(f"table1-{profile}", {"seeds": "0"})
    for point in grid(GRIDS[profile]):
        ttc = [run_scenario(sweep.point(b, 0).replace(**point)).summary.ttc for b in sweep.values]
        err = max(abs(t / x - 1) for t, x in zip(ttc, TARGETS[profile]))
        line = f"{point} ttc={[round(t, 2) for t in ttc]} worst={err:.3f}"
        if profile == "lab":
            f6, _ = sc.load("fig6-utilization")
            peaks = run_scenario(f6.replace(**point)).summary.peak_cpu
            line += " peaks=" + str({r: round(peaks[r], 3) for r in ("endorser", "committer", "orderer")})
        print(line)


if __name__ == "__main__":
    main()
