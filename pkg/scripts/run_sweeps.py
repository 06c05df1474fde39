"""Disturbance sweep for the all-machine system and the four converter mixes.

Writes one metrics CSV per configuration and a table of metrics normalised by
the largest all-machine values. About 100 simulations per configuration;
LOWINERTIA_THREADS sets the number of worker processes.

    python scripts/run_sweeps.py --out out/sweeps
    python scripts/run_sweeps.py --points 10   # quick look
"""

import argparse
import os
import time

from lowinertia.cli import _write_rows, write_csv
from lowinertia.metrics import SweepSpec, normalize_to_baseline, run_sweep
from lowinertia.scenarios import sweep_preset

KINDS = ("allsm", "droop", "vsm", "matching", "dvoc")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default="out/sweeps")
    ap.add_argument("--points", type=int, default=100)
    ap.add_argument("--kinds", nargs="+", default=list(KINDS), choices=KINDS)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    spec = SweepSpec(dp=tuple(round(0.2 + 0.007 * k, 10) for k in range(args.points)))
    kinds = args.kinds if "allsm" in args.kinds else ["allsm"] + args.kinds
    results = {}
    for k in kinds:
        t0 = time.time()
        results[k] = run_sweep(spec, sweep_preset(k))
        write_csv(results[k], os.path.join(args.out, f"sweep_{k}.csv"))
        print(f"{k:9s} {len(results[k])} runs in {time.time() - t0:.0f} s")

    header = ["dp[pu]"]
    cols = []
    for k in kinds[1:]:
        header += [f"{k}_rocof[-]", f"{k}_nadir[-]"]
        cols.append(normalize_to_baseline(results[k], results["allsm"]))
    rows = [[dp] + [x for c in cols for x in c[i]] for i, dp in enumerate(spec.dp)]
    _write_rows(os.path.join(args.out, "normalized.csv"), header, rows)

    print("\nlargest value relative to the all-machine maximum")
    for k, c in zip(kinds[1:], cols):
        print(f"{k:9s} rocof {max(r for r, _ in c):.3f}  nadir {max(n for _, n in c):.3f}")


if __name__ == "__main__":
    main()
