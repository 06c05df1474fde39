"""Trip of the only machine, and a large step in the converter-only system."""

import argparse
import os

from lowinertia.cli import write_csv
from lowinertia.scenarios import all_gfc_preset, loss_of_sm_preset

KINDS = ("droop", "vsm", "matching", "dvoc")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/loss_of_sm")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    for build in (loss_of_sm_preset, all_gfc_preset):
        for k in KINDS:
            s = build(k)
            trace, m = s.execute()
            write_csv(trace, os.path.join(args.out, f"{s.name}.csv"))
            print(f"{s.name:30s} {m.stable.value:10s} nadir {m.nadir:.5f} pu  "
                  f"rocof {m.rocof:.5f} pu/s  dc saturation {1000 * m.saturation:.0f} ms")


if __name__ == "__main__":
    main()
