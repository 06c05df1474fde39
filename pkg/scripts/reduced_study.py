"""Two-node study: RoCoF and nadir as machines are replaced by converters.

    python scripts/reduced_study.py              # p_max = inf and 1.2 pu
    python scripts/reduced_study.py --p-d 0.9
"""

import argparse
import math
import os

from lowinertia.cli import write_csv
from lowinertia.reduced import InterpolationStudy, interpolation_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default="out/reduced")
    ap.add_argument("--p-d", type=float, default=InterpolationStudy.p_d)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    study = InterpolationStudy(p_d=args.p_d)
    for p_max in (math.inf, 1.2):
        pts = interpolation_study(p_max, study)
        tag = "inf" if math.isinf(p_max) else f"{p_max:g}"
        write_csv(pts, os.path.join(args.out, f"reduced_pmax_{tag}.csv"))
        print(f"p_max = {tag}")
        for p in pts[::3] + [pts[-1]]:
            print(f"  nu={p.nu:.3f}  rocof {p.rocof_pct:6.2f} %  nadir {p.nadir_pct:6.2f} %")


if __name__ == "__main__":
    main()
