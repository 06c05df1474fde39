"""Large load step (0.9 pu at bus 7) with the different current limiters.

Prints the stability verdict of every strategy and limiter combination, and
of the governor time-constant variant, and saves each trace.
"""

import argparse
import os


from lowinertia.cli import write_csv
from lowinertia.scenarios import bigstep_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default="out/bigstep")
    ap.add_argument("--no-traces", action="store_true")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    runs = [bigstep_preset("matching")]
    for k in ("droop", "vsm", "dvoc"):
        runs += [bigstep_preset(k), bigstep_preset(k, ac=True), bigstep_preset(k, ac=True, sp=True),
                 bigstep_preset(k, ac=True, tau_g=1.0)]

    print(f"{'scenario':34s} {'verdict':10s} {'nadir':>8s} {'sat [s]':>8s} {'final i_tau':>11s}")
    for s in runs:
        trace, m = s.execute(require_tail=False)
        i_tau = max(float(trace[f"dev{n}.i_tau"][-1]) for n in s.gfc_nodes())
        print(f"{s.name:34s} {m.stable.value:10s} {m.nadir:8.5f} {m.saturation:8.3f} {i_tau:11.3f}")
        if not args.no_traces:
            write_csv(trace, os.path.join(args.out, f"{s.name}.csv"))


if __name__ == "__main__":
    main()
