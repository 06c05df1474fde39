"""Command line entry point.

    lowinertia run <scenario> [--dp X]
    lowinertia sweep <scenario> --dp-start 0.2 --dp-end 0.893 --dp-step 0.007
    lowinertia reduced-study --pmax inf --pmax 1.2
    lowinertia tuning --dp 100 [--verify droop]

``<scenario>`` is a YAML file or a preset name (``lowinertia presets`` lists
them). ``run`` exits with 0 for a stable run, 2 for a dc-voltage collapse and
3 for divergence.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import replace

from .metrics import MetricsResult, Stability, SweepSpec, normalize_to_baseline, run_sweep
from .reduced import InterpolationStudy, StudyPoint, compute_equivalent_gains, interpolation_study
from .scenarios import PRESETS, InitializationError, Scenario, ScenarioError, load_scenario, tuned_scenario
from .solver import SimulationTrace

log = logging.getLogger("lowinertia")


# -- CSV ------------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    return format(float(x), ".9g")


def _write_rows(path: str, header: list[str], rows) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_csv(obj, path: str) -> None:
    """Write a trace, a list of metrics or a reduced-study curve as CSV."""
    if isinstance(obj, SimulationTrace):
        names = list(obj.channels)
        header = ["t[s]"] + [f"{n}[{obj.units.get(n, 'pu')}]" for n in names]
        if not names:
            _write_rows(path, header, [])
            return
        cols = [obj.t] + [obj[n] for n in names]
        _write_rows(path, header, zip(*cols))
        return
    items = list(obj)
    if items and isinstance(items[0], StudyPoint):
        _write_rows(path, ["nu[-]", "rocof[%]", "nadir[%]"], [(p.nu, p.rocof_pct, p.nadir_pct) for p in items])
        return
    if all(isinstance(m, MetricsResult) for m in items):
        header = ["dp[pu]", "nadir[pu]", "rocof[pu/s]", "normalized_nadir[1/pu]", "normalized_rocof[1/(pu*s)]",
                  "saturation[s]", "stable"]
        rows = [(m.dp, m.nadir, m.rocof, m.normalized_nadir, m.normalized_rocof, m.saturation, m.stable.value)
                for m in items]
        _write_rows(path, header, rows)
        return
    raise TypeError(f"cannot write {type(obj).__name__} as CSV")


# -- subcommands --------------------------------------------------------------------------


def _apply_globals(s: Scenario, args) -> Scenario:
    solver = s.solver
    if args.dt is not None:
        solver = replace(solver, dt=args.dt)
    if args.t_end is not None:
        solver = replace(solver, t_end=args.t_end)
    return replace(s, solver=solver)


def _out(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def cmd_run(args) -> int:
    s = _apply_globals(load_scenario(args.scenario), args)
    if args.dp is not None:
        s = s.with_step(args.dp)
    trace, m = s.execute(require_tail=False)
    write_csv(trace, _out(args, f"{s.name}_trace.csv"))
    write_csv([m], _out(args, f"{s.name}_metrics.csv"))
    print(f"{s.name}: {m.stable.value} nadir={m.nadir:.6g} pu rocof={m.rocof:.6g} pu/s "
          f"dc saturation={m.saturation:.3g} s")
    return m.stable.exit_code


def cmd_sweep(args) -> int:
    s = _apply_globals(load_scenario(args.scenario), args)
    step = next((ev for ev in s.events if hasattr(ev.kind, "dp")), None)
    bus = args.bus if args.bus is not None else (step.kind.bus if step else 7)
    spec = SweepSpec.from_range(args.dp_start, args.dp_end, args.dp_step, bus=bus,
                                p_load=args.p_load if args.p_load is not None else s.p_load)
    results = run_sweep(spec, s)
    write_csv(results, _out(args, f"{s.name}_sweep.csv"))
    if args.baseline:
        base = run_sweep(spec, _apply_globals(load_scenario(args.baseline), args))
        norm = normalize_to_baseline(results, base)
        _write_rows(_out(args, f"{s.name}_sweep_vs_baseline.csv"), ["dp[pu]", "rocof_rel[-]", "nadir_rel[-]"],
                    [(m.dp, r, n) for m, (r, n) in zip(results, norm)])
    counts = {v: sum(m.stable is v for m in results) for v in Stability}
    print(f"{s.name}: {len(results)} runs, " + ", ".join(f"{k.value}={n}" for k, n in counts.items()))
    return 0


def cmd_reduced(args) -> int:
    study = InterpolationStudy(p_d=args.p_d)
    for pmax in args.pmax or [math.inf, 1.2]:
        pts = interpolation_study(pmax, study)
        tag = "inf" if math.isinf(pmax) else f"{pmax:g}"
        write_csv(pts, _out(args, f"reduced_pmax_{tag}.csv"))
        end = pts[-1]
        print(f"p_max={tag}: nu={end.nu:.4f} rocof={end.rocof_pct:.2f}% nadir={end.nadir_pct:.2f}%")
    return 0


def cmd_tuning(args) -> int:
    eq = compute_equivalent_gains(args.dp)
    print(f"d_omega={eq.d_omega:.6g} D_p={eq.D_p:.6g} k_dc={eq.k_dc:.6g} eta={eq.eta:.6g}")
    for kind in args.verify or []:
        s = _apply_globals(tuned_scenario(kind, args.dp), args)
        trace, m = s.execute(require_tail=False)
        shares = s.power_change(trace)
        total = sum(shares.values())
        spread = (max(shares.values()) - min(shares.values())) / total
        print(f"{kind}: {m.stable.value} " + " ".join(f"dp{n}={v:.5f}" for n, v in shares.items())
              + f" spread={100 * spread:.3f}% of total")
    return 0


def cmd_presets(args) -> int:
    for name in PRESETS:
        print(name)
    return 0


def _pmax(text: str) -> float:
    return math.inf if text.lower() in ("inf", "infinity", "none") else float(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dt", type=float, help="integration step, s")
    common.add_argument("--t-end", type=float, help="simulated horizon, s")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0, help="reserved; the simulator is deterministic")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lowinertia", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="simulate one scenario")
    r.add_argument("scenario")
    r.add_argument("--dp", type=float, help="override the size of the load step")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="repeat a scenario over a range of load steps")
    s.add_argument("scenario")
    s.add_argument("--dp-start", type=float, default=0.2)
    s.add_argument("--dp-end", type=float, default=0.893)
    s.add_argument("--dp-step", type=float, default=0.007)
    s.add_argument("--bus", type=int)
    s.add_argument("--p-load", type=float)
    s.add_argument("--baseline", help="scenario whose sweep maximum normalises this one")
    s.set_defaults(func=cmd_sweep)

    red = sub.add_parser("reduced-study", parents=[common], help="two-node machine/converter interpolation")
    red.add_argument("--pmax", type=_pmax, action="append", help="converter power limit (repeatable; 'inf')")
    red.add_argument("--p-d", type=float, default=InterpolationStudy.p_d, help="disturbance, pu")
    red.set_defaults(func=cmd_reduced)

    t = sub.add_parser("tuning", parents=[common], help="gains giving equal steady-state load sharing")
    t.add_argument("--dp", type=float, required=True, help="machine droop gain d_p, pu")
    t.add_argument("--verify", action="append", choices=["droop", "vsm", "matching", "dvoc"],
                   help="simulate a step with the tuned gains and report the sharing")
    t.set_defaults(func=cmd_tuning)

    ps = sub.add_parser("presets", parents=[common], help="list built-in scenarios")
    ps.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return 1
    except (InitializationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
