"""Equal steady-state load sharing with the equivalent gains."""

from lowinertia.reduced import compute_equivalent_gains
from lowinertia.scenarios import tuned_scenario


def main(d_p: float = 100.0):
    print(compute_equivalent_gains(d_p))
    for k in ("droop", "vsm", "matching", "dvoc"):
        s = tuned_scenario(k, d_p)
        trace, m = s.execute()
        shares = s.power_change(trace)
        total = sum(shares.values())
        spread = (max(shares.values()) - min(shares.values())) / total
        print(f"{k:9s} {m.stable.value:7s} " + "  ".join(f"node {n}: {v:.4f}" for n, v in shares.items())
              + f"  spread {100 * spread:.2f} % of {total:.4f} pu")


if __name__ == "__main__":
    main()
