"""Standalone dVOC oscillator: magnitude drift at the set-point and recovery
from a sagged or swollen start."""

import numpy as np

from lowinertia.gfc_controls import ControlGains, dvoc_oscillator


def main():
    g = ControlGains.for_strategy("dvoc")
    t, v = dvoc_oscillator(g.v_star, g, p_set=0.75, q_set=0.1)
    print(f"at the set-point: magnitude drift {np.max(np.abs(np.hypot(v[:, 0], v[:, 1]) - g.v_star)):.2e} pu over 1 s")
    for v0 in (0.9, 1.1):
        t, v = dvoc_oscillator(v0 * g.v_star, g, p_set=0.75, q_set=0.1)
        err = np.abs(np.hypot(v[:, 0], v[:, 1]) - g.v_star)
        backward = np.diff(err).max()  # > 0 would mean the error grew at some step
        print(f"start {v0:.1f} v*: within 1e-3 after {1000 * t[np.argmax(err < 1e-3)]:.1f} ms, "
              f"largest error increase per step {backward:.1e}")


if __name__ == "__main__":
    main()
