"""Frequency metrics, stability classification and the disturbance sweep."""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .solver import SimulationTrace
from .system import STATUS_DC_COLLAPSE, STATUS_DIVERGENT, STATUS_STABLE

ROCOF_WINDOW = 0.25
MIN_TAIL = 15.0  # seconds of trace needed after the disturbance
SETTLE_WINDOW = 0.5
SETTLE_VDC = 0.95


class Stability(enum.Enum):
    STABLE = "Stable"
    DC_COLLAPSE = "DcCollapse"
    DIVERGENT = "Divergent"

    @property
    def exit_code(self) -> int:
        return {Stability.STABLE: STATUS_STABLE, Stability.DC_COLLAPSE: STATUS_DC_COLLAPSE,
                Stability.DIVERGENT: STATUS_DIVERGENT}[self]

    @classmethod
    def from_status(cls, status: int) -> "Stability":
        return {STATUS_STABLE: cls.STABLE, STATUS_DC_COLLAPSE: cls.DC_COLLAPSE,
                STATUS_DIVERGENT: cls.DIVERGENT}[status]


def _as_arrays(t, omega):
    t = np.asarray(t, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if t.size == 0 or omega.size == 0:
        raise ValueError("empty trace")
    if t.shape != omega.shape:
        raise ValueError("time and frequency arrays differ in length")
    return t, omega


def nadir(t, omega, omega_star: float = 1.0, t0: float = 0.0) -> float:
    """Largest frequency deviation ``|omega* - omega|`` from ``t0`` on."""
    t, omega = _as_arrays(t, omega)
    sel = t >= t0 - 1e-12
    if not sel.any():
        raise ValueError(f"trace ends before t0={t0}")
    return float(np.max(np.abs(omega_star - omega[sel])))


def rocof(t, omega, t0: float = 0.0, window: float = ROCOF_WINDOW) -> float:
    """Secant slope of the frequency over ``[t0, t0 + window]``."""
    t, omega = _as_arrays(t, omega)
    if not window > 0:
        raise ValueError("window must be positive")
    if t0 < t[0] - 1e-12 or t0 + window > t[-1] + 1e-9:
        raise ValueError(f"window [{t0}, {t0 + window}] exceeds the trace [{t[0]}, {t[-1]}]")
    w0, w1 = np.interp([t0, t0 + window], t, omega)
    return float(abs(w1 - w0) / window)


def saturation_duration(t, i_tau, i_max: float, t0: float = 0.0) -> float:
    """Total time after ``t0`` during which the dc source is saturated."""
    t = np.asarray(t, dtype=float)
    i_tau = np.asarray(i_tau, dtype=float)
    if t.size < 2:
        return 0.0
    dt = np.diff(t, append=t[-1] + (t[-1] - t[-2]))
    mask = (np.abs(i_tau) >= i_max) & (t >= t0)
    return float(dt[mask].sum())


def sustained_saturation(trace: SimulationTrace, gfc_nodes, i_max: float, window: float = SETTLE_WINDOW,
                         v_settle: float = SETTLE_VDC) -> list[int]:
    """GFC nodes whose dc source is pinned at its limit with a sagging dc
    voltage over the last ``window`` seconds of the trace.

    Such a unit has lost dc-voltage control: the voltage only stays above the
    hard collapse threshold because the slide is slow.
    """
    if len(trace) == 0:
        return []
    tail = trace.t >= trace.t[-1] - window
    stuck = []
    for n in gfc_nodes:
        i_tau = trace[f"dev{n}.i_tau"][tail]
        v_dc = trace[f"dev{n}.v_dc"][tail]
        if np.all(i_tau >= i_max) and float(np.mean(v_dc)) < v_settle:
            stuck.append(n)
    return stuck


def classify(status: int, trace: SimulationTrace, gfc_nodes=(), i_max: float = 1.2) -> Stability:
    verdict = Stability.from_status(status)
    if verdict is Stability.STABLE and sustained_saturation(trace, gfc_nodes, i_max):
        return Stability.DC_COLLAPSE
    return verdict


@dataclass(frozen=True)
class MetricsResult:
    dp: float
    nadir: float
    rocof: float
    stable: Stability
    saturation: float = 0.0  # longest dc-source saturation over the GFCs, s

    def __post_init__(self):
        if self.nadir < 0 or self.rocof < 0:
            raise ValueError("metrics must be non-negative")

    @property
    def normalized_nadir(self) -> float:
        return self.nadir / abs(self.dp) if self.dp else math.nan

    @property
    def normalized_rocof(self) -> float:
        return self.rocof / abs(self.dp) if self.dp else math.nan


def evaluate(trace: SimulationTrace, status: int, freq_channel: str, t0: float, dp: float,
             gfc_nodes=(), i_max: float = 1.2, window: float = ROCOF_WINDOW,
             require_tail: bool = True) -> MetricsResult:
    """Metrics of one run. Unstable runs report the metrics of the partial trace."""
    verdict = classify(status, trace, gfc_nodes, i_max)
    t, w = trace.t, trace[freq_channel]
    if verdict is Stability.STABLE and require_tail and t[-1] < t0 + MIN_TAIL - 1e-9:
        raise ValueError(f"trace ends at {t[-1]:.3g} s; need {MIN_TAIL} s after the disturbance")
    nad = nadir(t, w, 1.0, t0) if t[-1] >= t0 else 0.0
    try:
        roc = rocof(t, w, t0, window)
    except ValueError:
        roc = math.nan if verdict is Stability.STABLE else 0.0
    sat = max((saturation_duration(t, trace[f"dev{n}.i_tau"], i_max, t0) for n in gfc_nodes), default=0.0)
    return MetricsResult(dp, nad, roc, verdict, sat)


# -- sweep ----------------------------------------------------------------------------


def default_dp_values() -> list[float]:
    return [round(0.2 + 0.007 * k, 10) for k in range(100)]


@dataclass(frozen=True)
class SweepSpec:
    dp: tuple = field(default_factory=lambda: tuple(default_dp_values()))
    bus: int = 7
    p_load: float = 2.0

    def __post_init__(self):
        if len(self.dp) == 0:
            raise ValueError("sweep needs at least one disturbance")

    @classmethod
    def from_range(cls, start: float, stop: float, step: float, **kw) -> "SweepSpec":
        if not step > 0:
            raise ValueError("step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return cls(dp=tuple(round(start + k * step, 10) for k in range(n)), **kw)


def worker_count() -> int:
    env = os.environ.get("LOWINERTIA_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("LOWINERTIA_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def _sweep_point(args):
    template, dp = args
    _, metrics = template.with_step(dp).execute()
    return metrics


def run_sweep(spec: SweepSpec, template, workers: int | None = None) -> list[MetricsResult]:
    """Run ``template`` once per disturbance in ``spec``.

    ``template`` is a scenario exposing ``with_step(dp)``, ``replace_load``
    and ``execute()``; results come back in the order of ``spec.dp``
    whatever the number of workers.
    """
    base = template.replace_load(spec.p_load, spec.bus)
    jobs = [(base, dp) for dp in spec.dp]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        return [_sweep_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, jobs))


def normalize_to_baseline(results: list[MetricsResult], baseline: list[MetricsResult]) -> list[tuple[float, float]]:
    """Normalized (RoCoF, nadir) divided by the largest all-machine values."""
    r_max = max(r.normalized_rocof for r in baseline)
    n_max = max(r.normalized_nadir for r in baseline)
    return [(r.normalized_rocof / r_max, r.normalized_nadir / n_max) for r in results]

