"""Fixed-step RK4 integration with timed events.

The generic routines here work on any ``rhs(t, x) -> dx`` callable and are
used for the small test beds and the reduced models. The full network
simulation uses the compiled loop in :mod:`lowinertia.system`, which follows
the same stepping and event rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

SANITY_BOUND = 1e6


class IntegrationError(RuntimeError):
    """Non-finite derivative or state."""

    def __init__(self, message: str, time: float = math.nan, index: int = -1):
        super().__init__(message)
        self.time = time
        self.index = index


class DivergenceError(IntegrationError):
    """A state left the sanity box ``|x| <= 1e6``."""


# --- events -----------------------------------------------------------------


@dataclass(frozen=True)
class LoadStep:
    bus: int
    dp: float


@dataclass(frozen=True)
class DeviceTrip:
    device: int


@dataclass(frozen=True)
class SetpointChange:
    device: int
    p_set: float


EventKind = LoadStep | DeviceTrip | SetpointChange


@dataclass(frozen=True)
class Event:
    time: float
    kind: EventKind

    def __post_init__(self):
        if not self.time >= 0.0:
            raise ValueError(f"event time must be >= 0, got {self.time}")


def sort_events(events: Iterable[Event]) -> list[Event]:
    # sorted() is stable, so ties keep declaration order
    return sorted(events, key=lambda e: e.time)


def event_steps(events: Sequence[Event], dt: float) -> list[int]:
    """Grid index of every event; event times must lie on the step grid."""
    steps = []
    for ev in events:
        k = int(round(ev.time / dt))
        if abs(k * dt - ev.time) > 1e-9 * max(dt, ev.time):
            raise ValueError(f"event at t={ev.time} is not on the dt={dt} grid")
        steps.append(k)
    return steps


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-5
    t_end: float = 1.0
    sample_stride: int = 10

    def __post_init__(self):
        if not (0.0 < self.dt <= 1e-3):
            raise ValueError(f"dt must satisfy 0 < dt <= 1e-3 s, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.sample_stride < 1 or int(self.sample_stride) != self.sample_stride:
            raise ValueError("sample_stride must be a positive integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


# --- state registry ---------------------------------------------------------


class StateRegistry:
    """Maps ``(owner, name)`` to positions in the flat state vector."""

    def __init__(self):
        self._index: dict[tuple[str, str], int] = {}
        self._names: list[tuple[str, str]] = []

    def add(self, owner: str, names: Sequence[str]) -> int:
        """Register a block of states and return its offset."""
        offset = len(self._names)
        for name in names:
            key = (owner, name)
            if key in self._index:
                raise KeyError(f"state {key} registered twice")
            self._index[key] = len(self._names)
            self._names.append(key)
        return offset

    def __len__(self) -> int:
        return len(self._names)

    def __getitem__(self, key: tuple[str, str]) -> int:
        return self._index[key]

    def __contains__(self, key) -> bool:
        return key in self._index

    def name(self, index: int) -> tuple[str, str]:
        return self._names[index]

    def names(self) -> list[tuple[str, str]]:
        return list(self._names)

    def owner_slice(self, owner: str) -> slice:
        idx = [i for i, (o, _) in enumerate(self._names) if o == owner]
        if not idx:
            raise KeyError(owner)
        return slice(idx[0], idx[-1] + 1)


# --- traces -----------------------------------------------------------------


@dataclass
class SimulationTrace:
    """Uniformly sampled channels on a common time grid."""

    t: np.ndarray
    channels: dict[str, np.ndarray] = field(default_factory=dict)
    units: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        for name, values in self.channels.items():
            if len(values) != len(self.t):
                raise ValueError(f"channel {name!r} has {len(values)} samples, expected {len(self.t)}")
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("trace time must be strictly increasing")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    def __contains__(self, name: str) -> bool:
        return name in self.channels

    def __len__(self) -> int:
        return len(self.t)

    def window(self, t_start: float, t_stop: float = math.inf) -> "SimulationTrace":
        mask = (self.t >= t_start - 1e-12) & (self.t <= t_stop + 1e-12)
        return SimulationTrace(self.t[mask], {k: v[mask] for k, v in self.channels.items()}, dict(self.units))


# --- integration ------------------------------------------------------------


def _check_finite(dx: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(dx)):
        k = int(np.flatnonzero(~np.isfinite(np.atleast_1d(dx)))[0])
        raise IntegrationError(f"non-finite derivative at t={t:.6g}, state {k}", t, k)


def rk4_step(f: Callable, x, t: float, dt: float, check: bool = True):
    """One classical Runge-Kutta step of ``dx/dt = f(t, x)``."""
    k1 = f(t, x)
    if check:
        _check_finite(k1, t)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    if check:
        for k in (k2, k3, k4):
            _check_finite(k, t)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    rhs: Callable,
    x0,
    events: Sequence[Event] = (),
    cfg: SolverConfig = SolverConfig(),
    on_event: Callable[[Event], None] | None = None,
    state_names: Sequence[str] | None = None,
) -> SimulationTrace:
    """Integrate ``rhs`` from ``x0`` over ``[0, cfg.t_end]``.

    Events are applied at their grid points, before the step that starts
    there, by calling ``on_event``. The returned trace has one channel per
    state (``x0``, ``x1``, ... unless ``state_names`` is given).
    """
    x = np.array(x0, dtype=float, copy=True)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if not np.all(np.isfinite(x)):
        raise IntegrationError("initial state is not finite", 0.0)
    events = sort_events(events)
    for ev in events:
        if ev.time > cfg.t_end + 1e-12:
            raise ValueError(f"event at t={ev.time} is after t_end={cfg.t_end}")
    steps = event_steps(events, cfg.dt)
    if scalar:
        f = lambda t, y: np.atleast_1d(rhs(t, y[0]))
    else:
        f = rhs

    n = cfg.n_steps
    stride = cfg.sample_stride
    n_samples = n // stride + 1
    out = np.empty((n_samples, x.size))
    times = np.empty(n_samples)
    out[0] = x
    times[0] = 0.0
    ev_ptr = 0
    s = 1
    for k in range(n):
        while ev_ptr < len(events) and steps[ev_ptr] == k:
            if on_event is not None:
                on_event(events[ev_ptr])
            ev_ptr += 1
        t = k * cfg.dt
        x = rk4_step(f, x, t, cfg.dt)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"non-finite state at t={t + cfg.dt:.6g}", t + cfg.dt)
        big = np.abs(x) > SANITY_BOUND
        if big.any():
            i = int(np.flatnonzero(big)[0])
            raise DivergenceError(f"state {i} left the sanity box at t={t + cfg.dt:.6g}", t + cfg.dt, i)
        if (k + 1) % stride == 0:
            out[s] = x
            times[s] = (k + 1) * cfg.dt
            s += 1
    names = list(state_names) if state_names is not None else [f"x{i}" for i in range(x.size)]
    return SimulationTrace(times[:s], {nm: out[:s, i] for i, nm in enumerate(names)})


def steady_state_residual(rhs: Callable, x, drift: Callable | None = None, t: float = 0.0) -> float:
    """Infinity norm of ``rhs(t, x)``.

    For systems carried in a stationary frame the steady state is a
    synchronous rotation rather than an equilibrium; ``drift(x)`` returns that
    expected rotation and is subtracted before taking the norm.
    """
    dx = np.atleast_1d(np.asarray(rhs(t, x), dtype=float))
    if drift is not None:
        dx = dx - np.atleast_1d(drift(x))
    return float(np.max(np.abs(dx))) if dx.size else 0.0
