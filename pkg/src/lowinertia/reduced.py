"""Reduced-order frequency models.

Once the electrical network and the inner control loops are collapsed to
algebraic relations, every unit is either *droop-like* (its angle follows
the power directly) or *swing-like* (an inertia, a damping term and a lagged,
possibly saturated, prime mover). Two such units facing each other across a
stiff line give a two-state model that reproduces the qualitative effect of
replacing machines by converters: the converter damping term shortens the
frequency excursion, and saturating it claws back most of the benefit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .converter import ConverterParams
from .gfc_controls import ControlGains

# Machine data used by the interpolation study
H_SM = 3.7
D_P_SM = 100.0
TAU_SM = 5.0
# Disturbance reproducing the saturated end point of the study (see the ledger)
P_D_STUDY = 1.42
ROCOF_WINDOW = 0.25


class ReducedKind(enum.Enum):
    DROOP_LIKE = "DroopLike"
    SWING_LIKE = "SwingLike"


@dataclass(frozen=True)
class ReducedDevice:
    kind: ReducedKind
    H: float = 0.0
    D: float = 0.0
    tau: float = 0.0
    d_p: float = 0.0
    p_max: float = math.inf
    d_omega: float = 0.0

    def __post_init__(self):
        if not isinstance(self.kind, ReducedKind):
            raise ValueError(f"unknown reduced device kind {self.kind!r}")
        if self.kind is ReducedKind.SWING_LIKE:
            if not self.H > 0:
                raise ValueError("swing-like device needs H > 0")
            if self.tau < 0 or self.D < 0 or self.d_p < 0:
                raise ValueError("tau, D and d_p must be non-negative")
            if not self.p_max > 0:
                raise ValueError("p_max must be positive")
        elif self.d_omega < 0:
            raise ValueError("d_omega must be non-negative")

    @property
    def n_states(self) -> int:
        if self.kind is ReducedKind.DROOP_LIKE:
            return 1
        return 2 if self.tau == 0 else 3


def _sat(x: float, limit: float) -> float:
    return max(-limit, min(limit, x))


def reduced_device_derivatives(device: ReducedDevice, state, p: float) -> np.ndarray:
    """Time derivative of ``state`` for electrical output ``p``.

    Droop-like state is ``(theta,)``. Swing-like state is ``(theta, omega)``
    with an extra ``p_tau`` when ``tau > 0``; for ``tau = 0`` the prime mover
    is algebraic, ``p_tau = -d_p * omega``.
    """
    x = np.asarray(state, dtype=float)
    if x.shape != (device.n_states,):
        raise ValueError(f"{device.kind.value} device expects {device.n_states} states, got {x.shape}")
    if device.kind is ReducedKind.DROOP_LIKE:
        return np.array([-device.d_omega * p])
    omega = x[1]
    if device.tau == 0:
        p_tau = -device.d_p * omega
        return np.array([omega, (-device.D * omega + _sat(p_tau, device.p_max) - p) / (2 * device.H)])
    p_tau = x[2]
    return np.array([
        omega,
        (-device.D * omega + _sat(p_tau, device.p_max) - p) / (2 * device.H),
        (-p_tau - device.d_p * omega) / device.tau,
    ])


# -- mappings from the full controllers ----------------------------------------


def droop_device(gains: ControlGains) -> ReducedDevice:
    return ReducedDevice(ReducedKind.DROOP_LIKE, d_omega=gains.d_omega)


def dvoc_device(gains: ControlGains, v_star: float = 1.0) -> ReducedDevice:
    # near the set-point dVOC behaves like droop with slope eta / v*^2
    return ReducedDevice(ReducedKind.DROOP_LIKE, d_omega=gains.eta / v_star**2)


def vsm_device(gains: ControlGains, omega_star: float = 1.0) -> ReducedDevice:
    """The VSM has no turbine: its damping is the whole primary response."""
    return ReducedDevice(ReducedKind.SWING_LIKE, H=gains.j_r * omega_star / 2, D=gains.d_p * omega_star)


def matching_device(gains: ControlGains, conv: ConverterParams) -> ReducedDevice:
    """Under matching control the dc source plays the turbine."""
    return ReducedDevice(
        ReducedKind.SWING_LIKE,
        H=conv.c_dc / (2 * gains.k_theta**2),
        tau=conv.tau_dc,
        d_p=gains.k_dc / gains.k_theta,
        p_max=conv.v_dc_star * conv.i_dc_max,
    )


# -- two-node model --------------------------------------------------------------


@dataclass(frozen=True)
class TwoNodeParams:
    """Aggregate machine (``H``, ``d_p``, ``tau``) tied to a converter with
    damping ``D_GFC`` that saturates at ``p_max``."""

    H: float
    d_p: float
    tau: float
    D_GFC: float = 0.0
    p_max: float = math.inf
    p_d: float = P_D_STUDY

    def __post_init__(self):
        if not (self.H > 0 and self.tau > 0):
            raise ValueError("H and tau must be positive")
        if self.D_GFC < 0 or self.d_p < 0:
            raise ValueError("D_GFC and d_p must be non-negative")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")


@njit(cache=True)
def _two_node_rhs(w, pt, H, d_p, tau, D, p_max, p_d):
    damp = D * w
    if damp > p_max:
        damp = p_max
    elif damp < -p_max:
        damp = -p_max
    return (-damp + pt + p_d) / (2.0 * H), (-pt - d_p * w) / tau


@njit(cache=True)
def _two_node_rk4(H, d_p, tau, D, p_max, p_d, dt, n):
    out = np.empty(n + 1)
    w = 0.0
    pt = 0.0
    out[0] = 0.0
    for k in range(n):
        a1, b1 = _two_node_rhs(w, pt, H, d_p, tau, D, p_max, p_d)
        a2, b2 = _two_node_rhs(w + 0.5 * dt * a1, pt + 0.5 * dt * b1, H, d_p, tau, D, p_max, p_d)
        a3, b3 = _two_node_rhs(w + 0.5 * dt * a2, pt + 0.5 * dt * b2, H, d_p, tau, D, p_max, p_d)
        a4, b4 = _two_node_rhs(w + dt * a3, pt + dt * b3, H, d_p, tau, D, p_max, p_d)
        w += dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        pt += dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        out[k + 1] = w
    return out


@dataclass(frozen=True)
class StepResponse:
    t: np.ndarray
    omega: np.ndarray  # deviation from nominal, pu
    nadir: float
    rocof: float


def two_node_step_response(params: TwoNodeParams, p_d: float | None = None, t_end: float | None = None,
                           dt: float = 1e-3, window: float = ROCOF_WINDOW) -> StepResponse:
    """Response of the two-node model to a step ``p_d`` applied at t = 0."""
    from .metrics import nadir, rocof

    p_d = params.p_d if p_d is None else p_d
    if t_end is None:
        t_end = max(12.0 * params.tau, 30.0)
    if t_end < 10 * params.tau:
        raise ValueError(f"t_end={t_end} is too short to capture the nadir (need >= {10 * params.tau})")
    n = int(round(t_end / dt))
    w = _two_node_rk4(params.H, params.d_p, params.tau, params.D_GFC, params.p_max, p_d, dt, n)
    t = np.arange(n + 1) * dt
    return StepResponse(t, w, nadir(t, w, 0.0, 0.0), rocof(t, w, 0.0, window))


# -- interpolation study ------------------------------------------------------------


@dataclass(frozen=True)
class StudyPoint:
    nu: float
    rocof_pct: float
    nadir_pct: float


@dataclass(frozen=True)
class InterpolationStudy:
    h_sm: float = H_SM
    d_p_sm: float = D_P_SM
    tau_sm: float = TAU_SM
    p_d: float = P_D_STUDY
    n_machines: int = 3
    nu: tuple = field(default_factory=lambda: tuple(np.linspace(1.0, 1.0 / 3.0, 20)))

    def params(self, nu: float, p_max: float) -> TwoNodeParams:
        """Replace a fraction ``1 - nu`` of the machines by converters.

        Converter damping grows as ``(1 - nu) * n * d_p`` so that both the
        all-machine end (no converter) and the one-machine end (two droop
        units of machine-sized slope) are reproduced.
        """
        if not (0 < nu <= 1):
            raise ValueError(f"nu must lie in (0, 1], got {nu}")
        n = self.n_machines
        return TwoNodeParams(
            H=nu * n * self.h_sm,
            d_p=nu * n * self.d_p_sm,
            tau=self.tau_sm,
            D_GFC=(1 - nu) * n * self.d_p_sm,
            p_max=p_max,
            p_d=self.p_d,
        )


def interpolation_study(p_max: float = math.inf, study: InterpolationStudy = InterpolationStudy()) -> list[StudyPoint]:
    """RoCoF and nadir along the machine-to-converter path, in percent of the
    all-machine values."""
    ref = two_node_step_response(study.params(1.0, p_max))
    points = []
    for nu in study.nu:
        r = two_node_step_response(study.params(float(nu), p_max))
        points.append(StudyPoint(float(nu), 100 * r.rocof / ref.rocof, 100 * r.nadir / ref.nadir))
    return points


# -- dc link --------------------------------------------------------------------------


@dataclass(frozen=True)
class DcLinkParams:
    c_dc: float = ConverterParams.c_dc
    g_dc: float = ConverterParams.g_dc
    k_dc: float = 100.0
    i_dc_max: float = 1.2
    v_dc_star: float = 1.0

    @classmethod
    def from_converter(cls, conv: ConverterParams, gains: ControlGains) -> "DcLinkParams":
        return cls(conv.c_dc, conv.g_dc, gains.k_dc, conv.i_dc_max, conv.v_dc_star)


def dc_voltage_reduced(v_dc: float, p: float, params: DcLinkParams = DcLinkParams()) -> float:
    """dc-link voltage rate with a proportional, saturated dc source."""
    if not v_dc > 0:
        raise ValueError(f"dc voltage must be positive, got {v_dc}")
    i_src = _sat(params.k_dc * (params.v_dc_star - v_dc), params.i_dc_max)
    return (-params.g_dc * v_dc + i_src - p / v_dc) / params.c_dc


def dc_voltage_equilibrium(p: float, params: DcLinkParams = DcLinkParams()) -> float | None:
    """Largest stable equilibrium of the reduced dc link, or None if the
    load ``p`` exceeds what the saturated source can deliver."""
    from scipy.optimize import brentq

    def f(v):
        return dc_voltage_reduced(v, p, params)

    # the rate falls through zero from above at a stable point; scan downwards
    hi = params.v_dc_star * 1.5
    grid = np.linspace(hi, 1e-3, 3000)
    vals = [f(v) for v in grid]
    for k in range(len(grid) - 1):
        if vals[k] < 0 <= vals[k + 1]:
            return float(brentq(f, grid[k + 1], grid[k], xtol=1e-14))
        if vals[k] == 0:
            return float(grid[k])
    return None


# -- gain equivalence ------------------------------------------------------------------


@dataclass(frozen=True)
class EquivalentGains:
    d_omega: float
    D_p: float
    k_dc: float
    eta: float


def compute_equivalent_gains(d_p: float, omega_star: float = 1.0, v_star: float = 1.0,
                             v_dc_star: float = 1.0, k_theta: float = 1.0) -> EquivalentGains:
    """Gains giving every strategy the same steady-state power-frequency slope
    as a governor with droop ``d_p``."""
    if not d_p > 0:
        raise ValueError("d_p must be positive")
    return EquivalentGains(
        d_omega=1.0 / d_p,
        D_p=d_p / omega_star,
        k_dc=d_p * k_theta / v_dc_star,
        eta=v_star**2 / d_p,
    )


def apply_equivalent_gains(gains: ControlGains, eq: EquivalentGains) -> ControlGains:
    from dataclasses import replace

    return replace(gains, d_omega=eq.d_omega, d_p=eq.D_p, k_dc=eq.k_dc, eta=eq.eta)
