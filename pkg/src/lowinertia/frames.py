"""Reference frames, two-axis signals and the per-unit system.

All ac quantities are carried as two-axis vectors. The Clarke transform is the
amplitude-invariant (peak value) one, so a balanced set of peak ``A`` maps to a
vector of length ``A``. With peak-value per-unit bases the active power is then
simply ``v1*i1 + v2*i2``.

The ``*_xy`` kernels are numba-compiled scalar versions used inside the
simulator right-hand side.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

SQRT3 = math.sqrt(3.0)


class FrameMismatchError(ValueError):
    """Raised when signals in different reference frames are combined."""


class Frame(enum.Enum):
    ALPHA_BETA = "alpha_beta"
    DQ = "dq"


@dataclass(frozen=True)
class TwoAxisSignal:
    """A 2-vector tagged with the frame it is expressed in."""

    x1: float
    x2: float
    frame: Frame = Frame.ALPHA_BETA

    @property
    def magnitude(self) -> float:
        return math.hypot(self.x1, self.x2)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2])

    def _check(self, other: "TwoAxisSignal") -> None:
        if not isinstance(other, TwoAxisSignal):
            raise TypeError(f"expected TwoAxisSignal, got {type(other).__name__}")
        if other.frame is not self.frame:
            raise FrameMismatchError(f"cannot combine {self.frame.value} with {other.frame.value}")

    def __add__(self, other: "TwoAxisSignal") -> "TwoAxisSignal":
        self._check(other)
        return TwoAxisSignal(self.x1 + other.x1, self.x2 + other.x2, self.frame)

    def __sub__(self, other: "TwoAxisSignal") -> "TwoAxisSignal":
        self._check(other)
        return TwoAxisSignal(self.x1 - other.x1, self.x2 - other.x2, self.frame)

    def __neg__(self) -> "TwoAxisSignal":
        return TwoAxisSignal(-self.x1, -self.x2, self.frame)

    def __mul__(self, c: float) -> "TwoAxisSignal":
        return TwoAxisSignal(c * self.x1, c * self.x2, self.frame)

    __rmul__ = __mul__

    def dot(self, other: "TwoAxisSignal") -> float:
        self._check(other)
        return self.x1 * other.x1 + self.x2 * other.x2

    def rotated(self, angle: float) -> "TwoAxisSignal":
        x1, x2 = rotate_xy(self.x1, self.x2, angle)
        return TwoAxisSignal(x1, x2, self.frame)


def alpha_beta(x1: float, x2: float) -> TwoAxisSignal:
    return TwoAxisSignal(float(x1), float(x2), Frame.ALPHA_BETA)


def dq(x1: float, x2: float) -> TwoAxisSignal:
    return TwoAxisSignal(float(x1), float(x2), Frame.DQ)


@dataclass(frozen=True)
class PerUnitBase:
    """Three-phase base values.

    ``v_base`` is the line-to-line rms voltage; the ac quantities inside the
    simulator use the matching peak phase voltage and current so that the
    3/2 factor of the amplitude-invariant transform cancels.
    """

    s_base: float
    v_base: float
    omega_base: float = 2.0 * math.pi * 50.0

    def __post_init__(self):
        if self.s_base <= 0 or self.v_base <= 0 or self.omega_base <= 0:
            raise ValueError("per-unit bases must be strictly positive")

    @property
    def i_base(self) -> float:
        return self.s_base / self.v_base

    @property
    def z_base(self) -> float:
        return self.v_base**2 / self.s_base

    @property
    def v_peak(self) -> float:
        return self.v_base * math.sqrt(2.0 / 3.0)

    @property
    def i_peak(self) -> float:
        return 2.0 * self.s_base / (3.0 * self.v_peak)

    def ohm_to_pu(self, z: float) -> float:
        return z / self.z_base

    def henry_to_pu(self, l: float) -> float:
        """Inductance in pu reactance at base frequency."""
        return self.omega_base * l / self.z_base

    def farad_to_pu(self, c: float) -> float:
        """Capacitance in pu susceptance at base frequency."""
        return self.omega_base * c * self.z_base


@dataclass(frozen=True)
class RotationMatrix2:
    angle: float

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def apply(self, v: TwoAxisSignal) -> TwoAxisSignal:
        return v.rotated(self.angle)


J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def clarke(a: float, b: float, c: float) -> TwoAxisSignal:
    """Amplitude-invariant abc -> alpha-beta transform (zero sequence dropped)."""
    alpha = (2.0 * a - b - c) / 3.0
    beta = (b - c) / SQRT3
    return alpha_beta(alpha, beta)


def inverse_clarke(v: TwoAxisSignal) -> tuple[float, float, float]:
    if v.frame is not Frame.ALPHA_BETA:
        raise FrameMismatchError("inverse_clarke expects an alpha-beta signal")
    a = v.x1
    b = -0.5 * v.x1 + 0.5 * SQRT3 * v.x2
    c = -0.5 * v.x1 - 0.5 * SQRT3 * v.x2
    return a, b, c


def park(v: TwoAxisSignal, theta: float) -> TwoAxisSignal:
    """Express an alpha-beta vector in the frame rotated by ``theta``."""
    if v.frame is not Frame.ALPHA_BETA:
        raise FrameMismatchError("park expects an alpha-beta signal")
    d, q = rotate_xy(v.x1, v.x2, -theta)
    return dq(d, q)


def inverse_park(v: TwoAxisSignal, theta: float) -> TwoAxisSignal:
    if v.frame is not Frame.DQ:
        raise FrameMismatchError("inverse_park expects a dq signal")
    a, b = rotate_xy(v.x1, v.x2, theta)
    return alpha_beta(a, b)


def instantaneous_power(v: TwoAxisSignal, i: TwoAxisSignal) -> tuple[float, float]:
    """Active and reactive power in pu, ``q = v2*i1 - v1*i2``."""
    v._check(i)
    return power_xy(v.x1, v.x2, i.x1, i.x2)


@njit(cache=True)
def rotate_xy(x1, x2, angle):
    c = math.cos(angle)
    s = math.sin(angle)
    return c * x1 - s * x2, s * x1 + c * x2


@njit(cache=True)
def power_xy(v1, v2, i1, i2):
    return v1 * i1 + v2 * i2, v2 * i1 - v1 * i2
