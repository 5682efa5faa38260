"""Stationary-frame voltage coordinates.

A converter voltage is a complex per-unit phasor ``v``.  Two derived
coordinate systems are used throughout the package:

* the complex angle ``u + j*theta`` with ``u = ln|v|`` and ``theta`` the
  accumulated (unwrapped) phase angle, and
* the complex frequency ``eps + j*omega``, the time derivative of the
  complex angle.  ``eps`` is the normalized rate of change of voltage
  magnitude (1/s) and ``omega`` the instantaneous angular frequency
  (rad/s).

Voltages themselves are carried as plain ``complex``/complex128 values;
the named pairs below exist where the (u, theta) and (eps, omega)
decompositions are the point.  The origin v = 0 is outside the chart and
is rejected everywhere.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "ComplexAngle",
    "ComplexFrequency",
    "angle_from_voltage",
    "voltage_from_angle",
    "estimate_complex_frequency",
    "angle_series",
    "frequency_series",
]


@dataclass(frozen=True)
class ComplexAngle:
    """Logarithmic voltage coordinates: u = ln|v|, theta = unwrapped angle [rad]."""

    u: float
    theta: float

    @property
    def as_complex(self) -> complex:
        return complex(self.u, self.theta)


@dataclass(frozen=True)
class ComplexFrequency:
    """Instantaneous rate of a complex angle: eps [1/s] plus j*omega [rad/s]."""

    eps: float
    omega: float

    @property
    def as_complex(self) -> complex:
        return complex(self.eps, self.omega)

    @classmethod
    def from_complex(cls, z: complex) -> "ComplexFrequency":
        z = complex(z)
        return cls(z.real, z.imag)


def angle_from_voltage(v: complex, prev: ComplexAngle | None = None) -> ComplexAngle:
    """Complex angle of a voltage phasor.

    ``theta`` is the principal angle, shifted by the multiple of 2*pi
    that lands it within pi of ``prev.theta`` when a previous sample is
    given (angle continuity along a trajectory).

    Raises DomainError for v = 0 or non-finite v.
    """
    v = complex(v)
    if not (math.isfinite(v.real) and math.isfinite(v.imag)):
        raise DomainError(f"non-finite voltage {v!r}")
    if v == 0:
        raise DomainError("zero voltage has no complex angle")
    u = math.log(abs(v))
    theta = cmath.phase(v)
    if prev is not None:
        theta += 2.0 * math.pi * round((prev.theta - theta) / (2.0 * math.pi))
    return ComplexAngle(u, theta)


def voltage_from_angle(angle: ComplexAngle) -> complex:
    """Inverse chart: v = exp(u + j*theta)."""
    return cmath.exp(angle.as_complex)


def angle_series(v: np.ndarray, axis: int = 0) -> np.ndarray:
    """Unwrapped complex angles ln|v| + j*theta along ``axis`` of a voltage array."""
    v = np.asarray(v, dtype=np.complex128)
    mag = np.abs(v)
    if not np.all(np.isfinite(mag)):
        raise DomainError("non-finite voltage sample in series")
    if not np.all(mag > 0.0):
        raise DomainError("zero voltage sample in series")
    theta = np.unwrap(np.angle(v), axis=axis)
    return np.log(mag) + 1j * theta


def frequency_series(v: np.ndarray, dt: float, axis: int = 0) -> np.ndarray:
    """Complex-frequency estimates for a uniformly sampled voltage array.

    Differentiates the unwrapped complex angle: central differences in
    the interior, second-order one-sided stencils at the ends, so the
    estimate converges at O(dt^2) for smooth trajectories.  Needs at
    least three samples along ``axis``.
    """
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ConfigurationError(f"sample spacing must be positive, got {dt!r}")
    v = np.asarray(v, dtype=np.complex128)
    if v.shape[axis] < 3:
        raise ConfigurationError("need at least 3 samples to estimate a complex frequency")
    return np.gradient(angle_series(v, axis=axis), dt, axis=axis, edge_order=2)


def estimate_complex_frequency(samples, dt: float) -> list[ComplexFrequency]:
    """Per-sample complex-frequency estimates for one voltage trace."""
    arr = np.asarray(list(samples), dtype=np.complex128)
    if arr.ndim != 1:
        raise ConfigurationError("expected a one-dimensional sequence of voltage samples")
    w = frequency_series(arr, dt)
    return [ComplexFrequency(z.real, z.imag) for z in w]
