"""Dispatchable virtual oscillator control laws.

Every variant shares the synchronizing core

    dv/dt = j*omega0*v + eta*e^{j phi} * (varsigma*_conj * v - i_o)

where ``varsigma*_conj = (p* - j q*)/v*^2`` is the conjugate normalized
power setpoint and ``i_o`` the current injected into the network.  The
variants differ only in the amplitude-regulation term:

* ``classic``   eta*alpha*(v* - |v|)/v* * v
* ``core``      no regulation
* ``log``       eta*alpha*(ln v* - ln|v|) * v
* ``filtered``  eta*alpha*(ln v* - u_f) * v with a first-order filter
                tau * du_f/dt = ln|v| - u_f

``eta`` is the literal feedback gain of these equations, carrying units
of 1/s against per-unit power quantities.  Scenario files state the
dimensionless droop slope instead and scale it by omega0 on load; see
the scenario layer.  ``alpha`` is dimensionless, ``tau`` in seconds.

Dividing the core law by v shows it is exactly a droop in complex
frequency: d(theta)/dt = j*omega0 + eta*e^{j phi}*(varsigma*_conj -
varsigma_conj), coupling normalized power imbalance to the complex
frequency through the rotation phi.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass

from .errors import ConfigurationError, DomainError

__all__ = [
    "DvocParams",
    "Setpoints",
    "ControlVariant",
    "converter_rhs",
    "complex_droop_rhs",
    "effective_reference",
    "verify_droop_equivalence",
]


@dataclass(frozen=True)
class DvocParams:
    """Shared control gains.

    eta    synchronization gain > 0 [1/s against per-unit power]
    alpha  amplitude regulation gain >= 0 [dimensionless]
    tau    regulation filter time constant > 0 [s]
    phi    rotation angle in [0, pi/2] [rad]
    omega0 nominal angular frequency > 0 [rad/s]
    """

    eta: float
    alpha: float
    tau: float
    phi: float
    omega0: float

    def __post_init__(self):
        for name in ("eta", "alpha", "tau", "phi", "omega0"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val)):
                raise ConfigurationError(f"{name} must be a finite number, got {val!r}")
        if self.eta <= 0.0:
            raise ConfigurationError(f"eta must be > 0, got {self.eta}")
        if self.alpha < 0.0:
            raise ConfigurationError(f"alpha must be >= 0, got {self.alpha}")
        if self.tau <= 0.0:
            raise ConfigurationError(f"tau must be > 0, got {self.tau}")
        if not 0.0 <= self.phi <= math.pi / 2.0 + 1e-12:
            raise ConfigurationError(f"phi must lie in [0, pi/2], got {self.phi}")
        if self.omega0 <= 0.0:
            raise ConfigurationError(f"omega0 must be > 0, got {self.omega0}")

    @property
    def rotation(self) -> complex:
        """e^{j phi}"""
        return cmath.exp(1j * self.phi)


@dataclass(frozen=True)
class Setpoints:
    """Per-converter power and voltage setpoints (per-unit)."""

    p_star: float
    q_star: float
    v_star: float

    def __post_init__(self):
        for name in ("p_star", "q_star", "v_star"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val)):
                raise ConfigurationError(f"{name} must be a finite number, got {val!r}")
        if self.v_star <= 0.0:
            raise ConfigurationError(f"v_star must be > 0, got {self.v_star}")

    @property
    def u_star(self) -> float:
        return math.log(self.v_star)

    @property
    def varsigma_star_conj(self) -> complex:
        """Conjugate normalized power setpoint (p* - j q*)/v*^2."""
        return complex(self.p_star, -self.q_star) / (self.v_star * self.v_star)


class ControlVariant(enum.Enum):
    CLASSIC = "classic"
    CORE = "core"
    LOG = "log"
    FILTERED = "filtered"


def converter_rhs(
    v: complex,
    i_o: complex,
    params: DvocParams,
    sp: Setpoints,
    variant: ControlVariant = ControlVariant.FILTERED,
    u_f: float | None = None,
) -> tuple[complex, float]:
    """Right-hand side of one converter's voltage dynamics.

    Returns ``(dv/dt, du_f/dt)``; the filter rate is zero for variants
    without a filter state.  The log and filtered variants require
    |v| > 0; the filtered variant additionally requires ``u_f``.
    """
    v = complex(v)
    i_o = complex(i_o)
    dv = 1j * params.omega0 * v + params.eta * params.rotation * (
        sp.varsigma_star_conj * v - i_o)
    du_f = 0.0
    ea = params.eta * params.alpha
    if variant is ControlVariant.CLASSIC:
        dv += ea * ((sp.v_star - abs(v)) / sp.v_star) * v
    elif variant is ControlVariant.LOG:
        if v == 0:
            raise DomainError("log-amplitude regulation is undefined at zero voltage")
        dv += ea * (sp.u_star - math.log(abs(v))) * v
    elif variant is ControlVariant.FILTERED:
        if u_f is None:
            raise ConfigurationError("filtered variant needs the filter state u_f")
        if v == 0:
            raise DomainError("amplitude filter is undefined at zero voltage")
        dv += ea * (sp.u_star - u_f) * v
        du_f = (math.log(abs(v)) - u_f) / params.tau
    elif variant is not ControlVariant.CORE:
        raise ConfigurationError(f"unknown control variant {variant!r}")
    return dv, du_f


def complex_droop_rhs(
    varsigma_conj: complex,
    params: DvocParams,
    sp: Setpoints,
) -> complex:
    """Complex-frequency droop: d(theta)/dt for a measured normalized power.

    theta here is the complex angle u + j*arg v; the returned rate is the
    complex frequency eps + j*omega the converter asks for.
    """
    return 1j * params.omega0 + params.eta * params.rotation * (
        sp.varsigma_star_conj - complex(varsigma_conj))


def effective_reference(
    params: DvocParams,
    sp: Setpoints,
    u_f: float,
    shift: complex = 0.0,
) -> complex:
    """Normalized power reference with the regulation offset folded in.

    For a frozen filter state u_f the filtered dVOC law collapses into
    the core law around varsigma* + shift + alpha*e^{-j phi}*(u* - u_f),
    which is the reference the linearized fast analysis operates on.
    ``shift`` carries absorbed shunts from a network reduction.
    """
    return (sp.varsigma_star_conj + complex(shift)
            + params.alpha * cmath.exp(-1j * params.phi) * (sp.u_star - u_f))


def verify_droop_equivalence(
    v: complex,
    i_o: complex,
    params: DvocParams,
    sp: Setpoints,
) -> float:
    """Residual between the core law divided by v and the complex droop.

    The two are algebraically identical, so the residual is pure
    floating-point noise for well-scaled voltages; it grows like
    eta*|i_o|/|v| * eps near the origin.
    """
    v = complex(v)
    if v == 0:
        raise DomainError("equivalence residual is undefined at zero voltage")
    dv, _ = converter_rhs(v, i_o, params, sp, ControlVariant.CORE)
    droop = complex_droop_rhs(i_o / v, params, sp)
    return abs(dv / v - droop)
