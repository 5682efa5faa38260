"""Slow-timescale voltage and angle regulation analysis.

On the synchronization manifold the converter network reduces to linear
dynamics in real coordinates (u, theta, u_f) per node, driven by the
rotated network matrices G' + jB' = e^{j phi} Y and rotated references
sigma'* + j rho'* = e^{j phi} varsigma*:

    du/dt     = eta*(sigma'* - G' u + B' theta + alpha*(u* - u_f))
    dtheta/dt = omega0*1 + eta*(rho'* - B' u - G' theta)
    tau du_f/dt = u - u_f

The common angle drifts at a constant rate, so the analysis works in
center-of-angle coordinates: theta0 = mean(theta), delta = theta -
theta0*1.  The error dynamics around the (unique, up to the angle gauge)
equilibrium are setpoint-independent and admit the quadratic Lyapunov
function

    W = 0.5*||u~||^2 + 0.5*||delta~||^2 + 0.5*eta*alpha*tau*||u_f~||^2

whose derivative is -eta*(u~' G' u~ + delta~' G' delta~) -
eta*alpha*||u_f~||^2: decreasing whenever G' is positive semidefinite.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .controllers import DvocParams
from .errors import ConfigurationError, NumericalError
from .network import ReducedNetwork

__all__ = [
    "SlowSystem",
    "Equilibrium",
    "build_slow_system",
    "to_center_of_angle",
    "solve_equilibrium",
    "steady_state_frequency",
    "error_dynamics_matrix",
    "error_spectrum",
    "lyapunov_w",
    "lyapunov_w_check",
    "error_coordinates",
]

_RANK_TOL = 1e-8


@dataclass
class SlowSystem:
    """Rotated-coordinate slow dynamics data."""

    g: np.ndarray          # G' = Re(e^{j phi} Y), symmetric
    b: np.ndarray          # B' = Im(e^{j phi} Y), symmetric
    sigma_ref: np.ndarray  # sigma'* including shunt shifts and generator forcing
    rho_ref: np.ndarray    # rho'*  including shunt shifts and generator forcing
    u_star: np.ndarray
    params: DvocParams
    g_min_eig: float       # smallest eigenvalue of G'
    laplacian: bool = True  # False when the block is anchored externally

    @property
    def n(self) -> int:
        return self.g.shape[0]


def build_slow_system(
    net: ReducedNetwork,
    params: DvocParams,
    setpoints,
    coupling: np.ndarray | None = None,
    theta_sg: np.ndarray | None = None,
) -> SlowSystem:
    """Assemble the slow system for uniform gains.

    Constant generator angles enter as -e^{j phi} Y_cg @ theta_sg, folded
    directly into the rotated references.  Warns when the rotated
    conductance matrix fails positive semidefiniteness beyond -1e-10,
    since the Lyapunov decrease argument then no longer applies.
    """
    setpoints = list(setpoints)
    n = net.n
    if len(setpoints) != n:
        raise ConfigurationError(f"expected {n} setpoints, got {len(setpoints)}")
    rot = params.rotation
    m = rot * net.y
    ref = rot * np.array([sp.varsigma_star_conj + shift
                          for sp, shift in zip(setpoints, net.setpoint_shift)])
    if coupling is not None:
        if theta_sg is None:
            raise ConfigurationError("generator coupling given without theta_sg")
        coupling = np.asarray(coupling, dtype=np.complex128)
        theta_sg = np.asarray(theta_sg, dtype=np.complex128)
        if coupling.shape[0] != n or coupling.shape[1] != theta_sg.shape[0]:
            raise ConfigurationError("coupling block and theta_sg shapes do not match")
        ref = ref - rot * (coupling @ theta_sg)
    g = 0.5 * (m.real + m.real.T)
    b = 0.5 * (m.imag + m.imag.T)
    gev = np.linalg.eigvalsh(g)
    scale = max(1.0, float(np.max(np.abs(gev))))
    g_min = float(gev[0])
    if g_min < -1e-10 * scale:
        warnings.warn(f"rotated conductance matrix is indefinite "
                      f"(min eigenvalue {g_min:.3e}); stability is not guaranteed",
                      stacklevel=2)
    return SlowSystem(g=g, b=b, sigma_ref=ref.real.copy(), rho_ref=ref.imag.copy(),
                      u_star=np.array([sp.u_star for sp in setpoints]),
                      params=params, g_min_eig=g_min, laplacian=net.laplacian)


def to_center_of_angle(theta: np.ndarray) -> tuple[float, np.ndarray]:
    """Split angles into the compensated mean and zero-sum deviations."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1:
        raise ConfigurationError("to_center_of_angle expects a 1-d angle vector")
    center = math.fsum(theta.tolist()) / theta.shape[0]
    return center, theta - center


@dataclass
class Equilibrium:
    """Center-of-angle equilibrium of the slow error dynamics."""

    u: np.ndarray
    delta: np.ndarray
    theta0_rate: float
    residual: float
    smin: float

    def as_dict(self) -> dict:
        return {
            "u": [float(x) for x in self.u],
            "delta": [float(x) for x in self.delta],
            "theta0_rate": float(self.theta0_rate),
            "residual": float(self.residual),
            "smin": float(self.smin),
        }


def solve_equilibrium(sys: SlowSystem) -> Equilibrium:
    """Equilibrium of the slow dynamics.

    Free networks rotate as a whole, so the solve runs in
    center-of-angle coordinates: a (2n+1) x 2n stack of the amplitude
    balance, the zero-sum angle balance, and the gauge row
    sum(delta) = 0.  The stack is consistent and the least-squares
    residual is pure roundoff.  Anchored blocks (external generator
    coupling) pin the absolute angles instead; there the square 2n x 2n
    balance is solved and the angles stop drifting entirely.  Raises
    NumericalError when the smallest singular value drops below 1e-8
    (degenerate network, or alpha = 0 on a free network where the
    amplitude equilibrium loses uniqueness).
    """
    n = sys.n
    alpha = sys.params.alpha
    eye = np.eye(n)
    if sys.laplacian:
        mean_rho = math.fsum(sys.rho_ref.tolist()) / n
        a = np.zeros((2 * n + 1, 2 * n))
        a[2 * n, n:] = 1.0
        rhs = np.concatenate([
            sys.sigma_ref + alpha * sys.u_star,
            sys.rho_ref - mean_rho,
            [0.0],
        ])
    else:
        a = np.zeros((2 * n, 2 * n))
        rhs = np.concatenate([
            sys.sigma_ref + alpha * sys.u_star,
            sys.rho_ref + sys.params.omega0 / sys.params.eta,
        ])
    a[:n, :n] = sys.g + alpha * eye
    a[:n, n:] = -sys.b
    a[n:2 * n, :n] = sys.b
    a[n:2 * n, n:] = sys.g
    x, _, _, svals = np.linalg.lstsq(a, rhs, rcond=None)
    smin = float(svals[-1])
    if smin < _RANK_TOL:
        raise NumericalError(f"equilibrium system is rank-deficient "
                             f"(smallest singular value {smin:.3e})")
    residual = float(np.linalg.norm(a @ x - rhs))
    return Equilibrium(u=x[:n].copy(), delta=x[n:].copy(),
                       theta0_rate=steady_state_frequency(sys) if sys.laplacian else 0.0,
                       residual=residual, smin=smin)


def steady_state_frequency(sys: SlowSystem) -> float:
    """Synchronous steady-state frequency in rad/s.

    A free network settles at omega0 + eta*mean(rho'*); an anchored one
    locks to the machine frame, i.e. exactly omega0.
    """
    if not sys.laplacian:
        return sys.params.omega0
    return sys.params.omega0 + sys.params.eta * math.fsum(sys.rho_ref.tolist()) / sys.n


def error_dynamics_matrix(sys: SlowSystem) -> np.ndarray:
    """Setpoint-independent error dynamics in (u~, delta~, u_f~) stacking."""
    n = sys.n
    eta, alpha, tau = sys.params.eta, sys.params.alpha, sys.params.tau
    m = np.zeros((3 * n, 3 * n))
    m[:n, :n] = -eta * sys.g
    m[:n, n:2 * n] = eta * sys.b
    m[:n, 2 * n:] = -eta * alpha * np.eye(n)
    m[n:2 * n, :n] = -eta * sys.b
    m[n:2 * n, n:2 * n] = -eta * sys.g
    m[2 * n:, :n] = np.eye(n) / tau
    m[2 * n:, 2 * n:] = -np.eye(n) / tau
    return m


def _coa_basis(n: int) -> np.ndarray:
    """Deterministic orthonormal basis of the zero-sum subspace (n x (n-1))."""
    ones = np.full(n, 1.0 / math.sqrt(n))
    # Householder reflector mapping e1 -> ones; its last n-1 columns span 1-perp.
    w = ones.copy()
    w[0] -= 1.0
    nw = np.linalg.norm(w)
    if nw == 0.0:
        return np.eye(n)[:, 1:]
    w /= nw
    h = np.eye(n) - 2.0 * np.outer(w, w)
    return h[:, 1:]


def error_spectrum(sys: SlowSystem) -> np.ndarray:
    """Eigenvalues of the error dynamics, sorted by descending real part.

    On a free network the uniform angle shift is an exact zero mode by
    the network row sums; the delta~ block is restricted to the
    zero-sum subspace to remove it, so a stable configuration shows
    strictly negative real parts.  Anchored blocks have no such
    invariance and are taken whole.
    """
    n = sys.n
    m = error_dynamics_matrix(sys)
    if not sys.laplacian:
        evals = np.linalg.eigvals(m)
    else:
        q = _coa_basis(n)
        t = np.zeros((3 * n, 3 * n - 1))
        t[:n, :n] = np.eye(n)
        t[n:2 * n, n:2 * n - 1] = q
        t[2 * n:, 2 * n - 1:] = np.eye(n)
        mr = t.T @ m @ t
        evals = np.linalg.eigvals(mr)
    order = np.lexsort((-evals.imag, -evals.real))
    return evals[order]


def lyapunov_w(sys: SlowSystem, u_err: np.ndarray, delta_err: np.ndarray,
               uf_err: np.ndarray) -> float:
    """Quadratic error energy W (see module docstring)."""
    eta, alpha, tau = sys.params.eta, sys.params.alpha, sys.params.tau
    u_err = np.asarray(u_err, dtype=float)
    delta_err = np.asarray(delta_err, dtype=float)
    uf_err = np.asarray(uf_err, dtype=float)
    return 0.5 * float(u_err @ u_err) + 0.5 * float(delta_err @ delta_err) \
        + 0.5 * eta * alpha * tau * float(uf_err @ uf_err)


@dataclass
class LyapunovCheck:
    w: np.ndarray
    max_increase: float

    @property
    def monotone(self) -> bool:
        return self.max_increase <= 0.0


def lyapunov_w_check(sys: SlowSystem, u_err: np.ndarray, delta_err: np.ndarray,
                     uf_err: np.ndarray) -> LyapunovCheck:
    """Evaluate W along an error trajectory (rows are time samples).

    ``max_increase`` is the largest step-to-step increase of W; on a
    stable system it should not exceed integration rounding.
    """
    u_err = np.atleast_2d(np.asarray(u_err, dtype=float))
    delta_err = np.atleast_2d(np.asarray(delta_err, dtype=float))
    uf_err = np.atleast_2d(np.asarray(uf_err, dtype=float))
    eta, alpha, tau = sys.params.eta, sys.params.alpha, sys.params.tau
    w = 0.5 * np.sum(u_err * u_err, axis=1) \
        + 0.5 * np.sum(delta_err * delta_err, axis=1) \
        + 0.5 * eta * alpha * tau * np.sum(uf_err * uf_err, axis=1)
    dmax = float(np.max(np.diff(w))) if w.shape[0] > 1 else 0.0
    return LyapunovCheck(w=w, max_increase=dmax)


def error_coordinates(
    sys: SlowSystem,
    eq: Equilibrium,
    u: np.ndarray,
    theta: np.ndarray,
    u_f: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Convert trajectory samples (rows = time) into equilibrium error coordinates."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    u_f = np.atleast_2d(np.asarray(u_f, dtype=float))
    if sys.laplacian:
        delta = theta - theta.mean(axis=1, keepdims=True)
    else:
        delta = theta
    return u - eq.u, delta - eq.delta, u_f - eq.u
