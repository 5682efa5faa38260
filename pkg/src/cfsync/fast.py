"""Fast-timescale synchronization analysis.

With the amplitude filter states frozen, the network of dVOC converters
is a linear system dv/dt = A v (+ constant forcing when generator
couplings are present) with

    A = j*omega0*I + eta*e^{j phi} * (diag(varsigma**) - Y)

where varsigma** is the effective normalized power reference per node.
A is complex symmetric because Y is, so its left and right dominant
eigenvectors coincide.  Synchronization of the voltages onto a common
complex frequency is decided by the dominant eigenpair of A:

* spectral condition: the dominant eigenvector has no (relatively) zero
  entries and the second-largest real part is strictly negative;
* parametric condition: an explicitly checkable inequality between the
  rotated power references and the algebraic connectivity of the rotated
  conductance graph, parametrized by an assumed eigenvector spread
  (delta_bar on angles, gamma_bar on magnitude ratios).

The parametric condition implies the spectral one whenever the dominant
eigenvector actually satisfies the assumed spread, so a certified pass
re-checks that containment a posteriori.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .controllers import DvocParams, Setpoints, effective_reference
from .coords import ComplexFrequency
from .errors import ConfigurationError, NumericalError
from .network import ReducedNetwork, algebraic_connectivity

__all__ = [
    "FastSystem",
    "Spectrum",
    "Condition1Result",
    "Condition2Result",
    "SyncVerdict",
    "ModalPrediction",
    "build_fast_system",
    "spectrum",
    "check_spectral_condition",
    "check_parametric_condition",
    "eigenvector_spread",
    "certified_parametric_condition",
    "modal_prediction",
    "eigenspace_distance",
    "lyapunov_v",
    "sync_verdict",
]

# Dominance is ambiguous below this gap in real parts.
_GAP_TOL = 1e-9
# Default relative floor under which an eigenvector entry counts as zero.
_ENTRY_TOL = 1e-8
# Target residual for the refined dominant eigenpair.
_RESIDUAL_TARGET = 1e-11


@dataclass
class FastSystem:
    """Linearized fast dynamics dv/dt = A v + forcing."""

    a: np.ndarray
    effective_ref: np.ndarray
    params: DvocParams
    network: ReducedNetwork
    forcing: np.ndarray | None = None


def build_fast_system(
    net: ReducedNetwork,
    params: DvocParams,
    setpoints,
    u_f=None,
    coupling: np.ndarray | None = None,
    v_sg: np.ndarray | None = None,
) -> FastSystem:
    """Assemble the fast system matrix for uniform gains.

    ``u_f`` freezes the per-node amplitude filter states (defaults to
    each node's u*, which zeroes the regulation offset).  ``coupling``
    and ``v_sg`` add the constant generator forcing term
    -eta*e^{j phi} * Y_cg @ v_sg.
    """
    setpoints = list(setpoints)
    n = net.n
    if len(setpoints) != n:
        raise ConfigurationError(f"expected {n} setpoints, got {len(setpoints)}")
    if u_f is None:
        u_f = np.array([sp.u_star for sp in setpoints])
    u_f = np.asarray(u_f, dtype=float)
    if u_f.shape != (n,):
        raise ConfigurationError("u_f must have one entry per node")
    ref = np.array([
        effective_reference(params, sp, float(uf), shift)
        for sp, uf, shift in zip(setpoints, u_f, net.setpoint_shift)
    ])
    rot = params.rotation
    a = params.eta * rot * (np.diag(ref) - net.y)
    a[np.diag_indices(n)] += 1j * params.omega0
    forcing = None
    if coupling is not None:
        if v_sg is None:
            raise ConfigurationError("generator coupling given without v_sg")
        coupling = np.asarray(coupling, dtype=np.complex128)
        v_sg = np.asarray(v_sg, dtype=np.complex128)
        if coupling.shape[0] != n or coupling.shape[1] != v_sg.shape[0]:
            raise ConfigurationError("coupling block and v_sg shapes do not match")
        forcing = -params.eta * rot * (coupling @ v_sg)
    return FastSystem(a=a, effective_ref=ref, params=params, network=net, forcing=forcing)


@dataclass
class Spectrum:
    """Eigen-decomposition summary of a fast system matrix."""

    eigenvalues: np.ndarray   # sorted by descending real part
    dominant_vector: np.ndarray  # unit norm, largest entry rotated to the positive real axis
    gap: float                # Re(lam1) - Re(lam2)
    residual: float           # ||A phi1 - lam1 phi1||
    symmetry_defect: float    # max |A - A^T| relative to scale

    @property
    def dominant(self) -> complex:
        return complex(self.eigenvalues[0])

    def as_dict(self) -> dict:
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "dominant": [float(self.dominant.real), float(self.dominant.imag)],
            "gap": float(self.gap),
            "residual": float(self.residual),
        }


def _as_matrix(sys_or_matrix) -> np.ndarray:
    if isinstance(sys_or_matrix, FastSystem):
        return sys_or_matrix.a
    return np.asarray(sys_or_matrix, dtype=np.complex128)


def spectrum(sys_or_matrix) -> Spectrum:
    """Eigenvalues sorted by descending real part plus a refined dominant pair.

    The dominant eigenpair is polished by inverse iteration until the
    residual drops below 1e-11 (relative to the matrix norm); the left
    eigenvector is the right one because the matrix is symmetric, which
    is checked and recorded.
    """
    a = _as_matrix(sys_or_matrix)
    n = a.shape[0]
    if a.shape != (n, n) or n == 0:
        raise ConfigurationError("spectrum needs a square, non-empty matrix")
    scale = max(1.0, float(np.linalg.norm(a, ord="fro")))
    sym_defect = float(np.max(np.abs(a - a.T))) / scale
    if sym_defect > 1e-9:
        warnings.warn(f"fast matrix is not symmetric (relative defect {sym_defect:.3e}); "
                      "left and right eigenvectors will differ", stacklevel=2)
    evals, evecs = np.linalg.eig(a)
    order = np.lexsort((-evals.imag, -evals.real))
    evals = evals[order]
    evecs = evecs[:, order]
    lam = complex(evals[0])
    vec = evecs[:, 0].astype(np.complex128)
    vec /= np.linalg.norm(vec)
    # Inverse-iteration polish of the dominant pair.
    residual = float(np.linalg.norm(a @ vec - lam * vec))
    ident = np.eye(n, dtype=np.complex128)
    for _ in range(12):
        if residual <= _RESIDUAL_TARGET * scale:
            break
        shift = lam + 1e-13 * scale  # keep the shifted matrix invertible
        try:
            w = np.linalg.solve(a - shift * ident, vec)
        except np.linalg.LinAlgError:
            shift = lam + 1e-10 * scale
            w = np.linalg.solve(a - shift * ident, vec)
        wn = np.linalg.norm(w)
        if not np.isfinite(wn) or wn == 0.0:
            break
        vec = w / wn
        lam = complex(vec.conj() @ a @ vec)  # residual-minimizing Rayleigh quotient
        residual = float(np.linalg.norm(a @ vec - lam * vec))
    evals = evals.copy()
    evals[0] = lam
    # Deterministic phase: rotate the largest entry onto the positive real axis.
    k = int(np.argmax(np.abs(vec)))
    ph = cmath.phase(complex(vec[k]))
    vec = vec * cmath.exp(-1j * ph)
    gap = float(evals[0].real - evals[1].real) if n > 1 else math.inf
    return Spectrum(eigenvalues=evals, dominant_vector=vec, gap=gap,
                    residual=residual, symmetry_defect=sym_defect)


@dataclass
class Condition1Result:
    """Spectral synchronization condition: nonzero dominant entries, Re(lam2) < 0."""

    passed: bool
    re_lambda2: float
    min_entry: float
    max_entry: float
    gap: float
    entry_tol: float
    reasons: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "re_lambda2": float(self.re_lambda2),
            "min_entry": float(self.min_entry),
            "max_entry": float(self.max_entry),
            "gap": float(self.gap),
            "reasons": list(self.reasons),
        }


def check_spectral_condition(spec: Spectrum, entry_tol: float = _ENTRY_TOL) -> Condition1Result:
    """Evaluate the spectral condition on a computed spectrum.

    Raises NumericalError when the two largest real parts are within
    1e-9 of each other: dominance is then numerically ambiguous and no
    verdict is trustworthy.
    """
    if spec.eigenvalues.shape[0] < 2:
        raise ConfigurationError("spectral condition needs at least two nodes")
    if spec.gap < _GAP_TOL:
        raise NumericalError(
            f"dominant eigenvalue is ambiguous (real-part gap {spec.gap:.3e})")
    mags = np.abs(spec.dominant_vector)
    min_entry = float(mags.min())
    max_entry = float(mags.max())
    re2 = float(spec.eigenvalues[1].real)
    reasons = []
    if min_entry <= entry_tol * max_entry:
        reasons.append(f"dominant eigenvector has a vanishing entry "
                       f"(min/max = {min_entry / max_entry:.3e})")
    if re2 >= 0.0:
        reasons.append(f"second eigenvalue is not decaying (Re = {re2:.3e})")
    return Condition1Result(passed=not reasons, re_lambda2=re2, min_entry=min_entry,
                            max_entry=max_entry, gap=spec.gap, entry_tol=entry_tol,
                            reasons=reasons)


@dataclass
class Condition2Result:
    """Parametric synchronization inequality and its margin."""

    passed: bool
    lhs: float
    rhs: float
    margin: float
    lam2: float
    delta_bar: float
    gamma_bar: float

    def as_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "margin": float(self.margin),
            "lam2": float(self.lam2),
            "delta_bar": float(self.delta_bar),
            "gamma_bar": float(self.gamma_bar),
        }


def check_parametric_condition(
    net: ReducedNetwork,
    params: DvocParams,
    effective_ref: np.ndarray,
    delta_bar: float,
    gamma_bar: float,
) -> Condition2Result:
    """Evaluate the parametric synchronization inequality.

    Requires max_k Re(e^{j phi} varsigma**_k) to stay below
    (1 + cos(delta_bar))/2 * (1 - gamma_bar)^2 * lam2(Re(e^{j phi} Y)),
    where delta_bar bounds pairwise eigenvector angle differences and
    gamma_bar bounds magnitude-ratio deviations from one.
    """
    if not 0.0 <= delta_bar < math.pi / 2.0:
        raise ConfigurationError(f"delta_bar must lie in [0, pi/2), got {delta_bar}")
    if not 0.0 <= gamma_bar < 1.0:
        raise ConfigurationError(f"gamma_bar must lie in [0, 1), got {gamma_bar}")
    ref = np.asarray(effective_ref, dtype=np.complex128)
    lhs = float(np.max((params.rotation * ref).real))
    lam2 = algebraic_connectivity(net, params.phi)
    rhs = 0.5 * (1.0 + math.cos(delta_bar)) * (1.0 - gamma_bar) ** 2 * lam2
    return Condition2Result(passed=lhs < rhs, lhs=lhs, rhs=rhs, margin=rhs - lhs,
                            lam2=lam2, delta_bar=delta_bar, gamma_bar=gamma_bar)


def eigenvector_spread(vec: np.ndarray) -> tuple[float, float]:
    """Actual (delta, gamma) spread of an eigenvector.

    delta is the largest pairwise angle difference (wrapped), gamma the
    largest deviation of pairwise magnitude ratios from one.  A zero
    entry yields gamma = inf.
    """
    vec = np.asarray(vec, dtype=np.complex128)
    mags = np.abs(vec)
    if np.any(mags == 0.0):
        return math.pi, math.inf
    ang = np.angle(vec)
    diff = ang[:, None] - ang[None, :]
    diff = (diff + math.pi) % (2.0 * math.pi) - math.pi
    delta = float(np.max(np.abs(diff)))
    ratio = float(mags.max() / mags.min())
    return delta, ratio - 1.0


def certified_parametric_condition(
    net: ReducedNetwork,
    params: DvocParams,
    effective_ref: np.ndarray,
    spec: Spectrum,
    delta_bar: float,
    gamma_bar: float,
) -> tuple[Condition2Result, bool, tuple[float, float]]:
    """Parametric inequality plus the a-posteriori eigenvector containment.

    Returns ``(inequality result, certified, (delta_actual, gamma_actual))``:
    certified means the inequality holds and the computed dominant
    eigenvector actually lies inside the assumed (delta_bar, gamma_bar)
    spread, which is what makes the parametric pass imply the spectral
    condition.
    """
    res = check_parametric_condition(net, params, effective_ref, delta_bar, gamma_bar)
    d_act, g_act = eigenvector_spread(spec.dominant_vector)
    contained = d_act <= delta_bar and g_act <= gamma_bar
    return res, bool(res.passed and contained), (d_act, g_act)


@dataclass
class ModalPrediction:
    """Dominant-mode response predicted from an initial state."""

    z0: complex
    lam: complex
    vec: np.ndarray
    degenerate: bool

    def at(self, t) -> np.ndarray:
        """Predicted modal voltages z0 * phi1 * e^{lam t}; rows follow t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.z0 * np.exp(self.lam * t)[:, None] * self.vec[None, :]


def modal_prediction(spec: Spectrum, v0: np.ndarray) -> ModalPrediction:
    """Project an initial state onto the dominant mode.

    Uses the bilinear pairing of the symmetric matrix: z0 =
    (phi1^T v0)/(phi1^T phi1).  ``degenerate`` flags |z0| below 1e-12 of
    the initial norm; the trajectory then collapses onto subdominant
    modes and decays instead of synchronizing.
    """
    v0 = np.asarray(v0, dtype=np.complex128)
    vec = spec.dominant_vector
    denom = complex(vec @ vec)
    if abs(denom) < 1e-12:
        raise NumericalError("dominant eigenvector is quasi-isotropic; "
                             "modal projection is ill-conditioned")
    z0 = complex(vec @ v0) / denom
    v0n = float(np.linalg.norm(v0))
    return ModalPrediction(z0=z0, lam=spec.dominant, vec=vec,
                           degenerate=abs(z0) < 1e-12 * max(v0n, 1e-300))


def eigenspace_distance(v: np.ndarray, vec: np.ndarray) -> float:
    """Normalized distance of a state from the dominant eigenspace.

    ||P v|| / ||v|| with P the orthogonal projector onto the complement
    of span{phi1}; zero exactly on the synchronized motion.
    """
    v = np.asarray(v, dtype=np.complex128)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0
    w = vec / np.linalg.norm(vec)
    resid = v - w * (w.conj() @ v)
    return float(np.linalg.norm(resid) / nv)


def lyapunov_v(v: np.ndarray, vec: np.ndarray) -> float:
    """Quadratic synchronization Lyapunov function 0.5*||P v||^2."""
    v = np.asarray(v, dtype=np.complex128)
    w = vec / np.linalg.norm(vec)
    resid = v - w * (w.conj() @ v)
    return 0.5 * float(np.real(resid.conj() @ resid))


@dataclass
class SyncVerdict:
    """Combined fast-system verdict for reporting."""

    condition1: Condition1Result
    condition2: Condition2Result | None
    certified: bool | None
    spread: tuple[float, float] | None
    predicted_sync: ComplexFrequency
    spectrum: Spectrum

    def as_dict(self) -> dict:
        out = {
            "condition1": self.condition1.as_dict(),
            "predicted_sync": {"eps": self.predicted_sync.eps,
                               "omega": self.predicted_sync.omega},
            "spectrum": self.spectrum.as_dict(),
        }
        if self.condition2 is not None:
            out["condition2"] = self.condition2.as_dict()
            out["condition2"]["certified"] = bool(self.certified)
            out["condition2"]["delta_actual"] = float(self.spread[0])
            out["condition2"]["gamma_actual"] = (
                None if math.isinf(self.spread[1]) else float(self.spread[1]))
        return out


def sync_verdict(
    sys: FastSystem,
    delta_bar: float | None = None,
    gamma_bar: float | None = None,
    entry_tol: float = _ENTRY_TOL,
) -> SyncVerdict:
    """Run the spectral (and optionally parametric) checks on a fast system."""
    spec = spectrum(sys)
    cond1 = check_spectral_condition(spec, entry_tol=entry_tol)
    cond2 = certified = spread = None
    if delta_bar is not None and gamma_bar is not None:
        if sys.network.laplacian:
            cond2, certified, spread = certified_parametric_condition(
                sys.network, sys.params, sys.effective_ref, spec, delta_bar, gamma_bar)
        else:
            warnings.warn("parametric condition skipped: network block is not a Laplacian",
                          stacklevel=2)
    lam = spec.dominant
    return SyncVerdict(condition1=cond1, condition2=cond2, certified=certified,
                       spread=spread, predicted_sync=ComplexFrequency(lam.real, lam.imag),
                       spectrum=spec)
