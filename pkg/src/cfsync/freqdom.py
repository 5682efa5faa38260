"""Frequency-domain stability tests on the dynamic branch model.

Unlike the algebraic analyses, branches are kept as dynamic RL elements
here, with admittance 1/(r + l s) in stationary coordinates.  Two tests
are provided:

* ``criterion_sync`` aggregates the whole circuit into one rational
  driving-point admittance at a chosen converter port and counts its
  right-half-plane zeros by the argument principle.  At most one such
  zero (the mode the slow dynamics regulate) is tolerated.
* ``criterion_voltage`` closes the quasi-static two-channel loop of the
  slow dynamics and requires zero encirclements of the origin by
  det(I + L(s)).

Both have an independent cross-check: the assembled converter+branch
state matrix for the first, the slow error spectrum for the second.
Keep the routes separate; their agreement is what the test suite
certifies.

Rational bookkeeping happens in a scaled variable sigma = s/scale so
coefficient magnitudes stay balanced; determinants of the rational
nodal matrix are interpolated from samples on the unit circle, which is
exact because spanning-forest expansion bounds the cleared degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import numpy.polynomial.polynomial as npp

from .controllers import DvocParams, effective_reference
from .errors import (ConfigurationError, NumericalError,
                     UnsupportedConfigurationError)
from .network import ReducedNetwork
from .slow import SlowSystem

__all__ = [
    "RationalTF", "ScaledRational", "BranchModel", "NyquistCurve",
    "converter_admittance_fast", "converter_admittance_slow",
    "rl_branches_from_reduced", "aggregated_admittance", "nyquist_curve",
    "winding_number", "criterion_sync", "criterion_voltage",
    "coupled_state_matrix", "state_space_verdict",
    "SyncCriterionResult", "VoltageCriterionResult", "StateSpaceVerdict",
]

_TRIM_REL = 1e-11


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=complex)
    if c.size == 0:
        return np.zeros(1, dtype=complex)
    top = np.abs(c).max()
    if top == 0.0:
        return np.zeros(1, dtype=complex)
    keep = np.nonzero(np.abs(c) > _TRIM_REL * top)[0]
    return c[: keep[-1] + 1].copy()


class RationalTF:
    """Ratio of two polynomials, coefficients in ascending powers."""

    def __init__(self, num, den):
        self.num = _trim(num)
        self.den = _trim(den)
        if self.den.size == 1 and self.den[0] == 0.0:
            raise ConfigurationError("zero denominator polynomial")

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        return npp.polyval(s, self.num) / npp.polyval(s, self.den)

    @property
    def num_degree(self) -> int:
        return self.num.size - 1

    @property
    def den_degree(self) -> int:
        return self.den.size - 1

    def poles(self) -> np.ndarray:
        if self.den.size == 1:
            return np.zeros(0, dtype=complex)
        return npp.polyroots(self.den)

    def zeros(self) -> np.ndarray:
        if self.num.size == 1:
            return np.zeros(0, dtype=complex)
        return npp.polyroots(self.num)

    def __mul__(self, other):
        if isinstance(other, RationalTF):
            return RationalTF(npp.polymul(self.num, other.num),
                              npp.polymul(self.den, other.den))
        return RationalTF(self.num * other, self.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, RationalTF):
            return RationalTF(npp.polymul(self.num, other.den),
                              npp.polymul(self.den, other.num))
        return RationalTF(self.num / other, self.den)

    def __add__(self, other):
        if not isinstance(other, RationalTF):
            other = RationalTF([complex(other)], [1.0])
        num = npp.polyadd(npp.polymul(self.num, other.den),
                          npp.polymul(other.num, self.den))
        return RationalTF(num, npp.polymul(self.den, other.den))

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, RationalTF):
            other = RationalTF([complex(other)], [1.0])
        return self + (other * (-1.0))

    def __neg__(self):
        return self * (-1.0)

    def simplify(self, tol: float = 1e-7) -> "RationalTF":
        """Cancel numerator/denominator root pairs closer than tol."""
        zs = list(self.zeros())
        ps = list(self.poles())
        kept_z = []
        for z in zs:
            hit = None
            for i, p in enumerate(ps):
                if abs(z - p) <= tol * max(1.0, abs(z)):
                    hit = i
                    break
            if hit is None:
                kept_z.append(z)
            else:
                ps.pop(hit)
        lead = (self.num[-1] / self.den[-1])
        num = npp.polyfromroots(kept_z) * lead if kept_z else np.array([lead])
        den = npp.polyfromroots(ps) if ps else np.array([1.0 + 0j])
        return RationalTF(num, den)


@dataclass(frozen=True)
class ScaledRational:
    """Rational function stored in sigma = s/scale for balanced coefficients."""

    tf: RationalTF
    scale: float

    def __call__(self, s):
        return self.tf(np.asarray(s, dtype=complex) / self.scale)

    def poles(self) -> np.ndarray:
        return self.tf.poles() * self.scale

    def zeros(self) -> np.ndarray:
        return self.tf.zeros() * self.scale

    def simplify(self, tol: float = 1e-7) -> "ScaledRational":
        return ScaledRational(self.tf.simplify(tol), self.scale)


@dataclass(frozen=True)
class BranchModel:
    """Equivalent series r-l element; to_node None grounds the branch."""

    from_node: int
    to_node: int | None
    r: float
    ell: float


def converter_admittance_fast(params: DvocParams, ref: complex) -> RationalTF:
    """Port admittance of one fast-linearized converter, in s."""
    rot = np.exp(-1j * params.phi) / params.eta
    return RationalTF([-1j * params.omega0 * rot - ref, rot], [1.0])


def converter_admittance_slow(params: DvocParams) -> tuple[RationalTF, RationalTF]:
    """Quasi-static two-channel port admittances (log-magnitude, angle)."""
    eta, alpha, tau = params.eta, params.alpha, params.tau
    y_u = RationalTF([eta * alpha, 1.0, tau], [eta, eta * tau])
    y_th = RationalTF([0.0, 1.0], [eta])
    return y_u, y_th


def rl_branches_from_reduced(net: ReducedNetwork, omega0: float,
                             rel_tol: float = 1e-9) -> list[BranchModel]:
    """Recover series r-l elements from a reduced admittance matrix.

    Off-diagonal entries map to node-to-node branches and nonzero row
    sums to grounded ones.  Capacitive or active equivalents cannot be
    represented by this element and are rejected.
    """
    y = net.y
    n = net.n
    top = np.abs(y).max()
    if top == 0.0:
        raise ConfigurationError("empty network")
    cut = rel_tol * top
    branches: list[BranchModel] = []

    def from_admittance(k, l, y_val):
        z = 1.0 / y_val
        r, x = z.real, z.imag
        if r < 0.0:
            if abs(r) <= rel_tol * abs(z):
                r = 0.0
            else:
                raise UnsupportedConfigurationError(
                    f"equivalent branch {k}-{l if l is not None else 'ground'} "
                    f"has negative resistance {r:.3e}")
        if x < 0.0:
            if abs(x) <= rel_tol * abs(z):
                x = 0.0
            else:
                raise UnsupportedConfigurationError(
                    f"equivalent branch {k}-{l if l is not None else 'ground'} "
                    f"is capacitive and has no series r-l form")
        branches.append(BranchModel(k, l, r, x / omega0))

    for k in range(n):
        for l in range(k + 1, n):
            if abs(y[k, l]) > cut:
                from_admittance(k, l, -y[k, l])
    row_sums = y.sum(axis=1)
    for k in range(n):
        if abs(row_sums[k]) > cut:
            from_admittance(k, None, row_sums[k])
    return branches


def _branch_admittance_samples(br: BranchModel, s: np.ndarray) -> np.ndarray:
    return 1.0 / (br.r + br.ell * s)


def _nodal_matrix_samples(branches, y_conv, n, s: np.ndarray) -> np.ndarray:
    """Stacked rational nodal matrix at the sample points s (m, n, n)."""
    m = np.zeros((s.size, n, n), dtype=complex)
    for br in branches:
        yb = _branch_admittance_samples(br, s)
        k = br.from_node
        m[:, k, k] += yb
        if br.to_node is not None:
            l = br.to_node
            m[:, l, l] += yb
            m[:, k, l] -= yb
            m[:, l, k] -= yb
    if y_conv is not None:
        idx = np.arange(n)
        m[:, idx, idx] += y_conv.T
    return m


def aggregated_admittance(net: ReducedNetwork, params: DvocParams, setpoints,
                          *, port: int = 0, u_f=None,
                          dynamic: bool = True) -> ScaledRational:
    """Driving-point admittance at one converter port, everything else in.

    All other converters and every branch stay inside the aggregate; the
    result's zeros are the closed-loop modes of the full model and its
    poles the modes with the port grounded.  With ``dynamic`` the
    branches carry their r-l transients; without it they sit at their
    phasor values and the closed-loop modes reduce to the eigenvalues of
    the fast system matrix.  Numerator and denominator are interpolated
    from cleared determinant samples on a circle of radius max(omega0, 1).
    """
    n = net.n
    if not 0 <= port < n:
        raise ConfigurationError(f"port index {port} out of range")
    setpoints = list(setpoints)
    if len(setpoints) != n:
        raise ConfigurationError("one setpoint per converter node is required")
    omega0 = params.omega0
    branches = rl_branches_from_reduced(net, omega0) if dynamic else []
    scale = max(omega0, 1.0)

    if u_f is None:
        u_f = np.array([sp.u_star for sp in setpoints], dtype=float)
    refs = np.array([
        effective_reference(params, sp, float(uf_k), shift)
        for sp, uf_k, shift in zip(setpoints, u_f, net.setpoint_shift)
    ])
    rot = np.exp(-1j * params.phi) / params.eta
    # converter admittance in sigma: c0 + c1*sigma with s = scale*sigma
    c0 = -1j * omega0 * rot - refs
    c1 = rot * scale

    deg_bound = len(branches) + n + 4
    size = 1 << max(4, math.ceil(math.log2(deg_bound + 1)))
    ang = (np.arange(size) + 0.5) * (2.0 * np.pi / size)
    sig = np.exp(1j * ang)
    s = scale * sig

    y_conv = c0[:, None] + c1 * sig[None, :]

    if dynamic:
        m_full = _nodal_matrix_samples(branches, y_conv, n, s)
    else:
        m_full = np.broadcast_to(net.y, (size, n, n)).copy()
        idx = np.arange(n)
        m_full[:, idx, idx] += y_conv.T
    # grounding the port removes its row, column and converter in one cut
    keep = [k for k in range(n) if k != port]
    m_minor = m_full[:, keep][:, :, keep]

    clear = np.ones(size, dtype=complex)
    for br in branches:
        clear *= br.r + br.ell * s

    g_full = np.linalg.det(m_full) * clear
    g_minor = np.linalg.det(m_minor) * clear
    if not (np.all(np.isfinite(g_full)) and np.all(np.isfinite(g_minor))):
        raise NumericalError("determinant samples overflowed")

    twiddle = np.exp(-1j * 0.5 * (2.0 * np.pi / size) * np.arange(size))
    num = np.fft.fft(g_full) * twiddle / size
    den = np.fft.fft(g_minor) * twiddle / size
    return ScaledRational(RationalTF(num, den), scale).simplify()


# ---------------------------------------------------------------------------
# Contours and winding numbers
# ---------------------------------------------------------------------------

@dataclass
class NyquistCurve:
    s: np.ndarray
    values: np.ndarray
    winding: int
    residual: float
    segments: list = field(default_factory=list, repr=False)


def _axis_grid(lo: float, hi: float, omega0: float) -> np.ndarray:
    """Initial frequencies for an axis piece: log coverage + dense band."""
    pts = [lo, hi]
    floor = 1e-4
    for sign in (-1.0, 1.0):
        a = max(floor, min(abs(lo), abs(hi)) if lo * hi > 0 else floor)
        b = max(abs(lo), abs(hi))
        if b > a:
            g = sign * np.logspace(np.log10(a), np.log10(b), 160)
            pts.extend(g[(g >= lo) & (g <= hi)].tolist())
    band = np.linspace(-3.0 * omega0, 3.0 * omega0, 481)
    pts.extend(band[(band >= lo) & (band <= hi)].tolist())
    out = np.unique(np.asarray(pts, dtype=float))
    return out


def _refine_segment(fun, to_s, t: np.ndarray, max_angle: float,
                    max_rounds: int = 36, max_points: int = 200_000):
    s = to_s(t)
    f = np.asarray(fun(s), dtype=complex)
    for _ in range(max_rounds):
        if np.any(f == 0.0) or not np.all(np.isfinite(f)):
            raise NumericalError("response hit zero or overflowed on the contour")
        step = np.abs(np.angle(f[1:] / f[:-1]))
        bad = step > max_angle
        if not bad.any():
            return t, s, f, True
        if t.size + bad.sum() > max_points:
            break
        tm = 0.5 * (t[:-1][bad] + t[1:][bad])
        sm = to_s(tm)
        fm = np.asarray(fun(sm), dtype=complex)
        pos = np.nonzero(bad)[0] + 1
        t = np.insert(t, pos, tm)
        s = np.insert(s, pos, sm)
        f = np.insert(f, pos, fm)
    return t, s, f, False


def nyquist_curve(fun, axis_poles, *, omega0: float, omega_max: float = 1e6,
                  indent: float = 1e-4, max_angle: float = 0.1) -> NyquistCurve:
    """Image of the right-half-plane boundary under ``fun``.

    The contour runs up the imaginary axis from -j*omega_max to
    +j*omega_max, skirting each listed axis pole through a small
    semicircle into the right half plane, then closes clockwise through
    the arc at radius omega_max.  Samples are refined until consecutive
    phase steps stay below ``max_angle``; the winding number about the
    origin must come out near an integer.
    """
    if omega_max <= 0 or indent <= 0:
        raise ConfigurationError("contour dimensions must be positive")
    centers = sorted(float(w) for w in axis_poles)
    merged: list[list[float]] = []
    for w in centers:
        if merged and w - merged[-1][-1] <= 2.5 * indent:
            merged[-1].append(w)
        else:
            merged.append([w])
    arcs = []
    for group in merged:
        mid = 0.5 * (group[0] + group[-1])
        rad = indent + 0.5 * (group[-1] - group[0])
        if abs(mid) + rad >= omega_max:
            raise ConfigurationError("axis pole too close to the outer arc")
        arcs.append((mid, rad))

    segments = []
    cursor = -omega_max
    for mid, rad in arcs:
        if mid - rad > cursor:
            segments.append(("axis", cursor, mid - rad))
        segments.append(("indent", mid, rad))
        cursor = mid + rad
    if cursor < omega_max:
        segments.append(("axis", cursor, omega_max))
    segments.append(("arc", omega_max))

    all_s = []
    all_f = []
    resolved = True
    seg_spans = []
    for seg in segments:
        if seg[0] == "axis":
            lo, hi = seg[1], seg[2]
            grid = _axis_grid(lo, hi, omega0)

            def to_s(w):
                return 1j * np.asarray(w, dtype=float)

            t0 = grid
        elif seg[0] == "indent":
            mid, rad = seg[1], seg[2]

            def to_s(th, mid=mid, rad=rad):
                return 1j * mid + rad * np.exp(1j * np.asarray(th, dtype=float))

            t0 = np.linspace(-np.pi / 2.0, np.pi / 2.0, 33)
        else:
            radius = seg[1]

            def to_s(th, radius=radius):
                return radius * np.exp(1j * np.asarray(th, dtype=float))

            t0 = np.linspace(np.pi / 2.0, -np.pi / 2.0, 129)
        _, s_seg, f_seg, ok = _refine_segment(fun, to_s, t0, max_angle)
        resolved = resolved and ok
        start = sum(len(x) for x in all_s)
        seg_spans.append((seg[0], start, start + len(s_seg)))
        all_s.append(s_seg)
        all_f.append(f_seg)

    s = np.concatenate(all_s)
    f = np.concatenate(all_f)
    # close the loop back to the starting point
    f_closed = np.append(f, f[0])
    steps = np.angle(f_closed[1:] / f_closed[:-1])
    if not resolved and np.abs(steps).max() > max_angle:
        small = np.abs(f).min() < 1e-9 * np.median(np.abs(f))
        raise NumericalError(
            "phase could not be resolved on the contour"
            + (" (a root lies on or next to it)" if small else ""))
    total = float(steps.sum() / (2.0 * np.pi))
    winding = int(round(total))
    residual = abs(total - winding)
    if residual > 0.01:
        raise NumericalError(f"winding number is not an integer: {total:.4f}")
    return NyquistCurve(s, f, winding, residual, seg_spans)


def winding_number(values: np.ndarray) -> tuple[int, float]:
    """Turns of a closed sampled curve around the origin."""
    f = np.asarray(values, dtype=complex)
    if np.any(f == 0.0):
        raise NumericalError("curve passes through the origin")
    f_closed = np.append(f, f[0])
    total = float(np.angle(f_closed[1:] / f_closed[:-1]).sum() / (2.0 * np.pi))
    w = int(round(total))
    return w, abs(total - w)


# ---------------------------------------------------------------------------
# The two frequency-domain tests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyncCriterionResult:
    passed: bool
    rhp_zeros: int
    rhp_poles: int
    winding: int
    residual: float
    admittance: ScaledRational
    curve: NyquistCurve

    def as_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "rhp_zeros": int(self.rhp_zeros),
            "rhp_poles": int(self.rhp_poles),
            "winding": int(self.winding),
            "residual": float(self.residual),
        }


@dataclass(frozen=True)
class VoltageCriterionResult:
    passed: bool
    winding: int
    residual: float
    curve: NyquistCurve

    def as_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "winding": int(self.winding),
            "residual": float(self.residual),
        }


def criterion_sync(net: ReducedNetwork, params: DvocParams, setpoints, *,
                   port: int = 0, u_f=None, dynamic: bool = True,
                   omega_max: float = 1e6, indent: float = 1e-4,
                   max_angle: float = 0.1) -> SyncCriterionResult:
    """Count right-half-plane modes through the aggregated admittance.

    Modes on the axis band |Re| <= indent/2 are skirted and not counted.
    Passing means at most one strictly unstable mode, the budget the
    slow regulation is allowed to consume.  ``dynamic`` selects between
    r-l branch transients and the phasor (static) network.
    """
    agg = aggregated_admittance(net, params, setpoints, port=port, u_f=u_f,
                                dynamic=dynamic)
    poles = agg.poles()
    band = indent / 2.0
    axis = [p.imag for p in poles if abs(p.real) <= band]
    p_count = int(np.sum(poles.real > band))
    curve = nyquist_curve(agg, axis, omega0=params.omega0,
                          omega_max=omega_max, indent=indent,
                          max_angle=max_angle)
    z_count = p_count - curve.winding
    if z_count < 0:
        raise NumericalError(
            f"argument principle inconsistency: {z_count} zeros from "
            f"{p_count} poles and winding {curve.winding}")
    return SyncCriterionResult(z_count <= 1, z_count, p_count, curve.winding,
                               curve.residual, agg, curve)


def _two_channel_expand(c: np.ndarray) -> np.ndarray:
    n = c.shape[0]
    k = np.zeros((2 * n, 2 * n), dtype=float)
    k[0::2, 0::2] = c.real
    k[0::2, 1::2] = -c.imag
    k[1::2, 0::2] = c.imag
    k[1::2, 1::2] = c.real
    return k


def criterion_voltage(sys: SlowSystem, *, omega_max: float = 1e6,
                      indent: float = 1e-4,
                      max_angle: float = 0.1) -> VoltageCriterionResult:
    """Zero-encirclement test for the slow two-channel loop.

    The loop gain is L(s) = Yc(s)^{-1} K with Yc the diagonal converter
    pair and K the rotated network matrix expanded into 2x2 real blocks.
    L has no poles in the open right half plane, so det(I + L) must not
    wind around the origin at all.
    """
    params = sys.params
    k_mat = _two_channel_expand(sys.g + 1j * sys.b)
    y_u, y_th = converter_admittance_slow(params)
    n2 = k_mat.shape[0]
    eye = np.eye(n2)

    def fun(s):
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        yu = y_u(s)
        yt = y_th(s)
        d = np.empty((s.size, n2), dtype=complex)
        d[:, 0::2] = (1.0 / yu)[:, None]
        d[:, 1::2] = (1.0 / yt)[:, None]
        mats = eye[None, :, :] + d[:, :, None] * k_mat[None, :, :]
        return np.linalg.det(mats)

    curve = nyquist_curve(fun, [0.0], omega0=params.omega0,
                          omega_max=omega_max, indent=indent,
                          max_angle=max_angle)
    return VoltageCriterionResult(curve.winding == 0, curve.winding,
                                  curve.residual, curve)


# ---------------------------------------------------------------------------
# State-space cross-check for the dynamic branch model
# ---------------------------------------------------------------------------

def coupled_state_matrix(net: ReducedNetwork, params: DvocParams, setpoints,
                         *, u_f=None) -> np.ndarray:
    """State matrix of converters plus dynamic branch currents.

    Inductive branches contribute one complex current state each;
    purely resistive equivalents are folded algebraically into the
    voltage rows.  Eigenvalues of this matrix are the reference answer
    the aggregated-admittance test is compared against.
    """
    n = net.n
    setpoints = list(setpoints)
    if len(setpoints) != n:
        raise ConfigurationError("one setpoint per converter node is required")
    if u_f is None:
        u_f = np.array([sp.u_star for sp in setpoints], dtype=float)
    refs = np.array([
        effective_reference(params, sp, float(uf_k), shift)
        for sp, uf_k, shift in zip(setpoints, u_f, net.setpoint_shift)
    ])
    branches = rl_branches_from_reduced(net, params.omega0)
    dyn = [b for b in branches if b.ell > 0.0]
    res = [b for b in branches if b.ell == 0.0]
    e = len(dyn)
    rot = params.eta * params.rotation

    g_res = np.zeros((n, n), dtype=complex)
    for br in res:
        y = 1.0 / br.r
        k = br.from_node
        g_res[k, k] += y
        if br.to_node is not None:
            l = br.to_node
            g_res[l, l] += y
            g_res[k, l] -= y
            g_res[l, k] -= y

    inc = np.zeros((n, e), dtype=float)
    for col, br in enumerate(dyn):
        inc[br.from_node, col] = 1.0
        if br.to_node is not None:
            inc[br.to_node, col] = -1.0

    a = np.zeros((n + e, n + e), dtype=complex)
    a[:n, :n] = np.diag(1j * params.omega0 + rot * refs) - rot * g_res
    a[:n, n:] = -rot * inc
    if e:
        ell = np.array([br.ell for br in dyn])
        rr = np.array([br.r for br in dyn])
        a[n:, :n] = (inc / ell).T
        a[n:, n:] = np.diag(-rr / ell)
    return a


@dataclass(frozen=True)
class StateSpaceVerdict:
    passed: bool
    rhp_count: int
    eigenvalues: np.ndarray

    def as_dict(self) -> dict:
        return {"passed": bool(self.passed), "rhp_count": int(self.rhp_count)}


def state_space_verdict(matrix: np.ndarray,
                        axis_tol: float = 5e-5) -> StateSpaceVerdict:
    """Mode count of the assembled model, same axis band as the contour."""
    lam = np.linalg.eigvals(np.asarray(matrix, dtype=complex))
    order = np.lexsort((lam.imag, -lam.real))
    lam = lam[order]
    rhp = int(np.sum(lam.real > axis_tol))
    return StateSpaceVerdict(rhp <= 1, rhp, lam)
