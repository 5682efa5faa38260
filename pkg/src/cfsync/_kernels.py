"""Fixed-step RK4 integration kernels.

This module carries the hot loops of the simulator twice: once as plain
loop code compiled with numba's @njit, and once as vectorized numpy for
environments without numba.  The active backend is selected at import
from the CFSYNC_BACKEND environment variable:

    auto   (default) numba when importable, numpy otherwise
    numba  require numba, fail if missing
    numpy  force the pure-numpy path

``get_kernels(backend)`` exposes both sets regardless of the active
choice, which is what the backend benchmark uses.

Kernel contract, shared by both backends: advance the state in place
over ``n_steps`` RK4 steps of size ``dt``, saving into ``out`` whenever
the global step index (``step0 + i``) is a multiple of ``stride``; the
caller has already written the row for ``step0``.  Return
``(steps_completed, status)`` with status 0 = completed, 1 = the state
norm exceeded the divergence limit (or went non-finite), 2 = a voltage
magnitude underflowed to zero where a logarithm was needed.  On nonzero
status the reported steps exclude the offending step, so every saved
row is valid.
"""

from __future__ import annotations

import importlib.util
import math
import os

import numpy as np

from .errors import ConfigurationError

__all__ = ["BACKEND", "HAS_NUMBA", "get_kernels", "active_kernels"]

_ENV_VAR = "CFSYNC_BACKEND"

# availability is probed without importing; compilation cost is paid only
# when a numba kernel set is actually requested
HAS_NUMBA = importlib.util.find_spec("numba") is not None


def _select_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ConfigurationError(
            f"{_ENV_VAR} must be one of auto/numba/numpy, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    if choice == "numba" and not HAS_NUMBA:
        raise ConfigurationError(f"{_ENV_VAR}=numba but numba is not importable")
    return "numba" if HAS_NUMBA else "numpy"


BACKEND = _select_backend()

_STATUS_OK = 0
_STATUS_DIVERGED = 1
_STATUS_ZERO_VOLTAGE = 2

# |v|^2 below this counts as a collapsed voltage for logarithm purposes.
_ZERO_V2 = 1e-280


# ---------------------------------------------------------------------------
# Loop bodies (numba-compilable).  Straight-line stage arithmetic; no
# allocation inside the step loop beyond the small stage buffers.
# ---------------------------------------------------------------------------

def _rk4_linear_loop(a, f, v, step0, n_steps, dt, stride, out, div2):
    n = v.shape[0]
    k1 = np.empty(n, np.complex128)
    k2 = np.empty(n, np.complex128)
    k3 = np.empty(n, np.complex128)
    k4 = np.empty(n, np.complex128)
    tmp = np.empty(n, np.complex128)
    for i in range(n_steps):
        for r in range(n):
            acc = f[r]
            for c in range(n):
                acc += a[r, c] * v[c]
            k1[r] = acc
        for r in range(n):
            tmp[r] = v[r] + 0.5 * dt * k1[r]
        for r in range(n):
            acc = f[r]
            for c in range(n):
                acc += a[r, c] * tmp[c]
            k2[r] = acc
        for r in range(n):
            tmp[r] = v[r] + 0.5 * dt * k2[r]
        for r in range(n):
            acc = f[r]
            for c in range(n):
                acc += a[r, c] * tmp[c]
            k3[r] = acc
        for r in range(n):
            tmp[r] = v[r] + dt * k3[r]
        for r in range(n):
            acc = f[r]
            for c in range(n):
                acc += a[r, c] * tmp[c]
            k4[r] = acc
        nrm2 = 0.0
        for r in range(n):
            v[r] = v[r] + (dt / 6.0) * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])
            nrm2 += v[r].real * v[r].real + v[r].imag * v[r].imag
        if not (nrm2 <= div2):  # catches NaN as well
            return i, _STATUS_DIVERGED
        g = step0 + i + 1
        if g % stride == 0:
            out[g // stride, :] = v
    return n_steps, _STATUS_OK


def _rk4_slow_loop(m, c0, ea, u_star, tau, th, uf, step0, n_steps, dt, stride,
                   out_th, out_uf, div2):
    n = th.shape[0]
    k1t = np.empty(n, np.complex128)
    k2t = np.empty(n, np.complex128)
    k3t = np.empty(n, np.complex128)
    k4t = np.empty(n, np.complex128)
    k1u = np.empty(n, np.float64)
    k2u = np.empty(n, np.float64)
    k3u = np.empty(n, np.float64)
    k4u = np.empty(n, np.float64)
    tt = np.empty(n, np.complex128)
    tu = np.empty(n, np.float64)
    for i in range(n_steps):
        for r in range(n):
            acc = c0[r] + ea * (u_star[r] - uf[r])
            for cc in range(n):
                acc += m[r, cc] * th[cc]
            k1t[r] = acc
            k1u[r] = (th[r].real - uf[r]) / tau
        for r in range(n):
            tt[r] = th[r] + 0.5 * dt * k1t[r]
            tu[r] = uf[r] + 0.5 * dt * k1u[r]
        for r in range(n):
            acc = c0[r] + ea * (u_star[r] - tu[r])
            for cc in range(n):
                acc += m[r, cc] * tt[cc]
            k2t[r] = acc
            k2u[r] = (tt[r].real - tu[r]) / tau
        for r in range(n):
            tt[r] = th[r] + 0.5 * dt * k2t[r]
            tu[r] = uf[r] + 0.5 * dt * k2u[r]
        for r in range(n):
            acc = c0[r] + ea * (u_star[r] - tu[r])
            for cc in range(n):
                acc += m[r, cc] * tt[cc]
            k3t[r] = acc
            k3u[r] = (tt[r].real - tu[r]) / tau
        for r in range(n):
            tt[r] = th[r] + dt * k3t[r]
            tu[r] = uf[r] + dt * k3u[r]
        for r in range(n):
            acc = c0[r] + ea * (u_star[r] - tu[r])
            for cc in range(n):
                acc += m[r, cc] * tt[cc]
            k4t[r] = acc
            k4u[r] = (tt[r].real - tu[r]) / tau
        nrm2 = 0.0
        for r in range(n):
            th[r] = th[r] + (dt / 6.0) * (k1t[r] + 2.0 * k2t[r] + 2.0 * k3t[r] + k4t[r])
            uf[r] = uf[r] + (dt / 6.0) * (k1u[r] + 2.0 * k2u[r] + 2.0 * k3u[r] + k4u[r])
            nrm2 += th[r].real * th[r].real + th[r].imag * th[r].imag + uf[r] * uf[r]
        if not (nrm2 <= div2):
            return i, _STATUS_DIVERGED
        g = step0 + i + 1
        if g % stride == 0:
            out_th[g // stride, :] = th
            out_uf[g // stride, :] = uf
    return n_steps, _STATUS_OK


def _rk4_nonlinear_loop(m2, g_f, k_rot, jw0, ea, u_star, tau, use_filter,
                        v, uf, step0, n_steps, dt, stride, out_v, out_uf, div2):
    n = v.shape[0]
    k1v = np.empty(n, np.complex128)
    k2v = np.empty(n, np.complex128)
    k3v = np.empty(n, np.complex128)
    k4v = np.empty(n, np.complex128)
    k1u = np.empty(n, np.float64)
    k2u = np.empty(n, np.float64)
    k3u = np.empty(n, np.float64)
    k4u = np.empty(n, np.float64)
    tv = np.empty(n, np.complex128)
    tu = np.empty(n, np.float64)
    for i in range(n_steps):
        bad = False
        for r in range(n):
            v2 = v[r].real * v[r].real + v[r].imag * v[r].imag
            if v2 < _ZERO_V2:
                bad = True
                break
            lnv = 0.5 * math.log(v2)
            acc = -g_f[r]
            for cc in range(n):
                acc += m2[r, cc] * v[cc]
            if use_filter:
                k1v[r] = jw0 * v[r] + k_rot * acc + ea * (u_star[r] - uf[r]) * v[r]
                k1u[r] = (lnv - uf[r]) / tau
            else:
                k1v[r] = jw0 * v[r] + k_rot * acc + ea * (u_star[r] - lnv) * v[r]
                k1u[r] = 0.0
        if bad:
            return i, _STATUS_ZERO_VOLTAGE
        for r in range(n):
            tv[r] = v[r] + 0.5 * dt * k1v[r]
            tu[r] = uf[r] + 0.5 * dt * k1u[r]
        for r in range(n):
            v2 = tv[r].real * tv[r].real + tv[r].imag * tv[r].imag
            if v2 < _ZERO_V2:
                bad = True
                break
            lnv = 0.5 * math.log(v2)
            acc = -g_f[r]
            for cc in range(n):
                acc += m2[r, cc] * tv[cc]
            if use_filter:
                k2v[r] = jw0 * tv[r] + k_rot * acc + ea * (u_star[r] - tu[r]) * tv[r]
                k2u[r] = (lnv - tu[r]) / tau
            else:
                k2v[r] = jw0 * tv[r] + k_rot * acc + ea * (u_star[r] - lnv) * tv[r]
                k2u[r] = 0.0
        if bad:
            return i, _STATUS_ZERO_VOLTAGE
        for r in range(n):
            tv[r] = v[r] + 0.5 * dt * k2v[r]
            tu[r] = uf[r] + 0.5 * dt * k2u[r]
        for r in range(n):
            v2 = tv[r].real * tv[r].real + tv[r].imag * tv[r].imag
            if v2 < _ZERO_V2:
                bad = True
                break
            lnv = 0.5 * math.log(v2)
            acc = -g_f[r]
            for cc in range(n):
                acc += m2[r, cc] * tv[cc]
            if use_filter:
                k3v[r] = jw0 * tv[r] + k_rot * acc + ea * (u_star[r] - tu[r]) * tv[r]
                k3u[r] = (lnv - tu[r]) / tau
            else:
                k3v[r] = jw0 * tv[r] + k_rot * acc + ea * (u_star[r] - lnv) * tv[r]
                k3u[r] = 0.0
        if bad:
            return i, _STATUS_ZERO_VOLTAGE
        for r in range(n):
            tv[r] = v[r] + dt * k3v[r]
            tu[r] = uf[r] + dt * k3u[r]
        for r in range(n):
            v2 = tv[r].real * tv[r].real + tv[r].imag * tv[r].imag
            if v2 < _ZERO_V2:
                bad = True
                break
            lnv = 0.5 * math.log(v2)
            acc = -g_f[r]
            for cc in range(n):
                acc += m2[r, cc] * tv[cc]
            if use_filter:
                k4v[r] = jw0 * tv[r] + k_rot * acc + ea * (u_star[r] - tu[r]) * tv[r]
                k4u[r] = (lnv - tu[r]) / tau
            else:
                k4v[r] = jw0 * tv[r] + k_rot * acc + ea * (u_star[r] - lnv) * tv[r]
                k4u[r] = 0.0
        if bad:
            return i, _STATUS_ZERO_VOLTAGE
        nrm2 = 0.0
        for r in range(n):
            v[r] = v[r] + (dt / 6.0) * (k1v[r] + 2.0 * k2v[r] + 2.0 * k3v[r] + k4v[r])
            uf[r] = uf[r] + (dt / 6.0) * (k1u[r] + 2.0 * k2u[r] + 2.0 * k3u[r] + k4u[r])
            nrm2 += v[r].real * v[r].real + v[r].imag * v[r].imag + uf[r] * uf[r]
        if not (nrm2 <= div2):
            return i, _STATUS_DIVERGED
        g = step0 + i + 1
        if g % stride == 0:
            out_v[g // stride, :] = v
            out_uf[g // stride, :] = uf
    return n_steps, _STATUS_OK


# ---------------------------------------------------------------------------
# Vectorized numpy fallbacks.  Same contract, same results up to BLAS
# summation order.
# ---------------------------------------------------------------------------

def _rk4_linear_numpy(a, f, v, step0, n_steps, dt, stride, out, div2):
    h = dt
    for i in range(n_steps):
        k1 = a @ v + f
        k2 = a @ (v + 0.5 * h * k1) + f
        k3 = a @ (v + 0.5 * h * k2) + f
        k4 = a @ (v + h * k3) + f
        v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        nrm2 = float(np.real(np.vdot(v, v)))
        if not nrm2 <= div2:
            return i, _STATUS_DIVERGED
        g = step0 + i + 1
        if g % stride == 0:
            out[g // stride, :] = v
    return n_steps, _STATUS_OK


def _rk4_slow_numpy(m, c0, ea, u_star, tau, th, uf, step0, n_steps, dt, stride,
                    out_th, out_uf, div2):
    h = dt

    def deriv(t, u):
        return c0 + m @ t + ea * (u_star - u), (t.real - u) / tau

    for i in range(n_steps):
        k1t, k1u = deriv(th, uf)
        k2t, k2u = deriv(th + 0.5 * h * k1t, uf + 0.5 * h * k1u)
        k3t, k3u = deriv(th + 0.5 * h * k2t, uf + 0.5 * h * k2u)
        k4t, k4u = deriv(th + h * k3t, uf + h * k3u)
        th += (h / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        uf += (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        nrm2 = float(np.real(np.vdot(th, th))) + float(uf @ uf)
        if not nrm2 <= div2:
            return i, _STATUS_DIVERGED
        g = step0 + i + 1
        if g % stride == 0:
            out_th[g // stride, :] = th
            out_uf[g // stride, :] = uf
    return n_steps, _STATUS_OK


def _rk4_nonlinear_numpy(m2, g_f, k_rot, jw0, ea, u_star, tau, use_filter,
                         v, uf, step0, n_steps, dt, stride, out_v, out_uf, div2):
    h = dt
    state = {"bad": False}

    def deriv(vv, uu):
        v2 = vv.real * vv.real + vv.imag * vv.imag
        if np.any(v2 < _ZERO_V2):
            state["bad"] = True
            return vv, uu
        lnv = 0.5 * np.log(v2)
        core = jw0 * vv + k_rot * (m2 @ vv - g_f)
        if use_filter:
            return core + ea * (u_star - uu) * vv, (lnv - uu) / tau
        return core + ea * (u_star - lnv) * vv, np.zeros_like(uu)

    for i in range(n_steps):
        k1v, k1u = deriv(v, uf)
        k2v, k2u = deriv(v + 0.5 * h * k1v, uf + 0.5 * h * k1u)
        k3v, k3u = deriv(v + 0.5 * h * k2v, uf + 0.5 * h * k2u)
        k4v, k4u = deriv(v + h * k3v, uf + h * k3u)
        if state["bad"]:
            return i, _STATUS_ZERO_VOLTAGE
        v += (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        uf += (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        nrm2 = float(np.real(np.vdot(v, v))) + float(uf @ uf)
        if not nrm2 <= div2:
            return i, _STATUS_DIVERGED
        g = step0 + i + 1
        if g % stride == 0:
            out_v[g // stride, :] = v
            out_uf[g // stride, :] = uf
    return n_steps, _STATUS_OK


_PY_KERNELS = {
    "linear": _rk4_linear_numpy,
    "slow": _rk4_slow_numpy,
    "nonlinear": _rk4_nonlinear_numpy,
}

_LOOP_BODIES = {
    "linear": _rk4_linear_loop,
    "slow": _rk4_slow_loop,
    "nonlinear": _rk4_nonlinear_loop,
}

_numba_kernels: dict | None = None


def get_kernels(backend: str) -> dict:
    """Kernel set for an explicit backend name ('numba' or 'numpy')."""
    global _numba_kernels
    if backend == "numpy":
        return _PY_KERNELS
    if backend != "numba":
        raise ConfigurationError(f"unknown backend {backend!r}")
    if not HAS_NUMBA:
        raise ConfigurationError("numba backend requested but numba is not importable")
    if _numba_kernels is None:
        import numba
        jit = numba.njit(cache=True, fastmath=False)
        _numba_kernels = {name: jit(fn) for name, fn in _LOOP_BODIES.items()}
    return _numba_kernels


def active_kernels() -> dict:
    """Kernel set for the backend selected at import."""
    return get_kernels(BACKEND)
