"""Time-domain simulation of converter networks.

Six model kinds share one fixed-step RK4 driver: the two nonlinear
oscillator variants, their fast (voltage) and slow (angle) linearized
companions, and the latter two again with a synchronous-generator
boundary attached.  Events re-tune setpoints or the voltage-regulation
gain mid-run; integration restarts at the event step with rebuilt
constants, so results are identical to running the segments separately.

States are saved on a uniform sub-grid of the step grid.  The horizon
is extended to the next save point when the two grids do not meet at
``t_end``, which keeps every saved row exactly ``stride`` steps apart.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _kernels
from .controllers import ControlVariant, DvocParams, Setpoints
from .coords import angle_series
from .errors import ConfigurationError, DomainError
from .fast import build_fast_system
from .network import ReducedNetwork
from .slow import build_slow_system

__all__ = [
    "ModelKind", "SetpointChange", "GainChange", "SgBoundary", "Trajectory",
    "SyncResult", "ModelComparison", "simulate", "detect_sync",
    "invariance_metrics", "compare_models", "exact_linear_trajectory",
]


class ModelKind(enum.Enum):
    NONLINEAR_FILTERED = "nonlinear_filtered"
    NONLINEAR_LOG = "nonlinear_log"
    FAST_LINEAR = "fast_linear"
    SLOW_LINEAR = "slow_linear"
    FAST_AUG = "fast_aug"
    SLOW_AUG = "slow_aug"


_SLOW_KINDS = (ModelKind.SLOW_LINEAR, ModelKind.SLOW_AUG)
_AUG_KINDS = (ModelKind.FAST_AUG, ModelKind.SLOW_AUG)
_NONLINEAR_KINDS = (ModelKind.NONLINEAR_FILTERED, ModelKind.NONLINEAR_LOG)

_STATUS_NAMES = {0: "completed", 1: "diverged", 2: "zero_voltage"}


@dataclass(frozen=True)
class SetpointChange:
    """Replace the setpoints of one node at the given time."""

    time: float
    node: int
    p_star: float
    q_star: float
    v_star: float | None = None  # None keeps the current voltage target


@dataclass(frozen=True)
class GainChange:
    """Switch the voltage-regulation gain at the given time."""

    time: float
    alpha: float


@dataclass(frozen=True)
class SgBoundary:
    """Fixed synchronous-machine boundary seen by the converter block.

    ``coupling`` is the converter-to-generator block of the reduced
    admittance matrix and ``v_sg`` the generator voltages, held constant
    over the run.
    """

    coupling: np.ndarray
    v_sg: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coupling, dtype=complex)
        v = np.asarray(self.v_sg, dtype=complex)
        if c.ndim != 2 or v.ndim != 1 or c.shape[1] != v.shape[0]:
            raise ConfigurationError("coupling block and generator voltages disagree in shape")
        object.__setattr__(self, "coupling", c)
        object.__setattr__(self, "v_sg", v)

    @property
    def injected_current(self) -> np.ndarray:
        return self.coupling @ self.v_sg

    @property
    def angle_sg(self) -> np.ndarray:
        v = self.v_sg
        if np.any(np.abs(v) == 0.0):
            raise DomainError("generator voltage of zero magnitude has no angle")
        return np.log(np.abs(v)) + 1j * np.angle(v)


class Trajectory:
    """Saved states plus derived per-node observables.

    Native storage depends on the model: voltage models keep complex
    voltages, angle models keep complex angles.  The other
    representation and the frequency/power diagnostics are derived on
    first access and cached.
    """

    def __init__(self, model: ModelKind, t: np.ndarray, node_ids: tuple,
                 status: str, *, v: np.ndarray | None = None,
                 angle: np.ndarray | None = None, u_f: np.ndarray | None = None,
                 network: ReducedNetwork | None = None,
                 io_forcing: np.ndarray | None = None):
        if (v is None) == (angle is None):
            raise ConfigurationError("exactly one of voltages or angles must be stored")
        self.model = model
        self.t = t
        self.node_ids = tuple(node_ids)
        self.status = status
        self._v = v
        self._angle = angle
        self._u_f = u_f
        self._network = network
        self._io_forcing = io_forcing
        self._freq = None
        self._power = None

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def dt_save(self) -> float:
        if len(self.t) < 2:
            raise ConfigurationError("trajectory has fewer than two samples")
        return float(self.t[1] - self.t[0])

    @property
    def v(self) -> np.ndarray:
        if self._v is None:
            self._v = np.exp(self._angle)
        return self._v

    @property
    def angle(self) -> np.ndarray:
        if self._angle is None:
            self._angle = angle_series(self._v, axis=0)
        return self._angle

    @property
    def u(self) -> np.ndarray:
        return self.angle.real

    @property
    def theta(self) -> np.ndarray:
        return self.angle.imag

    @property
    def u_f(self) -> np.ndarray:
        if self.model is ModelKind.NONLINEAR_LOG:
            return self.u.copy()
        if self._u_f is None:
            raise ConfigurationError("model stores no filter state")
        if self._u_f.ndim == 1:
            return np.broadcast_to(self._u_f, self.v.shape).copy()
        return self._u_f

    @property
    def frequency(self) -> np.ndarray:
        """Complex frequency per node, by differencing the angle series."""
        if self._freq is None:
            if len(self.t) < 3:
                raise ConfigurationError("need at least three samples to difference")
            self._freq = np.gradient(self.angle, self.dt_save, axis=0, edge_order=2)
        return self._freq

    @property
    def power(self) -> np.ndarray:
        """Apparent power injected into the network, p + jq per node."""
        if self._power is None:
            if self._network is None:
                raise ConfigurationError("trajectory carries no network for power evaluation")
            io = self.v @ self._network.y.T
            if self._io_forcing is not None:
                io = io + self._io_forcing
            self._power = self.v * np.conj(io)
        return self._power


@dataclass(frozen=True)
class SyncResult:
    synced: bool
    time: float | None
    frequency: complex | None


@dataclass(frozen=True)
class ModelComparison:
    u_error: float
    angle_error: float

    @property
    def worst(self) -> float:
        return max(self.u_error, self.angle_error)


def _default_dt(model: ModelKind) -> float:
    return 1e-4 if model in _SLOW_KINDS else 1e-5


def _snap_events(events, dt: float, n_steps: int):
    snapped = []
    for ev in events:
        if not isinstance(ev, (SetpointChange, GainChange)):
            raise ConfigurationError(f"unsupported event type {type(ev).__name__}")
        if ev.time < 0:
            raise ConfigurationError("event time must be nonnegative")
        g = int(round(ev.time / dt))
        if g > n_steps:
            raise ConfigurationError(
                f"event at t={ev.time} lies beyond the simulation horizon")
        snapped.append((g, ev))
    snapped.sort(key=lambda p: p[0])
    return snapped


def _apply_event(ev, setpoints: list, params: DvocParams):
    if isinstance(ev, GainChange):
        return setpoints, dataclasses.replace(params, alpha=ev.alpha)
    k = ev.node
    if not 0 <= k < len(setpoints):
        raise ConfigurationError(f"event node index {k} out of range")
    v_star = setpoints[k].v_star if ev.v_star is None else ev.v_star
    setpoints = list(setpoints)
    setpoints[k] = Setpoints(ev.p_star, ev.q_star, v_star)
    return setpoints, params


def _linear_ops(net, params, setpoints, u_f, sg):
    if sg is None:
        sys = build_fast_system(net, params, setpoints, u_f=u_f)
    else:
        sys = build_fast_system(net, params, setpoints, u_f=u_f,
                                coupling=sg.coupling, v_sg=sg.v_sg)
    f = sys.forcing if sys.forcing is not None else np.zeros(net.n, dtype=complex)
    return np.ascontiguousarray(sys.a), np.ascontiguousarray(f)


def _slow_ops(net, params, setpoints, sg):
    if sg is None:
        sys = build_slow_system(net, params, setpoints)
    else:
        sys = build_slow_system(net, params, setpoints,
                                coupling=sg.coupling, theta_sg=sg.angle_sg)
    m = -params.eta * (sys.g + 1j * sys.b)
    c0 = 1j * params.omega0 + params.eta * (sys.sigma_ref + 1j * sys.rho_ref)
    ea = params.eta * params.alpha
    return (np.ascontiguousarray(m), np.ascontiguousarray(c0.astype(complex)),
            float(ea), np.ascontiguousarray(sys.u_star))


def _nonlinear_ops(net, params, setpoints, sg):
    ref = np.array([sp.varsigma_star_conj for sp in setpoints], dtype=complex)
    ref = ref + net.setpoint_shift
    m2 = np.diag(ref) - net.y
    g_f = sg.injected_current if sg is not None else np.zeros(net.n, dtype=complex)
    u_star = np.array([sp.u_star for sp in setpoints], dtype=float)
    return (np.ascontiguousarray(m2), np.ascontiguousarray(g_f),
            complex(params.eta * params.rotation), 1j * params.omega0,
            float(params.eta * params.alpha), np.ascontiguousarray(u_star),
            float(params.tau))


def simulate(net: ReducedNetwork, params: DvocParams, setpoints, *,
             model: ModelKind = ModelKind.NONLINEAR_FILTERED,
             t_end: float, dt: float | None = None,
             v0: np.ndarray | None = None, u_f0: np.ndarray | None = None,
             save_every: int | None = None, events=(),
             sg: SgBoundary | None = None, backend: str | None = None,
             div_limit: float = 1e6) -> Trajectory:
    """Integrate one model kind and return the saved trajectory.

    ``v0`` seeds every model; angle models start from its principal
    logarithm.  ``u_f0`` defaults to the voltage-target logs.  The run
    stops early with a diagnostic status when the state norm passes
    ``div_limit`` or a voltage magnitude collapses to zero.
    """
    setpoints = list(setpoints)
    if len(setpoints) != net.n:
        raise ConfigurationError("one setpoint per converter node is required")
    if model in _AUG_KINDS and sg is None:
        raise ConfigurationError(f"{model.value} requires a generator boundary")
    if sg is not None and model in (ModelKind.FAST_LINEAR, ModelKind.SLOW_LINEAR):
        raise ConfigurationError(
            f"{model.value} ignores generator boundaries; use its augmented twin")
    if sg is not None and sg.coupling.shape[0] != net.n:
        raise ConfigurationError("coupling block row count must match converter count")
    if t_end <= 0:
        raise ConfigurationError("t_end must be positive")
    dt = _default_dt(model) if dt is None else float(dt)
    if dt <= 0:
        raise ConfigurationError("dt must be positive")

    n = net.n
    n_steps = max(1, int(round(t_end / dt)))
    if save_every is None:
        stride = max(1, -(-n_steps // 4000))
    else:
        stride = int(save_every)
        if stride < 1:
            raise ConfigurationError("save_every must be a positive step count")
    # land the final step on the save grid
    n_steps = -(-n_steps // stride) * stride
    n_rows = n_steps // stride + 1

    if v0 is None:
        v0 = np.array([sp.v_star + 0j for sp in setpoints])
    v0 = np.asarray(v0, dtype=complex).copy()
    if v0.shape != (n,):
        raise ConfigurationError("v0 must hold one complex voltage per node")
    if u_f0 is None:
        u_f0 = np.array([sp.u_star for sp in setpoints], dtype=float)
    u_f0 = np.asarray(u_f0, dtype=float).copy()
    if u_f0.shape != (n,):
        raise ConfigurationError("u_f0 must hold one value per node")

    kern = _kernels.get_kernels(backend) if backend else _kernels.active_kernels()
    div2 = float(div_limit) ** 2
    t = np.arange(n_rows) * (stride * dt)
    snapped = _snap_events(events, dt, n_steps)
    # apply step-zero events before integration starts
    while snapped and snapped[0][0] == 0:
        _, ev = snapped.pop(0)
        setpoints, params = _apply_event(ev, setpoints, params)

    if model in _SLOW_KINDS:
        if np.any(np.abs(v0) == 0.0):
            raise DomainError("zero voltage has no angle representation")
        th = (np.log(np.abs(v0)) + 1j * np.angle(v0)).astype(complex)
        uf = u_f0.copy()
        out_th = np.empty((n_rows, n), dtype=complex)
        out_uf = np.empty((n_rows, n), dtype=float)
        out_th[0] = th
        out_uf[0] = uf
        runner = kern["slow"]
        g0 = 0
        status = 0
        for g_ev, ev in snapped + [(n_steps, None)]:
            if g_ev > g0:
                m, c0, ea, u_star = _slow_ops(net, params, setpoints, sg)
                done, status = runner(m, c0, ea, u_star, params.tau, th, uf,
                                      g0, g_ev - g0, dt, stride, out_th, out_uf, div2)
                g0 += done
                if status != 0:
                    break
            if ev is not None:
                setpoints, params = _apply_event(ev, setpoints, params)
        rows = g0 // stride + 1
        return Trajectory(model, t[:rows], net.node_ids, _STATUS_NAMES[status],
                          angle=out_th[:rows], u_f=out_uf[:rows], network=net,
                          io_forcing=sg.injected_current if sg else None)

    if model in (ModelKind.FAST_LINEAR, ModelKind.FAST_AUG):
        v = v0.copy()
        out_v = np.empty((n_rows, n), dtype=complex)
        out_v[0] = v
        runner = kern["linear"]
        g0 = 0
        status = 0
        for g_ev, ev in snapped + [(n_steps, None)]:
            if g_ev > g0:
                a, f = _linear_ops(net, params, setpoints, u_f0, sg)
                done, status = runner(a, f, v, g0, g_ev - g0, dt, stride, out_v, div2)
                g0 += done
                if status != 0:
                    break
            if ev is not None:
                setpoints, params = _apply_event(ev, setpoints, params)
        rows = g0 // stride + 1
        return Trajectory(model, t[:rows], net.node_ids, _STATUS_NAMES[status],
                          v=out_v[:rows], u_f=u_f0, network=net,
                          io_forcing=sg.injected_current if sg else None)

    # nonlinear oscillator models
    use_filter = model is ModelKind.NONLINEAR_FILTERED
    v = v0.copy()
    uf = u_f0.copy()
    out_v = np.empty((n_rows, n), dtype=complex)
    out_uf = np.empty((n_rows, n), dtype=float)
    out_v[0] = v
    out_uf[0] = uf
    runner = kern["nonlinear"]
    g0 = 0
    status = 0
    for g_ev, ev in snapped + [(n_steps, None)]:
        if g_ev > g0:
            m2, g_f, k_rot, jw0, ea, u_star, tau = _nonlinear_ops(net, params, setpoints, sg)
            done, status = runner(m2, g_f, k_rot, jw0, ea, u_star, tau, use_filter,
                                  v, uf, g0, g_ev - g0, dt, stride, out_v, out_uf, div2)
            g0 += done
            if status != 0:
                break
        if ev is not None:
            setpoints, params = _apply_event(ev, setpoints, params)
    rows = g0 // stride + 1
    return Trajectory(model, t[:rows], net.node_ids, _STATUS_NAMES[status],
                      v=out_v[:rows],
                      u_f=out_uf[:rows] if use_filter else None,
                      network=net,
                      io_forcing=sg.injected_current if sg else None)


def detect_sync(traj: Trajectory, window: float = 0.02,
                tol: float = 1e-4) -> SyncResult:
    """Earliest window over which all nodes share one constant frequency.

    A window passes when every node's complex frequency stays within
    ``tol`` (absolute, 1/s) of the node mean, and the node mean itself
    stays within ``tol`` of its window average.  The reported frequency
    is averaged over the final window of the run.
    """
    varpi = traj.frequency
    t = traj.t
    w = max(2, int(round(window / traj.dt_save)))
    m = len(t)
    if m <= w:
        return SyncResult(False, None, None)
    mean_row = varpi.mean(axis=1)
    dev_node = np.abs(varpi - mean_row[:, None]).max(axis=1)
    final = complex(mean_row[m - w - 1:].mean())
    for i in range(m - w):
        seg = mean_row[i:i + w + 1]
        if dev_node[i:i + w + 1].max() <= tol and np.abs(seg - seg.mean()).max() <= tol:
            return SyncResult(True, float(t[i]), final)
    return SyncResult(False, None, None)


def invariance_metrics(traj: Trajectory, window: float = 0.02) -> dict:
    """Drift of magnitude ratios and angle gaps over the final window.

    Both quantities are constant in a synchronized steady state, so
    their peak deviation from the window mean measures residual motion.
    """
    w = max(2, int(round(window / traj.dt_save)))
    if len(traj.t) <= w:
        raise ConfigurationError("trajectory shorter than the requested window")
    vmag = np.abs(traj.v[-(w + 1):])
    if np.any(vmag == 0.0):
        raise DomainError("zero voltage magnitude in the inspection window")
    theta = traj.theta[-(w + 1):]
    ratios = vmag / vmag[:, :1]
    gaps = theta - theta[:, :1]
    return {
        "ratio_drift": float(np.abs(ratios - ratios.mean(axis=0)).max()),
        "angle_drift": float(np.abs(gaps - gaps.mean(axis=0)).max()),
    }


def _rel_rms(a: np.ndarray, b: np.ndarray) -> float:
    diff = float(np.sqrt(np.mean((a - b) ** 2)))
    spread = max(float(np.std(a)), float(np.std(b)), 1e-9)
    return diff / spread


def compare_models(ref: Trajectory, other: Trajectory) -> ModelComparison:
    """Relative RMS gap between two runs saved on the same time grid.

    Voltage logs are compared directly; angles are compared after
    removing the per-sample network mean, since a common rotation
    carries no synchronization information.
    """
    if ref.v.shape != other.v.shape or not np.allclose(ref.t, other.t, atol=1e-12):
        raise ConfigurationError("trajectories must share one save grid")
    du = _rel_rms(ref.u, other.u)
    d_ref = ref.theta - ref.theta.mean(axis=1, keepdims=True)
    d_oth = other.theta - other.theta.mean(axis=1, keepdims=True)
    dd = _rel_rms(d_ref, d_oth)
    return ModelComparison(du, dd)


def exact_linear_trajectory(a: np.ndarray, f: np.ndarray | None,
                            v0: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Closed-form trajectory of dv/dt = A v + f on a uniform grid.

    The affine term rides along in an augmented matrix exponential, so
    one propagator per step covers the whole grid.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    t = np.asarray(t, dtype=float)
    if len(t) < 2:
        return np.asarray(v0, dtype=complex)[None, :].copy()
    steps = np.diff(t)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-15):
        raise ConfigurationError("time grid must be uniform")
    m = np.zeros((n + 1, n + 1), dtype=complex)
    m[:n, :n] = a
    m[:n, n] = np.zeros(n) if f is None else np.asarray(f, dtype=complex)
    prop = scipy.linalg.expm(m * steps[0])
    out = np.empty((len(t), n), dtype=complex)
    z = np.concatenate([np.asarray(v0, dtype=complex), [1.0]])
    out[0] = z[:n]
    for i in range(1, len(t)):
        z = prop @ z
        out[i] = z[:n]
    return out
