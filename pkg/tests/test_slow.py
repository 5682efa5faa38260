"""Amplitude/angle regulation dynamics on the synchronized manifold."""

import cmath
import math

import numpy as np
import pytest
import scipy.linalg

from cfsync.controllers import DvocParams, Setpoints
from cfsync.errors import ConfigurationError, NumericalError
from cfsync.network import (BranchSpec, NetworkModel, NodeRole, canon3,
                            reduce_network, sg_partition)
from cfsync.slow import (
    build_slow_system,
    error_coordinates,
    error_dynamics_matrix,
    error_spectrum,
    lyapunov_w,
    lyapunov_w_check,
    solve_equilibrium,
    steady_state_frequency,
    to_center_of_angle,
)

from conftest import OMEGA0


@pytest.fixture
def canon_slow(canon_params, canon_net, canon_setpoints):
    return build_slow_system(canon_net, canon_params, canon_setpoints)


def test_rotated_matrices(canon_slow, canon_net, canon_params):
    m = canon_params.rotation * canon_net.y
    np.testing.assert_allclose(canon_slow.g, m.real, atol=1e-15)
    np.testing.assert_allclose(canon_slow.b, m.imag, atol=1e-15)
    assert canon_slow.g_min_eig == pytest.approx(0.0, abs=1e-12)
    assert canon_slow.laplacian


def test_equilibrium_satisfies_ode(canon_slow, canon_params):
    # plug the solved point back into the dynamics: amplitude balance is
    # exact and every angle drifts at the common rate
    eq = solve_equilibrium(canon_slow)
    assert eq.residual < 1e-12
    s = canon_slow
    du = canon_params.eta * (s.sigma_ref - s.g @ eq.u + s.b @ eq.delta
                             + canon_params.alpha * (s.u_star - eq.u))
    dth = canon_params.omega0 + canon_params.eta * (s.rho_ref - s.b @ eq.u
                                                    - s.g @ eq.delta)
    assert np.max(np.abs(du)) < 1e-10
    np.testing.assert_allclose(dth, eq.theta0_rate, rtol=0, atol=1e-10)
    assert abs(eq.delta.sum()) < 1e-12


def test_steady_frequency_is_state_independent(canon_slow, canon_params):
    # 1'G' = 1'B' = 0 on a free network, so the mean angle rate equals
    # omega0 + eta*mean(rho'*) along any trajectory, not just at rest
    gen = np.random.default_rng(13)
    expect = steady_state_frequency(canon_slow)
    assert expect == pytest.approx(
        canon_params.omega0 + canon_params.eta * canon_slow.rho_ref.mean(),
        rel=1e-14)
    for _ in range(5):
        u = gen.standard_normal(3)
        th = gen.standard_normal(3)
        dth = canon_params.omega0 + canon_params.eta * (
            canon_slow.rho_ref - canon_slow.b @ u - canon_slow.g @ th)
        assert dth.mean() == pytest.approx(expect, rel=1e-12)


def test_two_node_spectrum_closed_form(canon_params):
    # graph modes factor the error dynamics: the mean block gives
    # lam^2 + lam/tau + eta*alpha/tau = 0 and the difference block a cubic
    # with hand-expanded coefficients
    model = NetworkModel(nodes={1: NodeRole.CONVERTER, 2: NodeRole.CONVERTER},
                         branches=[BranchSpec(1, 2, 0.02, 0.10)])
    sys = build_slow_system(reduce_network(model, OMEGA0), canon_params,
                            [Setpoints(0.3, 0.1, 1.0)] * 2)
    got = error_spectrum(sys)

    yb = cmath.exp(1j * canon_params.phi) / (0.02 + 0.10j)
    eta, al, tau = canon_params.eta, canon_params.alpha, canon_params.tau
    a, c = 2.0 * eta * yb.real, 2.0 * eta * yb.imag
    d = eta * al
    e = f = 1.0 / tau
    roots = np.concatenate([
        np.roots([1.0, 1.0 / tau, eta * al / tau]),
        np.roots([1.0, 2 * a + f, a * a + 2 * a * f + c * c + d * e,
                  a * a * f + c * c * f + d * e * a]),
    ])
    order = np.lexsort((-roots.imag, -roots.real))
    np.testing.assert_allclose(got, roots[order], rtol=1e-9)
    assert got.shape == (5,)
    assert np.all(got.real < 0)


def test_error_dynamics_blocks(canon_slow, canon_params):
    m = error_dynamics_matrix(canon_slow)
    n = 3
    eta, alpha, tau = canon_params.eta, canon_params.alpha, canon_params.tau
    np.testing.assert_array_equal(m[:n, :n], -eta * canon_slow.g)
    np.testing.assert_array_equal(m[:n, n:2 * n], eta * canon_slow.b)
    np.testing.assert_array_equal(m[:n, 2 * n:], -eta * alpha * np.eye(n))
    np.testing.assert_array_equal(m[n:2 * n, n:2 * n], -eta * canon_slow.g)
    np.testing.assert_array_equal(m[2 * n:, :n], np.eye(n) / tau)
    # uniform angle shift is an exact flow invariant
    shift = np.concatenate([np.zeros(n), np.ones(n), np.zeros(n)])
    assert np.max(np.abs(m @ shift)) < 1e-12


def test_lyapunov_decrease_along_exact_flow(canon_slow):
    # expm trajectory of the error dynamics with the gauge mode removed:
    # W must never increase when G' is positive semidefinite
    m = error_dynamics_matrix(canon_slow)
    gen = np.random.default_rng(4)
    x0 = gen.standard_normal(9) * 0.05
    x0[3:6] -= x0[3:6].mean()
    ts = np.linspace(0.0, 0.2, 400)
    traj = np.array([scipy.linalg.expm(m * t) @ x0 for t in ts])
    chk = lyapunov_w_check(canon_slow, traj[:, :3], traj[:, 3:6], traj[:, 6:])
    assert chk.monotone
    assert chk.w[-1] < 1e-12 * chk.w[0]
    assert chk.w[0] == pytest.approx(
        lyapunov_w(canon_slow, x0[:3], x0[3:6], x0[6:]), rel=1e-14)


def test_anchored_block_equilibrium(canon_params):
    model = NetworkModel(
        nodes={1: NodeRole.CONVERTER, 2: NodeRole.CONVERTER,
               3: NodeRole.GENERATOR},
        branches=list(canon3().branches))
    red = reduce_network(model, OMEGA0)
    part = sg_partition(red, model.nodes)
    sys = build_slow_system(part.converter, canon_params,
                            [Setpoints(0.4, 0.1, 1.0)] * 2,
                            coupling=part.coupling,
                            theta_sg=np.zeros(1, dtype=complex))
    assert not sys.laplacian
    eq = solve_equilibrium(sys)
    assert eq.residual < 1e-10
    # machine frame: the absolute angles stop moving entirely
    assert eq.theta0_rate == 0.0
    assert steady_state_frequency(sys) == canon_params.omega0
    dth = canon_params.omega0 + canon_params.eta * (
        sys.rho_ref - sys.b @ eq.u - sys.g @ eq.delta)
    assert np.max(np.abs(dth)) < 1e-10
    # anchored spectrum has no gauge zero mode: full 3n eigenvalues
    evals = error_spectrum(sys)
    assert evals.shape == (6,)
    assert np.all(evals.real < 0)


def test_error_coordinates_gauge(canon_slow, canon_params, canon_net,
                                 canon_setpoints):
    eq = solve_equilibrium(canon_slow)
    gen = np.random.default_rng(6)
    u = gen.standard_normal((4, 3))
    th = gen.standard_normal((4, 3))
    uf = gen.standard_normal((4, 3))
    ue, de, fe = error_coordinates(canon_slow, eq, u, th, uf)
    ue2, de2, fe2 = error_coordinates(canon_slow, eq, u, th + 2.31, uf)
    # free network: common angle shifts are quotiented away
    np.testing.assert_allclose(de, de2, atol=1e-12)
    np.testing.assert_array_equal(ue, ue2)

    model = NetworkModel(
        nodes={1: NodeRole.CONVERTER, 2: NodeRole.CONVERTER,
               3: NodeRole.GENERATOR},
        branches=list(canon3().branches))
    part = sg_partition(reduce_network(model, OMEGA0), model.nodes)
    anchored = build_slow_system(part.converter, canon_params,
                                 canon_setpoints[:2],
                                 coupling=part.coupling,
                                 theta_sg=np.zeros(1, dtype=complex))
    eqa = solve_equilibrium(anchored)
    _, da, _ = error_coordinates(anchored, eqa, u[:, :2], th[:, :2], uf[:, :2])
    _, da2, _ = error_coordinates(anchored, eqa, u[:, :2], th[:, :2] + 2.31, uf[:, :2])
    np.testing.assert_allclose(da2 - da, 2.31, rtol=1e-12)


def test_center_of_angle():
    c, dev = to_center_of_angle(np.array([1.0, 2.0, 6.0]))
    assert c == pytest.approx(3.0)
    np.testing.assert_allclose(dev, [-2.0, -1.0, 3.0])
    assert abs(dev.sum()) < 1e-15
    with pytest.raises(ConfigurationError):
        to_center_of_angle(np.zeros((2, 2)))


def test_alpha_zero_equilibrium_degenerates(canon_net, canon_setpoints):
    p = DvocParams(eta=10.0, alpha=0.0, tau=0.01, phi=math.pi / 4,
                   omega0=OMEGA0)
    sys = build_slow_system(canon_net, p, canon_setpoints)
    with pytest.raises(NumericalError, match="rank-deficient"):
        solve_equilibrium(sys)


def test_indefinite_conductance_warns():
    # a capacitive branch rotated by pi/2 gives a negative edge weight
    model = NetworkModel(
        nodes={k: NodeRole.CONVERTER for k in (1, 2, 3)},
        branches=[BranchSpec(1, 2, 0.01, 0.15), BranchSpec(2, 3, 0.01, -0.10),
                  BranchSpec(1, 3, 0.01, 0.12)])
    net = reduce_network(model, OMEGA0)
    p = DvocParams(eta=10.0, alpha=1.0, tau=0.01, phi=math.pi / 2, omega0=OMEGA0)
    with pytest.warns(UserWarning, match="indefinite"):
        sys = build_slow_system(net, p, [Setpoints(0.1, 0.0, 1.0)] * 3)
    assert sys.g_min_eig < -1.0


def test_build_guards(canon_net, canon_params, canon_setpoints):
    with pytest.raises(ConfigurationError):
        build_slow_system(canon_net, canon_params, canon_setpoints[:1])
    with pytest.raises(ConfigurationError):
        build_slow_system(canon_net, canon_params, canon_setpoints,
                          coupling=np.ones((3, 1)))
