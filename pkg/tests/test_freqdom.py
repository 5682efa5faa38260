"""Rational aggregation, contours, and the two frequency-domain tests."""

import cmath
import math
import warnings

import numpy as np
import pytest

from cfsync.controllers import DvocParams, Setpoints
from cfsync.errors import (ConfigurationError, NumericalError,
                           UnsupportedConfigurationError)
from cfsync.fast import build_fast_system
from cfsync.freqdom import (
    RationalTF,
    aggregated_admittance,
    converter_admittance_fast,
    converter_admittance_slow,
    coupled_state_matrix,
    criterion_sync,
    criterion_voltage,
    nyquist_curve,
    rl_branches_from_reduced,
    state_space_verdict,
    winding_number,
)
from cfsync.network import (BranchSpec, NetworkModel, NodeRole, canon3,
                            reduce_network, sg_partition)
from cfsync.slow import SlowSystem, build_slow_system, error_spectrum

from conftest import OMEGA0, random_connected_model, random_setpoints


def test_rational_algebra():
    one_pole = RationalTF([1.0, 1.0], [2.0, 1.0])        # (1+s)/(2+s)
    other = RationalTF([2.0, 1.0], [3.0, 1.0])           # (2+s)/(3+s)
    prod = (one_pole * other).simplify()
    np.testing.assert_allclose(sorted(prod.zeros()), [-1.0], atol=1e-9)
    np.testing.assert_allclose(sorted(prod.poles()), [-3.0], atol=1e-9)
    s = 1.7 + 0.3j
    assert prod(s) == pytest.approx((1 + s) / (3 + s), rel=1e-12)
    tot = one_pole + 1.0
    assert tot(s) == pytest.approx((1 + s) / (2 + s) + 1.0, rel=1e-12)
    diff = one_pole - one_pole
    assert abs(diff(s)) < 1e-14
    assert (one_pole / other)(s) == pytest.approx(
        ((1 + s) * (3 + s)) / ((2 + s) * (2 + s)), rel=1e-12)
    with pytest.raises(ConfigurationError):
        RationalTF([1.0], [0.0])


def test_converter_port_admittance(canon_params):
    # y(s) = (s - j*omega0) e^{-j phi}/eta - ref, an affine polynomial
    ref = 0.4 - 0.2j
    tf = converter_admittance_fast(canon_params, ref)
    for s in (0.0, 1j * OMEGA0, 100.0 + 50.0j):
        expect = (s - 1j * OMEGA0) * cmath.exp(-1j * canon_params.phi) \
            / canon_params.eta - ref
        assert tf(s) == pytest.approx(expect, rel=1e-13, abs=1e-15)
    assert tf.num_degree == 1 and tf.den_degree == 0


def test_branch_recovery_round_trip(canon_net):
    brs = rl_branches_from_reduced(canon_net, OMEGA0)
    got = {(b.from_node, b.to_node): (b.r, b.ell * OMEGA0) for b in brs}
    assert got[(0, 1)] == pytest.approx((0.02, 0.10), rel=1e-12)
    assert got[(0, 2)] == pytest.approx((0.01, 0.12), rel=1e-12)
    assert got[(1, 2)] == pytest.approx((0.05, 0.05), rel=1e-12)
    assert all(b.to_node is not None for b in brs)


def test_branch_recovery_grounded_and_capacitive(canon_params):
    # anchored block: missing row-sum mass becomes grounded branches
    model = NetworkModel(
        nodes={1: NodeRole.CONVERTER, 2: NodeRole.CONVERTER,
               3: NodeRole.GENERATOR},
        branches=list(canon3().branches))
    part = sg_partition(reduce_network(model, OMEGA0), model.nodes)
    brs = rl_branches_from_reduced(part.converter, OMEGA0)
    grounded = [b for b in brs if b.to_node is None]
    assert len(grounded) == 2
    # grounded element of node 0 is the eliminated branch to the machine
    z = 1.0 / part.converter.y.sum(axis=1)[0]
    assert grounded[0].r == pytest.approx(z.real, rel=1e-12)
    assert grounded[0].ell * OMEGA0 == pytest.approx(z.imag, rel=1e-12)

    cap = NetworkModel(
        nodes={1: NodeRole.CONVERTER, 2: NodeRole.CONVERTER},
        branches=[BranchSpec(1, 2, 0.01, -0.10)])
    with pytest.raises(UnsupportedConfigurationError, match="capacitive"):
        rl_branches_from_reduced(reduce_network(cap, OMEGA0), OMEGA0)


def test_static_zeros_are_fast_eigenvalues(canon_params, canon_net,
                                           canon_setpoints):
    agg = aggregated_admittance(canon_net, canon_params, canon_setpoints,
                                dynamic=False)
    zeros = np.sort_complex(agg.zeros())
    evals = np.sort_complex(
        np.linalg.eigvals(build_fast_system(canon_net, canon_params,
                                            canon_setpoints).a))
    np.testing.assert_allclose(zeros, evals, rtol=1e-9, atol=1e-8)
    # poles are the modes with the port grounded: the fast matrix of the
    # remaining two nodes
    sysf = build_fast_system(canon_net, canon_params, canon_setpoints)
    keep = [1, 2]
    a_minor = 1j * OMEGA0 * np.eye(2) + canon_params.eta * canon_params.rotation \
        * (np.diag(sysf.effective_ref[keep]) - canon_net.y[np.ix_(keep, keep)])
    np.testing.assert_allclose(np.sort_complex(agg.poles()),
                               np.sort_complex(np.linalg.eigvals(a_minor)),
                               rtol=1e-9, atol=1e-8)


def test_dynamic_matches_static_at_nominal_frequency(canon_params, canon_net,
                                                     canon_setpoints):
    # r-l branches evaluated at s = j*omega0 are exactly the phasor values
    dyn = aggregated_admittance(canon_net, canon_params, canon_setpoints,
                                dynamic=True)
    sta = aggregated_admittance(canon_net, canon_params, canon_setpoints,
                                dynamic=False)
    assert dyn(1j * OMEGA0) == pytest.approx(sta(1j * OMEGA0), abs=1e-10)


def test_aggregation_guards(canon_params, canon_net, canon_setpoints):
    with pytest.raises(ConfigurationError):
        aggregated_admittance(canon_net, canon_params, canon_setpoints, port=5)
    with pytest.raises(ConfigurationError):
        aggregated_admittance(canon_net, canon_params, canon_setpoints[:2])


def test_winding_number_analytic_circles():
    th = np.linspace(0.0, 2.0 * math.pi, 600, endpoint=False)
    ccw = np.exp(1j * th)
    w, res = winding_number(ccw)
    assert w == 1 and res < 1e-9
    w, _ = winding_number(ccw[::-1])
    assert w == -1
    w, _ = winding_number(3.0 + ccw)
    assert w == 0
    with pytest.raises(NumericalError):
        winding_number(np.array([1.0 + 0j, 0.0, -1.0]))


def test_nyquist_argument_principle():
    # clockwise boundary of the right half plane: winding = poles - zeros
    curve = nyquist_curve(lambda s: np.asarray(s) - 5.0, [], omega0=100.0,
                          omega_max=1e4)
    assert curve.winding == -1
    curve = nyquist_curve(lambda s: 1.0 / (np.asarray(s) - 5.0), [],
                          omega0=100.0, omega_max=1e4)
    assert curve.winding == 1
    # pole on the axis is skirted and does not count
    curve = nyquist_curve(lambda s: 1.0 / np.asarray(s), [0.0], omega0=100.0,
                          omega_max=1e4)
    assert curve.winding == 0
    assert curve.residual < 1e-3
    with pytest.raises(ConfigurationError):
        nyquist_curve(lambda s: s, [], omega0=100.0, omega_max=-1.0)
    with pytest.raises(ConfigurationError):
        nyquist_curve(lambda s: s, [2e4], omega0=100.0, omega_max=1e4)


def test_sync_criterion_against_state_space(canon_params, canon_net,
                                            canon_setpoints):
    # weakly coupled gain: one regulated mode, both routes agree and pass
    soft = DvocParams(eta=0.005 * OMEGA0, alpha=5.0, tau=0.005,
                      phi=math.pi / 4, omega0=OMEGA0)
    res = criterion_sync(canon_net, soft, canon_setpoints, dynamic=True)
    ss = state_space_verdict(coupled_state_matrix(canon_net, soft,
                                                  canon_setpoints))
    assert res.passed and ss.passed
    assert res.rhp_zeros == ss.rhp_count == 1

    # stiff lines at the benchmark gain: the branch transients couple in
    # and both routes count the same three unstable modes
    res = criterion_sync(canon_net, canon_params, canon_setpoints, dynamic=True)
    ss = state_space_verdict(coupled_state_matrix(canon_net, canon_params,
                                                  canon_setpoints))
    assert not res.passed and not ss.passed
    assert res.rhp_zeros == ss.rhp_count == 3


def test_sync_criterion_static_mode(canon_params, canon_net, canon_setpoints):
    # phasor network: the count reduces to the fast-system eigenvalues
    res = criterion_sync(canon_net, canon_params, canon_setpoints,
                         dynamic=False)
    assert res.passed
    assert res.rhp_zeros == 1
    d = res.as_dict()
    assert d["passed"] is True and d["rhp_zeros"] == 1


def test_sync_criterion_random_agreement(canon_params):
    gen = np.random.default_rng(27)
    done = 0
    while done < 6:
        n = int(gen.integers(3, 6))
        net = reduce_network(random_connected_model(gen, n), OMEGA0)
        sps = random_setpoints(gen, n)
        eta_pu = float(gen.uniform(0.002, 0.08))
        p = DvocParams(eta=eta_pu * OMEGA0, alpha=5.0, tau=0.005,
                       phi=float(gen.uniform(0.2, 1.4)), omega0=OMEGA0)
        try:
            res = criterion_sync(net, p, sps, dynamic=True)
        except NumericalError:
            continue  # a mode fell on the contour; perturbed draws cover it
        ss = state_space_verdict(coupled_state_matrix(net, p, sps))
        assert res.rhp_zeros == ss.rhp_count
        assert res.passed == ss.passed
        done += 1


def test_voltage_criterion_matches_spectrum(canon_params, canon_net,
                                            canon_setpoints):
    sys = build_slow_system(canon_net, canon_params, canon_setpoints)
    res = criterion_voltage(sys)
    assert res.passed and res.winding == 0
    assert error_spectrum(sys).real.max() < 0

    # indefinite conductance block: the loop encircles the origin and the
    # spectrum confirms the instability
    bad = SlowSystem(g=np.array([[-5.0, 0.0], [0.0, 10.0]]),
                     b=np.array([[2.0, -2.0], [-2.0, 2.0]]),
                     sigma_ref=np.zeros(2), rho_ref=np.zeros(2),
                     u_star=np.zeros(2), params=canon_params,
                     g_min_eig=-5.0, laplacian=False)
    res = criterion_voltage(bad)
    assert not res.passed and res.winding != 0
    assert error_spectrum(bad).real.max() > 0


def test_slow_port_admittances(canon_params):
    y_u, y_th = converter_admittance_slow(canon_params)
    eta, alpha, tau = canon_params.eta, canon_params.alpha, canon_params.tau
    s = 35.0 + 12.0j
    assert y_u(s) == pytest.approx(
        (eta * alpha + s + tau * s * s) / (eta * (1 + tau * s)), rel=1e-12)
    assert y_th(s) == pytest.approx(s / eta, rel=1e-13)


def test_coupled_matrix_resistive_fold(canon_params, canon_setpoints):
    # purely resistive network has no branch states: the coupled matrix
    # collapses to the fast matrix itself
    model = NetworkModel(nodes={1: NodeRole.CONVERTER, 2: NodeRole.CONVERTER},
                         branches=[BranchSpec(1, 2, 0.08, 0.0)])
    net = reduce_network(model, OMEGA0)
    am = coupled_state_matrix(net, canon_params, canon_setpoints[:2])
    af = build_fast_system(net, canon_params, canon_setpoints[:2]).a
    assert am.shape == (2, 2)
    np.testing.assert_allclose(am, af, atol=1e-12)


def test_coupled_matrix_shape_and_guard(canon_params, canon_net,
                                        canon_setpoints):
    am = coupled_state_matrix(canon_net, canon_params, canon_setpoints)
    assert am.shape == (6, 6)  # 3 voltages + 3 branch currents
    with pytest.raises(ConfigurationError):
        coupled_state_matrix(canon_net, canon_params, canon_setpoints[:1])


def test_state_space_verdict_axis_band():
    m = np.diag([1.0 + 0j, -1.0, 3e-5j, 2e-5 + 5.0j])
    v = state_space_verdict(m, axis_tol=5e-5)
    assert v.rhp_count == 1
    assert v.passed
    assert v.eigenvalues[0] == 1.0 + 0j
