"""Control law variants and the droop form of the core law."""

import cmath
import math

import numpy as np
import pytest

from cfsync.controllers import (
    ControlVariant,
    DvocParams,
    Setpoints,
    complex_droop_rhs,
    converter_rhs,
    effective_reference,
    verify_droop_equivalence,
)
from cfsync.errors import ConfigurationError, DomainError


def simple_params(phi=0.0):
    return DvocParams(eta=2.0, alpha=3.0, tau=0.5, phi=phi, omega0=1.0)


def test_variant_rhs_hand_values():
    # v=2, i_o=0.3-0.1j, eta=2, alpha=3, tau=0.5, phi=0, omega0=1,
    # p*=0.5, q*=0, v*=1; regulation terms worked out on paper
    p = simple_params()
    sp = Setpoints(0.5, 0.0, 1.0)
    v, io = 2.0, 0.3 - 0.1j

    dv, df = converter_rhs(v, io, p, sp, ControlVariant.CORE)
    assert dv == pytest.approx(1.4 + 2.2j, abs=1e-14)
    assert df == 0.0

    dv, _ = converter_rhs(v, io, p, sp, ControlVariant.CLASSIC)
    assert dv == pytest.approx(-10.6 + 2.2j, abs=1e-14)

    dv, _ = converter_rhs(v, io, p, sp, ControlVariant.LOG)
    assert dv == pytest.approx(1.4 + 2.2j - 12.0 * math.log(2.0), abs=1e-13)

    dv, df = converter_rhs(v, io, p, sp, ControlVariant.FILTERED, u_f=0.1)
    assert dv == pytest.approx(0.2 + 2.2j, abs=1e-13)
    assert df == pytest.approx((math.log(2.0) - 0.1) / 0.5, rel=1e-14)


def test_droop_equivalence_residual():
    # core law over v equals the complex droop; check across random
    # operating points including nearly collapsed voltages
    gen = np.random.default_rng(11)
    worst = 0.0
    for k in range(1000):
        p = DvocParams(eta=float(gen.uniform(1.0, 30.0)),
                       alpha=float(gen.uniform(0.0, 8.0)),
                       tau=float(gen.uniform(1e-3, 0.1)),
                       phi=float(gen.uniform(0.0, math.pi / 2)),
                       omega0=100.0 * math.pi)
        sp = Setpoints(float(gen.uniform(-1.0, 1.0)),
                       float(gen.uniform(-1.0, 1.0)),
                       float(gen.uniform(0.5, 1.5)))
        mag = 1e-6 if k % 50 == 0 else float(gen.uniform(0.2, 1.5))
        v = mag * cmath.exp(1j * float(gen.uniform(-math.pi, math.pi)))
        io = complex(gen.normal(), gen.normal()) * mag
        worst = max(worst, verify_droop_equivalence(v, io, p, sp))
    assert worst < 1e-12


def test_droop_balance_point():
    p = simple_params(phi=0.9)
    sp = Setpoints(0.4, -0.2, 1.1)
    assert complex_droop_rhs(sp.varsigma_star_conj, p, sp) == 1j * p.omega0


def test_frozen_filter_collapses_to_core():
    # with u_f held fixed the filtered law is the core law driven by the
    # effective reference
    p = simple_params(phi=0.6)
    sp = Setpoints(-0.3, 0.25, 0.95)
    v, io, u_f = 0.8 * cmath.exp(0.4j), 0.2 + 0.35j, -0.07
    ref = effective_reference(p, sp, u_f)
    dv_filt, _ = converter_rhs(v, io, p, sp, ControlVariant.FILTERED, u_f=u_f)
    dv_ref = 1j * p.omega0 * v + p.eta * p.rotation * (ref * v - io)
    assert dv_filt == pytest.approx(dv_ref, abs=1e-14)


def test_effective_reference_shift_and_alpha_zero():
    p = DvocParams(eta=5.0, alpha=0.0, tau=0.1, phi=0.3, omega0=314.0)
    sp = Setpoints(0.1, 0.2, 1.0)
    assert effective_reference(p, sp, 0.4, shift=0.5j) == sp.varsigma_star_conj + 0.5j


def test_setpoint_properties():
    sp = Setpoints(0.6, -0.4, 2.0)
    assert sp.u_star == math.log(2.0)
    assert sp.varsigma_star_conj == (0.6 + 0.4j) / 4.0
    with pytest.raises(ConfigurationError):
        Setpoints(0.1, 0.1, 0.0)
    with pytest.raises(ConfigurationError):
        Setpoints(math.nan, 0.1, 1.0)


def test_param_validation():
    good = dict(eta=1.0, alpha=1.0, tau=0.01, phi=0.5, omega0=314.0)
    DvocParams(**good)
    for key, bad in [("eta", 0.0), ("eta", -1.0), ("alpha", -0.1),
                     ("tau", 0.0), ("phi", -0.01), ("phi", 2.0),
                     ("omega0", 0.0), ("tau", math.inf)]:
        with pytest.raises(ConfigurationError):
            DvocParams(**{**good, key: bad})
    assert simple_params(0.25).rotation == pytest.approx(cmath.exp(0.25j), abs=1e-16)


def test_zero_voltage_guards():
    p = simple_params()
    sp = Setpoints(0.5, 0.0, 1.0)
    with pytest.raises(DomainError):
        converter_rhs(0.0, 0.1, p, sp, ControlVariant.LOG)
    with pytest.raises(DomainError):
        converter_rhs(0.0, 0.1, p, sp, ControlVariant.FILTERED, u_f=0.0)
    with pytest.raises(ConfigurationError):
        converter_rhs(1.0, 0.1, p, sp, ControlVariant.FILTERED)
    with pytest.raises(DomainError):
        verify_droop_equivalence(0.0, 0.1, p, sp)
