"""Backend selection and cross-backend agreement of the RK4 kernels."""

import numpy as np
import pytest

from cfsync import _kernels
from cfsync.errors import ConfigurationError
from cfsync.sim import ModelKind, simulate

from conftest import random_connected_model, random_setpoints, OMEGA0
from cfsync.network import reduce_network

needs_numba = pytest.mark.skipif(not _kernels.HAS_NUMBA,
                                 reason="numba not installed")


def test_kernel_sets_have_all_runners():
    ks = _kernels.get_kernels("numpy")
    assert set(ks) >= {"linear", "slow", "nonlinear"}
    assert _kernels.BACKEND in ("numba", "numpy")
    assert _kernels.active_kernels() is _kernels.get_kernels(_kernels.BACKEND)


def test_unknown_backend_rejected():
    with pytest.raises(ConfigurationError):
        _kernels.get_kernels("fortran")


@needs_numba
def test_backends_agree(canon_params):
    # same scenario on both backends: identical arithmetic up to
    # instruction reordering
    gen = np.random.default_rng(9)
    net = reduce_network(random_connected_model(gen, 4), OMEGA0)
    sps = random_setpoints(gen, 4)
    v0 = np.exp(gen.standard_normal(4) * 0.1 + 1j * gen.standard_normal(4) * 0.1)
    for model in (ModelKind.FAST_LINEAR, ModelKind.SLOW_LINEAR,
                  ModelKind.NONLINEAR_FILTERED, ModelKind.NONLINEAR_LOG):
        a = simulate(net, canon_params, sps, model=model, t_end=0.02,
                     v0=v0, backend="numpy")
        b = simulate(net, canon_params, sps, model=model, t_end=0.02,
                     v0=v0, backend="numba")
        np.testing.assert_allclose(a.v, b.v, rtol=1e-12, atol=1e-13)
        assert a.status == b.status == "completed"


def test_status_reporting(canon_params, canon_net, canon_setpoints):
    # voltage collapse is flagged before any bad row is saved
    tr = simulate(canon_net, canon_params, canon_setpoints,
                  model=ModelKind.NONLINEAR_FILTERED, t_end=0.01,
                  v0=np.array([0j, 1.0, 1.0]))
    assert tr.status == "zero_voltage"
    assert len(tr.t) == 1

    from cfsync.controllers import Setpoints
    runaway = [Setpoints(500.0, 0.0, 1.0)] * 3
    tr = simulate(canon_net, canon_params, runaway, model=ModelKind.FAST_LINEAR,
                  t_end=0.05, div_limit=50.0)
    assert tr.status == "diverged"
    assert tr.t[-1] < 0.05
    assert np.all(np.isfinite(tr.v))


def test_save_grid_extension(canon_params, canon_net, canon_setpoints):
    # horizon is padded so the last step lands on the save grid
    tr = simulate(canon_net, canon_params, canon_setpoints,
                  model=ModelKind.FAST_LINEAR, t_end=0.0037, dt=1e-3,
                  save_every=3)
    steps = np.diff(tr.t)
    np.testing.assert_allclose(steps, 3e-3, rtol=1e-12)
    assert tr.t[-1] >= 0.0037


def test_default_stride_caps_rows(canon_params, canon_net, canon_setpoints):
    tr = simulate(canon_net, canon_params, canon_setpoints,
                  model=ModelKind.FAST_LINEAR, t_end=0.2, dt=1e-5)
    assert len(tr.t) <= 4001
