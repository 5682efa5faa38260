"""Shared fixtures: the benchmark triangle system and random-network factories."""

import math

import numpy as np
import pytest

from cfsync.controllers import DvocParams, Setpoints
from cfsync.network import (NetworkModel, NodeRole, BranchSpec, canon3,
                            reduce_network)

OMEGA0 = 100.0 * math.pi


@pytest.fixture
def canon_params():
    # 4 percent droop slope as a literal coefficient, regulated tuning
    return DvocParams(eta=0.04 * OMEGA0, alpha=5.0, tau=0.005,
                      phi=math.pi / 4, omega0=OMEGA0)


@pytest.fixture
def canon_net():
    return reduce_network(canon3(), OMEGA0)


@pytest.fixture
def canon_setpoints():
    return [Setpoints(0.6, 0.4, 1.0), Setpoints(-0.2, 0.3, 1.0),
            Setpoints(0.3, 0.2, 1.0)]


def random_connected_model(rng, n_nodes, r_over_x=(0.1, 2.0)):
    """Random connected converter-only network with mixed r/x branches.

    A random spanning tree guarantees connectivity; extra chords are
    added with probability 0.4 each.
    """
    nodes = {k: NodeRole.CONVERTER for k in range(1, n_nodes + 1)}
    branches = []

    def add(a, b):
        x = float(rng.uniform(0.05, 0.3))
        r = float(rng.uniform(*r_over_x)) * x
        branches.append(BranchSpec(a, b, r, x))

    order = rng.permutation(np.arange(1, n_nodes + 1))
    for i in range(1, n_nodes):
        add(int(order[i]), int(order[rng.integers(0, i)]))
    for a in range(1, n_nodes + 1):
        for b in range(a + 1, n_nodes + 1):
            if rng.random() < 0.4 / n_nodes:
                add(a, b)
    return NetworkModel(nodes=nodes, branches=branches)


def random_setpoints(rng, n):
    sps = [Setpoints(float(rng.uniform(-0.5, 0.7)), float(rng.uniform(-0.4, 0.6)),
                     float(rng.uniform(0.9, 1.1))) for _ in range(n)]
    return sps
