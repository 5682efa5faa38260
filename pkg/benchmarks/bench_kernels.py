"""Timing comparison of the compiled and pure-numpy integrator kernels.

Runs the same scenarios through both backends, reports steps per second
and the speedup, and cross-checks that the trajectories agree.  The
first compiled call pays the JIT cost, so every timed run is preceded
by a short warmup.

Usage:
    python3 benchmarks/bench_kernels.py [--t-end 0.5] [--repeats 3]
"""

import argparse
import math
import time

import numpy as np

from cfsync._kernels import HAS_NUMBA
from cfsync.controllers import DvocParams, Setpoints
from cfsync.network import BranchSpec, NetworkModel, NodeRole, canon3, reduce_network
from cfsync.sim import ModelKind, simulate

OMEGA0 = 100.0 * math.pi


def random_net(rng, n):
    nodes = {k: NodeRole.CONVERTER for k in range(1, n + 1)}
    branches = []
    order = rng.permutation(np.arange(1, n + 1))
    for i in range(1, n):
        j = int(order[rng.integers(0, i)])
        x = float(rng.uniform(0.05, 0.3))
        branches.append(BranchSpec(int(order[i]), j, 0.4 * x, x))
    return reduce_network(NetworkModel(nodes=nodes, branches=branches), OMEGA0)


def build_cases(t_end):
    params = DvocParams(eta=0.04 * OMEGA0, alpha=5.0, tau=0.005,
                        phi=math.pi / 4, omega0=OMEGA0)
    tri = reduce_network(canon3(), OMEGA0)
    tri_sps = [Setpoints(0.6, 0.4, 1.0), Setpoints(-0.2, 0.3, 1.0),
               Setpoints(0.3, 0.2, 1.0)]

    rng = np.random.default_rng(7)
    big = random_net(rng, 12)
    big_sps = [Setpoints(float(rng.uniform(-0.5, 0.7)),
                         float(rng.uniform(-0.4, 0.6)), 1.0)
               for _ in range(big.n)]

    return [
        ("triangle fast linear", tri, params, tri_sps, ModelKind.FAST_LINEAR, 1e-5, t_end),
        ("triangle nonlinear", tri, params, tri_sps, ModelKind.NONLINEAR_FILTERED, 1e-5, t_end),
        ("triangle slow", tri, params, tri_sps, ModelKind.SLOW_LINEAR, 1e-4, 10 * t_end),
        ("12-node nonlinear", big, params, big_sps, ModelKind.NONLINEAR_FILTERED, 1e-5, t_end),
    ]


def run(case, backend):
    name, net, params, sps, model, dt, t_end = case
    v0 = np.ones(net.n, dtype=complex)
    return simulate(net, params, sps, model=model, t_end=t_end, dt=dt,
                    v0=v0, backend=backend)


def timed(case, backend, repeats):
    _, _, _, _, _, dt, t_end = case
    n_steps = int(round(t_end / dt))
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        traj = run(case, backend)
        best = min(best, time.perf_counter() - t0)
    return n_steps / best, traj


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--t-end", type=float, default=0.5,
                    help="fast-model horizon in seconds (default 0.5)")
    ap.add_argument("--repeats", type=int, default=3,
                    help="timing repeats, best of N (default 3)")
    args = ap.parse_args()

    backends = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    if not HAS_NUMBA:
        print("numba is not importable; timing the numpy backend only\n")

    cases = build_cases(args.t_end)
    if HAS_NUMBA:
        run(cases[0], "numba")  # pay the JIT compile outside the clock
        run(cases[1], "numba")
        run(cases[2], "numba")

    width = max(len(c[0]) for c in cases)
    header = f"{'case':<{width}}  " + "".join(f"{b + ' steps/s':>16}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}{'agreement':>12}"
    print(header)
    print("-" * len(header))

    for case in cases:
        rates, trajs = [], []
        for backend in backends:
            rate, traj = timed(case, backend, args.repeats)
            rates.append(rate)
            trajs.append(traj)
        line = f"{case[0]:<{width}}  " + "".join(f"{r:>16,.0f}" for r in rates)
        if len(backends) == 2:
            scale = float(np.abs(trajs[0].v).max())
            gap = float(np.abs(trajs[0].v - trajs[1].v).max()) / scale
            line += f"{rates[1] / rates[0]:>9.1f}x{gap:>12.1e}"
        print(line)


if __name__ == "__main__":
    main()
