"""Command line front end.

Exit codes: 0 when the requested run or stability checks pass, 2 when a
stability check fails or a simulation aborts, 1 for configuration,
input, or numerical errors.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import glob
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import (ConfigurationError, DomainError, NumericalError,
                     UnsupportedConfigurationError)
from .fast import build_fast_system, sync_verdict
from .freqdom import criterion_sync, criterion_voltage
from .scenario import Scenario, load_scenario
from .sim import ModelKind, detect_sync, simulate
from .slow import (build_slow_system, error_spectrum, solve_equilibrium,
                   steady_state_frequency)
from .svg import Panel, line_plot, plane_plot

_SLOW_STABLE_TOL = 1e-8


class _Parser(argparse.ArgumentParser):
    """Usage problems are input errors, exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt_complex(z: complex) -> str:
    return f"{z.real:+.6g}{z.imag:+.6g}j"


def _g17(x: float) -> str:
    return f"{float(x):.17g}"


def _scenario_systems(sc: Scenario):
    net, sg = sc.split()
    sps = sc.ordered_setpoints(net.node_ids)
    return net, sg, sps


def _build_fast(sc: Scenario):
    net, sg, sps = _scenario_systems(sc)
    if sg is None:
        return net, build_fast_system(net, sc.params, sps)
    return net, build_fast_system(net, sc.params, sps,
                                  coupling=sg.coupling, v_sg=sg.v_sg)


def _build_slow(sc: Scenario):
    net, sg, sps = _scenario_systems(sc)
    if sg is None:
        return net, build_slow_system(net, sc.params, sps)
    return net, build_slow_system(net, sc.params, sps,
                                  coupling=sg.coupling, theta_sg=sg.angle_sg)


def _write_json(path: str, payload: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# analyze-fast
# ---------------------------------------------------------------------------

def _cmd_analyze_fast(args) -> int:
    sc = load_scenario(args.scenario)
    net, sys_f = _build_fast(sc)
    delta_bar = args.delta_bar if args.delta_bar is not None else sc.analysis.delta_bar
    gamma_bar = args.gamma_bar if args.gamma_bar is not None else sc.analysis.gamma_bar
    verdict = sync_verdict(sys_f, delta_bar, gamma_bar)
    spec = verdict.spectrum
    print(f"scenario: {sc.name} ({net.n} converter nodes)")
    shown = min(4, len(spec.eigenvalues))
    for i in range(shown):
        print(f"  lambda_{i + 1} = {_fmt_complex(spec.eigenvalues[i])}  1/s")
    print(f"  spectral gap: {spec.gap:.6g} 1/s, eigenvalue residual {spec.residual:.3g}")
    c1 = verdict.condition1
    print(f"spectral condition: {'PASS' if c1.passed else 'FAIL'} "
          f"(Re lambda_2 = {c1.re_lambda2:.6g}, smallest mode entry {c1.min_entry:.3g})")
    for reason in c1.reasons:
        print(f"  - {reason}")
    if verdict.condition2 is not None:
        c2 = verdict.condition2
        word = "PASS" if c2.passed else "FAIL"
        print(f"parametric condition: {word} "
              f"(lhs {c2.lhs:.6g} < rhs {c2.rhs:.6g}, margin {c2.margin:.6g})")
        d_act, g_act = verdict.spread
        print(f"  mode spread: delta {d_act:.6g} rad, gamma {g_act:.6g} "
              f"-> certified {bool(verdict.certified)}")
    lam = verdict.predicted_sync
    print(f"synchronous frequency if stable: {lam.omega:.9g} rad/s "
          f"(decay {lam.eps:.6g} 1/s)")
    if args.json:
        payload = {"scenario": sc.name, "sha256": sc.sha256,
                   "verdict": verdict.as_dict()}
        _write_json(args.json, payload)
    return 0 if c1.passed else 2


# ---------------------------------------------------------------------------
# analyze-slow
# ---------------------------------------------------------------------------

def _cmd_analyze_slow(args) -> int:
    sc = load_scenario(args.scenario)
    net, sys_s = _build_slow(sc)
    eq = solve_equilibrium(sys_s)
    lam = error_spectrum(sys_s)
    max_re = float(lam.real.max())
    stable = max_re <= _SLOW_STABLE_TOL
    freq = steady_state_frequency(sys_s)
    print(f"scenario: {sc.name} ({net.n} converter nodes)")
    print(f"equilibrium residual {eq.residual:.3g}, smallest singular value {eq.smin:.3g}")
    for i, nid in enumerate(net.node_ids):
        print(f"  node {nid}: |v| = {math.exp(eq.u[i]):.9g}, "
              f"angle offset {eq.delta[i]:+.9g} rad")
    print(f"steady-state frequency: {freq:.9g} rad/s "
          f"({freq / sc.omega0:.9g} per unit)")
    print(f"slowest/most unstable error mode: Re = {max_re:.6g} 1/s")
    print(f"voltage and angle regulation: {'STABLE' if stable else 'UNSTABLE'}")
    if args.json:
        payload = {"scenario": sc.name, "sha256": sc.sha256,
                   "equilibrium": eq.as_dict(),
                   "frequency": freq, "max_re": max_re, "stable": stable}
        _write_json(args.json, payload)
    return 0 if stable else 2


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _write_traj_csv(path: str, traj, node_ids):
    v = traj.v
    angle = traj.angle
    u_f = traj.u_f
    freq = traj.frequency
    power = traj.power
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,node,v_re,v_im,v_abs,theta,u_f,eps,omega,p,q\n")
        for i, t in enumerate(traj.t):
            for k, nid in enumerate(node_ids):
                row = (t, v[i, k].real, v[i, k].imag, abs(v[i, k]),
                       angle[i, k].imag, u_f[i, k], freq[i, k].real,
                       freq[i, k].imag, power[i, k].real, power[i, k].imag)
                fh.write(f"{_g17(row[0])},{nid}," +
                         ",".join(_g17(x) for x in row[1:]) + "\n")


def _write_traj_json(path: str, traj, node_ids, sc: Scenario):
    v = traj.v
    angle = traj.angle
    u_f = traj.u_f
    freq = traj.frequency
    power = traj.power
    series = {}
    for k, nid in enumerate(node_ids):
        series[str(nid)] = {
            "v_re": v[:, k].real.tolist(), "v_im": v[:, k].imag.tolist(),
            "v_abs": np.abs(v[:, k]).tolist(), "theta": angle[:, k].imag.tolist(),
            "u_f": u_f[:, k].tolist(), "eps": freq[:, k].real.tolist(),
            "omega": freq[:, k].imag.tolist(), "p": power[:, k].real.tolist(),
            "q": power[:, k].imag.tolist(),
        }
    _write_json(path, {"scenario": sc.name, "model": traj.model.value,
                       "status": traj.status, "t": traj.t.tolist(),
                       "nodes": [str(n) for n in node_ids], "series": series})


def _cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    net, sg, sps = _scenario_systems(sc)
    model = ModelKind(args.model) if args.model else sc.sim.model
    t_end = args.t_end if args.t_end is not None else sc.sim.t_end
    dt = args.dt if args.dt is not None else sc.sim.dt
    v0 = sc.initial_voltages(net.node_ids, seed=args.seed)
    events = sc.sim_events(net.node_ids)
    use_sg = sg if model not in (ModelKind.FAST_LINEAR, ModelKind.SLOW_LINEAR) else None
    traj = simulate(net, sc.params, sps, model=model, t_end=t_end, dt=dt,
                    save_every=sc.sim.save_every, v0=v0, events=events,
                    sg=use_sg, backend=args.backend)
    print(f"scenario: {sc.name}, model {model.value}")
    print(f"integrated to t = {traj.t[-1]:.6g} s "
          f"({len(traj.t)} samples): {traj.status}")
    if traj.status == "completed" and len(traj.t) >= 3:
        sync = detect_sync(traj)
        if sync.synced:
            print(f"synchronized from t = {sync.time:.6g} s at "
                  f"{sync.frequency.imag:.9g} rad/s "
                  f"({sync.frequency.imag / sc.omega0:.9g} per unit), "
                  f"decay {sync.frequency.real:.3g} 1/s")
        else:
            print("no synchronized window detected")
    if args.out:
        if args.format == "json":
            _write_traj_json(args.out, traj, net.node_ids, sc)
        else:
            _write_traj_csv(args.out, traj, net.node_ids)
        print(f"trajectory written to {args.out}")
    if args.plot:
        labels = tuple(f"node {nid}" for nid in net.node_ids)
        panels = [Panel(traj.t, np.abs(traj.v), labels, "|v|"),
                  Panel(traj.t, traj.frequency.imag, labels, "omega (rad/s)")]
        line_plot(args.plot, panels, f"{sc.name}: {model.value}", "t (s)")
        print(f"plot written to {args.plot}")
    return 0 if traj.status == "completed" else 2


# ---------------------------------------------------------------------------
# nyquist
# ---------------------------------------------------------------------------

def _write_curve_csv(path: str, curve):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("omega,re,im\n")
        for s, f in zip(curve.s, curve.values):
            fh.write(f"{_g17(s.imag)},{_g17(f.real)},{_g17(f.imag)}\n")


def _cmd_nyquist(args) -> int:
    sc = load_scenario(args.scenario)
    net, sg, sps = _scenario_systems(sc)
    if args.which == "sync":
        port_id = args.port if args.port is not None else sc.analysis.port
        port = net.index(port_id) if port_id is not None else 0
        dynamic = args.network == "dynamic"
        res = criterion_sync(net, sc.params, sps, port=port, dynamic=dynamic)
        print(f"scenario: {sc.name}, aggregated admittance at node "
              f"{net.node_ids[port]} ({args.network} network)")
        print(f"winding {res.winding}, poles in RHP {res.rhp_poles} "
              f"-> modes in RHP {res.rhp_zeros} (residual {res.residual:.2g})")
        print(f"synchronization: {'PASS' if res.passed else 'FAIL'} "
              f"(at most one unregulated mode allowed)")
        curve = res.curve
        passed = res.passed
    else:
        _, sys_s = _build_slow(sc)
        res = criterion_voltage(sys_s)
        print(f"scenario: {sc.name}, two-channel voltage loop")
        print(f"winding {res.winding} (residual {res.residual:.2g})")
        print(f"voltage regulation: {'PASS' if res.passed else 'FAIL'} "
              f"(zero encirclements required)")
        curve = res.curve
        passed = res.passed
    if args.out:
        _write_curve_csv(args.out, curve)
        print(f"curve written to {args.out}")
    if args.plot:
        plane_plot(args.plot, curve.values,
                   f"{sc.name}: {args.which} response", mark=0.0 + 0.0j)
        print(f"plot written to {args.plot}")
    return 0 if passed else 2


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def run_check(path: str) -> dict:
    """All applicable stability checks for one scenario file."""
    report: dict = {"file": path, "status": "ok", "checks": {}}
    try:
        sc = load_scenario(path)
        report["scenario"] = sc.name
        report["sha256"] = sc.sha256
        checks = report["checks"]
        gate = []

        net, sys_f = _build_fast(sc)
        verdict = sync_verdict(sys_f, sc.analysis.delta_bar, sc.analysis.gamma_bar)
        checks["spectral"] = verdict.as_dict()["condition1"]
        gate.append(bool(verdict.condition1.passed))
        if verdict.condition2 is not None:
            checks["parametric"] = verdict.as_dict()["condition2"]

        _, sys_s = _build_slow(sc)
        eq = solve_equilibrium(sys_s)
        lam = error_spectrum(sys_s)
        max_re = float(lam.real.max())
        checks["slow"] = {"passed": max_re <= _SLOW_STABLE_TOL,
                          "max_re": max_re,
                          "residual": eq.residual,
                          "frequency": steady_state_frequency(sys_s)}
        gate.append(bool(checks["slow"]["passed"]))

        sps = sc.ordered_setpoints(net.node_ids)
        port_id = sc.analysis.port
        port = net.index(port_id) if port_id is not None else 0
        res = criterion_sync(net, sc.params, sps, port=port, dynamic=False)
        checks["sync_nyquist"] = res.as_dict()
        gate.append(bool(res.passed))
        checks["routes_agree"] = bool(res.passed == verdict.condition1.passed)
        gate.append(checks["routes_agree"])

        vres = criterion_voltage(sys_s)
        checks["voltage_nyquist"] = vres.as_dict()
        gate.append(bool(vres.passed))

        report["passed"] = all(gate)
    except (ConfigurationError, DomainError, NumericalError) as exc:
        report["status"] = "error"
        report["error"] = str(exc)
        report["passed"] = False
    return report


def _cmd_check(args) -> int:
    if args.all:
        pattern = os.path.join(args.all, "*.yaml")
        files = sorted(glob.glob(pattern))
        if not files:
            print(f"no scenario files match {pattern}", file=sys.stderr)
            return 1
    else:
        if not args.scenario:
            print("a scenario file or --all DIR is required", file=sys.stderr)
            return 1
        files = [args.scenario]

    if len(files) > 1:
        workers = int(os.environ.get("CFSYNC_THREADS", "0")) or os.cpu_count() or 1
        workers = max(1, min(workers, len(files)))
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run_check, files))
    else:
        reports = [run_check(files[0])]

    any_error = False
    any_fail = False
    for rep in reports:
        name = rep.get("scenario", os.path.basename(rep["file"]))
        if rep["status"] == "error":
            any_error = True
            print(f"ERROR {name}: {rep['error']}")
            continue
        ran = [k for k, v in rep["checks"].items()
               if isinstance(v, dict) and "passed" in v]
        failed = [k for k in ran if not rep["checks"][k]["passed"]]
        if rep["passed"]:
            print(f"PASS  {name} ({len(ran)} checks)")
        else:
            any_fail = True
            print(f"FAIL  {name}: {', '.join(failed)}")

    if args.report:
        payload = {"reports": reports,
                   "passed": not (any_error or any_fail)}
        _write_json(args.report, payload)
        print(f"report written to {args.report}")
    if any_error:
        return 1
    return 2 if any_fail else 0


# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="cfsync",
                     description="Synchronization analysis and simulation of "
                                 "dispatchable virtual oscillator networks")
    parser.add_argument("--version", action="version", version=f"cfsync {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze-fast", parents=[], help="voltage-dynamics spectral checks")
    p.add_argument("scenario")
    p.add_argument("--delta-bar", type=float, default=None,
                   help="assumed angle spread for the parametric test (rad)")
    p.add_argument("--gamma-bar", type=float, default=None,
                   help="assumed magnitude spread for the parametric test")
    p.add_argument("--json", default=None, help="write the verdict as JSON")
    p.set_defaults(func=_cmd_analyze_fast)

    p = sub.add_parser("analyze-slow", help="equilibrium and regulation checks")
    p.add_argument("scenario")
    p.add_argument("--json", default=None, help="write the verdict as JSON")
    p.set_defaults(func=_cmd_analyze_slow)

    p = sub.add_parser("simulate", help="integrate one model and export the run")
    p.add_argument("scenario")
    p.add_argument("--model", choices=[m.value for m in ModelKind], default=None)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--seed", type=int, default=None,
                   help="override the random initial-state seed")
    p.add_argument("--out", default=None, help="trajectory file to write")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--plot", default=None, help="SVG plot to write")
    p.add_argument("--backend", choices=["numba", "numpy"], default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("nyquist", help="frequency-domain stability tests")
    p.add_argument("scenario")
    p.add_argument("--which", choices=["sync", "voltage"], default="sync")
    p.add_argument("--port", type=int, default=None,
                   help="converter node id for the aggregation")
    p.add_argument("--network", choices=["dynamic", "static"], default="dynamic",
                   help="branch model for the sync test")
    p.add_argument("--out", default=None, help="curve CSV to write")
    p.add_argument("--plot", default=None, help="SVG plot to write")
    p.set_defaults(func=_cmd_nyquist)

    p = sub.add_parser("check", help="run every applicable stability check")
    p.add_argument("scenario", nargs="?", default=None)
    p.add_argument("--all", default=None, metavar="DIR",
                   help="check every *.yaml scenario in a directory")
    p.add_argument("--report", default=None, help="write a JSON report")
    p.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, NumericalError,
            UnsupportedConfigurationError, OSError) as exc:
        print(f"cfsync: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
