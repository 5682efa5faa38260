"""Scenario files: schema, validation, and assembly into model objects.

A scenario is a YAML document naming the network, the converter tuning,
the setpoints, and optionally an initial state, a simulation request,
timed events, fixed generator voltages, and analysis options.  Parsing
keeps source line numbers so schema errors point at the offending line,
and unknown keys are rejected rather than ignored.

Tuning units: ``control.eta`` is the dimensionless droop slope tying
normalized power deviations to per-unit frequency deviations.  The
dynamic gain used everywhere downstream is ``eta * omega0`` (rad/s);
the conversion happens here, once, on load.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .controllers import DvocParams, Setpoints
from .errors import ConfigurationError
from .network import (BranchSpec, NetworkModel, NodeRole, ReducedNetwork,
                      reduce_network, sg_partition)
from .sim import GainChange, ModelKind, SetpointChange, SgBoundary

__all__ = ["Scenario", "load_scenario", "parse_scenario"]

_ROLES = {"converter": NodeRole.CONVERTER, "load": NodeRole.LOAD,
          "generator": NodeRole.GENERATOR}


class _Node:
    __slots__ = ("kind", "value", "line")

    def __init__(self, kind, value, line):
        self.kind = kind
        self.value = value
        self.line = line


def _wrap(node, fname):
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k_node, v_node in node.value:
            if not isinstance(k_node, yaml.ScalarNode):
                raise ConfigurationError(f"{fname}:{line}: mapping keys must be scalars")
            key = str(k_node.value)
            if key in out:
                raise ConfigurationError(
                    f"{fname}:{k_node.start_mark.line + 1}: duplicate key {key!r}")
            out[key] = _wrap(v_node, fname)
        return _Node("map", out, line)
    if isinstance(node, yaml.SequenceNode):
        return _Node("seq", [_wrap(v, fname) for v in node.value], line)
    tag = node.tag.rsplit(":", 1)[-1]
    raw = node.value
    if tag == "int":
        value = int(raw.replace("_", ""), 0)
    elif tag == "float":
        value = float(raw.replace("_", ""))
    elif tag == "bool":
        value = raw.lower() in ("true", "yes", "on")
    elif tag == "null":
        value = None
    else:
        value = raw
    return _Node("scalar", value, line)


class _Section:
    """One mapping node with take-and-check-leftovers access."""

    def __init__(self, node: _Node, path: str, fname: str):
        if node.kind != "map":
            raise ConfigurationError(f"{fname}:{node.line}: {path} must be a mapping")
        self._left = dict(node.value)
        self.path = path
        self.fname = fname
        self.line = node.line

    def fail(self, line, msg):
        raise ConfigurationError(f"{self.fname}:{line}: {msg}")

    def take(self, key, required=False) -> _Node | None:
        node = self._left.pop(key, None)
        if node is None and required:
            self.fail(self.line, f"{self.path} is missing required key {key!r}")
        return node

    def finish(self):
        if self._left:
            key, node = next(iter(self._left.items()))
            self.fail(node.line, f"unknown key {key!r} in {self.path}")

    def _scalar(self, key, required, default, caster, what):
        node = self.take(key, required)
        if node is None:
            return default
        if node.kind != "scalar":
            self.fail(node.line, f"{self.path}.{key} must be a {what}")
        try:
            return caster(node.value)
        except (TypeError, ValueError):
            self.fail(node.line, f"{self.path}.{key} must be a {what}, "
                                 f"got {node.value!r}")

    def float_(self, key, required=False, default=None):
        def cast(v):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValueError
            v = float(v)
            if not math.isfinite(v):
                raise ValueError
            return v
        return self._scalar(key, required, default, cast, "finite number")

    def int_(self, key, required=False, default=None):
        def cast(v):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValueError
            return v
        return self._scalar(key, required, default, cast, "whole number")

    def str_(self, key, required=False, default=None):
        def cast(v):
            if not isinstance(v, str):
                raise ValueError
            return v
        return self._scalar(key, required, default, cast, "string")

    def map_(self, key, required=False) -> "_Section | None":
        node = self.take(key, required)
        if node is None:
            return None
        return _Section(node, f"{self.path}.{key}", self.fname)

    def seq_(self, key, required=False):
        node = self.take(key, required)
        if node is None:
            return None
        if node.kind != "seq":
            self.fail(node.line, f"{self.path}.{key} must be a list")
        return node


@dataclass
class InitialSpec:
    kind: str = "flat"
    magnitude: float = 0.1
    seed: int | None = None
    voltages: dict = field(default_factory=dict)


@dataclass
class SimSpec:
    model: ModelKind = ModelKind.NONLINEAR_FILTERED
    t_end: float = 1.0
    dt: float | None = None
    save_every: int | None = None


@dataclass
class AnalysisSpec:
    delta_bar: float | None = None
    gamma_bar: float | None = None
    port: int | None = None  # node id, not index


@dataclass
class Scenario:
    name: str
    source: str | None
    sha256: str
    network: NetworkModel
    omega0: float
    params: DvocParams
    setpoints: dict       # node id -> Setpoints
    initial: InitialSpec
    sim: SimSpec
    events: list          # raw (time, kind, payload) with node ids
    generator_voltages: dict
    analysis: AnalysisSpec
    _reduced: ReducedNetwork | None = field(default=None, repr=False)

    @property
    def has_generators(self) -> bool:
        return bool(self.generator_voltages)

    def reduced(self) -> ReducedNetwork:
        if self._reduced is None:
            self._reduced = reduce_network(self.network, self.omega0)
        return self._reduced

    def split(self):
        """Converter-block network plus the generator boundary, if any."""
        red = self.reduced()
        if not self.has_generators:
            return red, None
        part = sg_partition(red, self.network.nodes)
        v_sg = np.array([self.generator_voltages[g] for g in part.generator_ids])
        return part.converter, SgBoundary(part.coupling, v_sg)

    def ordered_setpoints(self, node_ids) -> list:
        return [self.setpoints[nid] for nid in node_ids]

    def initial_voltages(self, node_ids, seed: int | None = None) -> np.ndarray:
        spec = self.initial
        sps = self.ordered_setpoints(node_ids)
        if spec.kind == "flat":
            return np.array([sp.v_star + 0j for sp in sps])
        if spec.kind == "random":
            use = spec.seed if seed is None else seed
            rng = np.random.default_rng(use)
            z = rng.standard_normal(len(sps)) + 1j * rng.standard_normal(len(sps))
            return spec.magnitude * z / math.sqrt(2.0)
        out = []
        for nid in node_ids:
            if nid not in spec.voltages:
                raise ConfigurationError(f"initial_state has no voltage for node {nid}")
            out.append(spec.voltages[nid])
        return np.array(out, dtype=complex)

    def sim_events(self, node_ids) -> list:
        out = []
        index = {nid: i for i, nid in enumerate(node_ids)}
        for time, kind, payload in self.events:
            if kind == "set_alpha":
                out.append(GainChange(time, payload["alpha"]))
            else:
                nid = payload["node"]
                if nid not in index:
                    raise ConfigurationError(
                        f"event at t={time} targets node {nid}, which is not simulated")
                out.append(SetpointChange(time, index[nid], payload["p"],
                                          payload["q"], payload.get("v")))
        return out


def _parse_network(sec: _Section, fname: str) -> NetworkModel:
    nodes: dict = {}
    shunts: dict = {}
    nodes_seq = sec.seq_("nodes", required=True)
    for item in nodes_seq.value:
        row = _Section(item, "network.nodes[]", fname)
        nid = row.int_("id", required=True)
        if nid in nodes:
            row.fail(row.line, f"duplicate node id {nid}")
        role_name = row.str_("role", default="converter")
        if role_name not in _ROLES:
            row.fail(row.line, f"role must be one of {sorted(_ROLES)}, got {role_name!r}")
        nodes[nid] = _ROLES[role_name]
        shunt = row.map_("shunt")
        if shunt is not None:
            r = shunt.float_("r", default=0.0)
            x = shunt.float_("x", default=0.0)
            shunt.finish()
            if r == 0.0 and x == 0.0:
                row.fail(shunt.line, "shunt impedance must be nonzero")
            shunts[nid] = 1.0 / complex(r, x)
        row.finish()
    branches = []
    branch_seq = sec.seq_("branches", required=True)
    for item in branch_seq.value:
        row = _Section(item, "network.branches[]", fname)
        a = row.int_("from", required=True)
        b = row.int_("to", required=True)
        r = row.float_("r", default=0.0)
        x = row.float_("x", default=0.0)
        row.finish()
        try:
            branches.append(BranchSpec(a, b, r, x))
        except ConfigurationError as exc:
            row.fail(row.line, str(exc))
    sec.finish()
    try:
        return NetworkModel(nodes, branches, shunts)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{fname}:{sec.line}: {exc}") from None


def _parse_control(sec: _Section, omega0: float) -> DvocParams:
    eta_slope = sec.float_("eta", required=True)
    alpha = sec.float_("alpha", default=0.0)
    tau = sec.float_("tau", default=0.01)
    phi = sec.float_("phi", default=0.0)
    sec.finish()
    if eta_slope <= 0:
        sec.fail(sec.line, f"control.eta must be positive, got {eta_slope}")
    try:
        return DvocParams(eta=eta_slope * omega0, alpha=alpha, tau=tau,
                          phi=phi, omega0=omega0)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{sec.fname}:{sec.line}: {exc}") from None


def parse_scenario(text: str, source: str | None = None) -> Scenario:
    """Parse and validate one scenario document."""
    fname = source if source is not None else "<scenario>"
    try:
        root_node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{fname}: not valid YAML ({exc})") from None
    if root_node is None:
        raise ConfigurationError(f"{fname}: document is empty")
    root = _Section(_wrap(root_node, fname), "scenario", fname)

    default_name = os.path.splitext(os.path.basename(fname))[0] if source else "scenario"
    name = root.str_("name", default=default_name)
    omega0 = root.float_("omega0", default=100.0 * math.pi)
    if omega0 <= 0:
        root.fail(root.line, f"omega0 must be positive, got {omega0}")

    network = _parse_network(root.map_("network", required=True), fname)
    params = _parse_control(root.map_("control", required=True), omega0)

    converters = network.roles(NodeRole.CONVERTER)
    setpoints: dict = {}
    sp_seq = root.seq_("setpoints", required=True)
    for item in sp_seq.value:
        row = _Section(item, "setpoints[]", fname)
        nid = row.int_("node", required=True)
        if nid not in network.nodes:
            row.fail(row.line, f"setpoint for unknown node {nid}")
        if network.nodes[nid] is not NodeRole.CONVERTER:
            row.fail(row.line, f"setpoint for non-converter node {nid}")
        if nid in setpoints:
            row.fail(row.line, f"duplicate setpoint for node {nid}")
        p = row.float_("p", required=True)
        q = row.float_("q", required=True)
        v = row.float_("v", default=1.0)
        row.finish()
        try:
            setpoints[nid] = Setpoints(p, q, v)
        except ConfigurationError as exc:
            row.fail(row.line, str(exc))
    missing = [nid for nid in converters if nid not in setpoints]
    if missing:
        root.fail(sp_seq.line, f"missing setpoints for converter nodes {missing}")

    initial = InitialSpec()
    init_sec = root.map_("initial_state")
    if init_sec is not None:
        kind = init_sec.str_("kind", default="flat")
        if kind not in ("flat", "random", "explicit"):
            init_sec.fail(init_sec.line, f"initial_state.kind must be "
                                         f"flat/random/explicit, got {kind!r}")
        initial.kind = kind
        if kind == "random":
            initial.magnitude = init_sec.float_("magnitude", default=0.1)
            initial.seed = init_sec.int_("seed", required=True)
            if initial.magnitude <= 0:
                init_sec.fail(init_sec.line, "initial_state.magnitude must be positive")
        elif kind == "explicit":
            volt_seq = init_sec.seq_("voltages", required=True)
            for item in volt_seq.value:
                row = _Section(item, "initial_state.voltages[]", fname)
                nid = row.int_("node", required=True)
                re = row.float_("re", required=True)
                im = row.float_("im", default=0.0)
                row.finish()
                initial.voltages[nid] = complex(re, im)
        init_sec.finish()

    sim = SimSpec()
    sim_sec = root.map_("simulation")
    if sim_sec is not None:
        model_name = sim_sec.str_("model", default=sim.model.value)
        try:
            sim.model = ModelKind(model_name)
        except ValueError:
            sim_sec.fail(sim_sec.line, f"unknown simulation.model {model_name!r}")
        sim.t_end = sim_sec.float_("t_end", default=1.0)
        sim.dt = sim_sec.float_("dt")
        save = sim_sec.int_("save_every")
        sim_sec.finish()
        if sim.t_end <= 0:
            sim_sec.fail(sim_sec.line, "simulation.t_end must be positive")
        if sim.dt is not None and sim.dt <= 0:
            sim_sec.fail(sim_sec.line, "simulation.dt must be positive")
        if save is not None:
            if save < 1:
                sim_sec.fail(sim_sec.line, "simulation.save_every must be at least 1")
            sim.save_every = save

    events = []
    ev_seq = root.seq_("events")
    if ev_seq is not None:
        for item in ev_seq.value:
            row = _Section(item, "events[]", fname)
            time = row.float_("time", required=True)
            kind = row.str_("kind", required=True)
            if time < 0:
                row.fail(row.line, "event time must be nonnegative")
            if kind == "set_alpha":
                alpha = row.float_("alpha", required=True)
                if alpha < 0:
                    row.fail(row.line, "alpha must be nonnegative")
                events.append((time, kind, {"alpha": alpha}))
            elif kind == "set_setpoint":
                nid = row.int_("node", required=True)
                if nid not in network.nodes or network.nodes[nid] is not NodeRole.CONVERTER:
                    row.fail(row.line, f"event targets non-converter node {nid}")
                payload = {"node": nid, "p": row.float_("p", required=True),
                           "q": row.float_("q", required=True)}
                v = row.float_("v")
                if v is not None:
                    if v <= 0:
                        row.fail(row.line, "voltage target must be positive")
                    payload["v"] = v
                events.append((time, kind, payload))
            else:
                row.fail(row.line, f"unknown event kind {kind!r}")
            row.finish()

    generators = network.roles(NodeRole.GENERATOR)
    gen_voltages: dict = {}
    gen_sec = root.map_("generators")
    if generators and gen_sec is None:
        root.fail(root.line, "network has generator nodes but no generators section")
    if gen_sec is not None:
        if not generators:
            gen_sec.fail(gen_sec.line, "generators section without generator nodes")
        volt_seq = gen_sec.seq_("voltages", required=True)
        for item in volt_seq.value:
            row = _Section(item, "generators.voltages[]", fname)
            nid = row.int_("node", required=True)
            if nid not in generators:
                row.fail(row.line, f"voltage for non-generator node {nid}")
            re = row.float_("re", required=True)
            im = row.float_("im", default=0.0)
            row.finish()
            if re == 0.0 and im == 0.0:
                row.fail(row.line, "generator voltage must be nonzero")
            gen_voltages[nid] = complex(re, im)
        gen_sec.finish()
        missing = [nid for nid in generators if nid not in gen_voltages]
        if missing:
            root.fail(volt_seq.line, f"missing voltages for generator nodes {missing}")

    analysis = AnalysisSpec()
    an_sec = root.map_("analysis")
    if an_sec is not None:
        analysis.delta_bar = an_sec.float_("delta_bar")
        analysis.gamma_bar = an_sec.float_("gamma_bar")
        port = an_sec.int_("port")
        an_sec.finish()
        if port is not None:
            if port not in converters:
                an_sec.fail(an_sec.line, f"analysis.port {port} is not a converter node")
            analysis.port = port

    root.finish()
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return Scenario(name=name, source=source, sha256=digest, network=network,
                    omega0=omega0, params=params, setpoints=setpoints,
                    initial=initial, sim=sim, events=events,
                    generator_voltages=gen_voltages, analysis=analysis)


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_scenario(text, source=path)
