"""Network models and admittance algebra.

All quantities are per-unit on a common system base.  Branch reactances
are given at the nominal angular frequency omega0.  The assembled nodal
admittance matrix follows the standard convention: off-diagonal entries
are the negated branch admittances, diagonal entries collect incident
branch plus shunt admittances.  A network without shunts therefore has
exact zero row sums (a complex-weighted Laplacian), which is what the
synchronization analysis relies on.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError

__all__ = [
    "NodeRole",
    "BranchSpec",
    "NetworkModel",
    "ReducedNetwork",
    "SgPartition",
    "build_admittance",
    "kron_reduce",
    "reduce_network",
    "sg_partition",
    "normalized_power_flow",
    "linear_power_flow",
    "algebraic_connectivity",
    "canon3",
    "CANON3_BRANCHES",
]

# Conditioning limit for the eliminated block in a Kron reduction.
_KRON_COND_LIMIT = 1e12
# Relative tolerance for symmetry / row-sum integrity checks.
_STRUCT_TOL = 1e-9


class NodeRole(enum.Enum):
    CONVERTER = "converter"
    LOAD = "load"
    GENERATOR = "generator"


@dataclass(frozen=True)
class BranchSpec:
    """Series RL branch between two nodes: r >= 0, x at omega0, (r, x) != (0, 0)."""

    from_node: object
    to_node: object
    r: float
    x: float

    def __post_init__(self):
        if self.from_node == self.to_node:
            raise ConfigurationError(f"branch endpoints coincide: {self.from_node!r}")
        if not (math.isfinite(self.r) and math.isfinite(self.x)):
            raise ConfigurationError("branch parameters must be finite")
        if self.r < 0.0:
            raise ConfigurationError(f"negative branch resistance {self.r}")
        if self.r == 0.0 and self.x == 0.0:
            raise ConfigurationError("branch with zero impedance")

    @property
    def impedance(self) -> complex:
        return complex(self.r, self.x)

    @property
    def admittance(self) -> complex:
        return 1.0 / complex(self.r, self.x)


@dataclass
class NetworkModel:
    """Connected AC network: node roles, series branches, shunt admittances.

    ``nodes`` maps node id -> NodeRole; insertion order fixes the matrix
    index order.  ``shunts`` maps node id -> complex shunt admittance.
    """

    nodes: dict
    branches: list
    shunts: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.nodes:
            raise ConfigurationError("network has no nodes")
        for nid, role in self.nodes.items():
            if not isinstance(role, NodeRole):
                raise ConfigurationError(f"node {nid!r} role must be a NodeRole, got {role!r}")
        known = set(self.nodes)
        for br in self.branches:
            if br.from_node not in known or br.to_node not in known:
                raise ConfigurationError(f"branch {br.from_node!r}-{br.to_node!r} references unknown node")
        for nid in self.shunts:
            if nid not in known:
                raise ConfigurationError(f"shunt at unknown node {nid!r}")
        self._check_connected()

    def _check_connected(self):
        ids = list(self.nodes)
        parent = {nid: nid for nid in ids}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for br in self.branches:
            ra, rb = find(br.from_node), find(br.to_node)
            if ra != rb:
                parent[ra] = rb
        roots = {find(nid) for nid in ids}
        if len(roots) > 1:
            raise ConfigurationError(f"network is not connected ({len(roots)} components)")

    @property
    def node_ids(self) -> list:
        return list(self.nodes)

    def index(self, node_id) -> int:
        return self.node_ids.index(node_id)

    def roles(self, role: NodeRole) -> list:
        return [nid for nid, r in self.nodes.items() if r is role]


@dataclass
class ReducedNetwork:
    """Converter-level network after load elimination.

    ``y`` is the stored admittance matrix with exact zero row sums (when
    ``laplacian`` is set); any shunt components produced by the
    reduction were split off into ``setpoint_shift``, to be added to the
    per-node normalized power setpoints.  When the matrix is a partition
    block with external coupling (generator-augmented systems) it is not
    a Laplacian and ``laplacian`` is False.
    """

    y: np.ndarray
    setpoint_shift: np.ndarray
    node_ids: tuple
    laplacian: bool = True

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.complex128)
        self.setpoint_shift = np.asarray(self.setpoint_shift, dtype=np.complex128)
        n = self.y.shape[0]
        if self.y.shape != (n, n):
            raise ConfigurationError("admittance matrix must be square")
        if self.setpoint_shift.shape != (n,):
            raise ConfigurationError("setpoint shift length must match the matrix")
        if len(self.node_ids) != n:
            raise ConfigurationError("node id count must match the matrix")
        scale = max(1.0, float(np.max(np.abs(self.y))) if n else 1.0)
        if np.max(np.abs(self.y - self.y.T)) > _STRUCT_TOL * scale:
            raise ConfigurationError("admittance matrix must be symmetric")
        if self.laplacian:
            rs = float(np.max(np.abs(self.y.sum(axis=1))))
            if rs > _STRUCT_TOL * scale:
                raise ConfigurationError(f"row sums not zero (max |sum| = {rs:.3e})")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def index(self, node_id) -> int:
        return self.node_ids.index(node_id)


@dataclass
class SgPartition:
    """Converter/generator block partition of a reduced admittance matrix."""

    converter: ReducedNetwork  # converter block; not a Laplacian on its own
    coupling: np.ndarray       # converter-to-generator block
    generator_block: np.ndarray
    generator_ids: tuple


def build_admittance(model: NetworkModel, omega0: float) -> np.ndarray:
    """Assemble the full nodal admittance matrix of ``model``.

    ``omega0`` (rad/s) is the frequency at which branch reactances and
    shunt susceptances are stated; the per-unit constants enter the
    matrix directly.
    """
    if not (omega0 > 0.0 and math.isfinite(omega0)):
        raise ConfigurationError(f"omega0 must be positive, got {omega0!r}")
    ids = model.node_ids
    idx = {nid: i for i, nid in enumerate(ids)}
    n = len(ids)
    y = np.zeros((n, n), dtype=np.complex128)
    for br in model.branches:
        a, b = idx[br.from_node], idx[br.to_node]
        adm = br.admittance
        y[a, b] -= adm
        y[b, a] -= adm
        y[a, a] += adm
        y[b, b] += adm
    for nid, sh in model.shunts.items():
        y[idx[nid], idx[nid]] += complex(sh)
    return y


def _laplacianize(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a symmetric admittance matrix into (zero-row-sum part, shift).

    The shunt component of row k equals its row sum rho_k; the stored
    matrix gets diagonal -sum(off-diagonals) and the normalized setpoint
    absorbs the shunt as a shift of -rho_k.
    """
    y = np.asarray(y, dtype=np.complex128)
    off = y - np.diag(np.diag(y))
    diag = -off.sum(axis=1)
    y_stored = off + np.diag(diag)
    rho = np.diag(y).astype(np.complex128) - diag
    return y_stored, -rho


def kron_reduce(y_full: np.ndarray, keep) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian elimination of the non-kept nodes of an admittance matrix.

    Returns ``(y_reduced, setpoint_shift)`` where ``y_reduced`` has exact
    zero row sums and ``setpoint_shift`` holds the equivalent shunt of
    each kept node, sign-converted so that the effective normalized
    setpoint is ``varsigma* + shift``.

    Raises NumericalError when the eliminated block is singular or has a
    condition number above 1e12.
    """
    y_full = np.asarray(y_full, dtype=np.complex128)
    n = y_full.shape[0]
    keep = list(keep)
    if len(set(keep)) != len(keep):
        raise ConfigurationError("duplicate indices in keep list")
    if not keep:
        raise ConfigurationError("must keep at least one node")
    if any(k < 0 or k >= n for k in keep):
        raise ConfigurationError("keep index out of range")
    elim = [i for i in range(n) if i not in set(keep)]
    ykk = y_full[np.ix_(keep, keep)]
    if elim:
        yee = y_full[np.ix_(elim, elim)]
        cond = np.linalg.cond(yee)
        if not np.isfinite(cond) or cond > _KRON_COND_LIMIT:
            raise NumericalError(
                f"eliminated block is near-singular (condition number {cond:.3e})")
        yek = y_full[np.ix_(elim, keep)]
        yred = ykk - y_full[np.ix_(keep, elim)] @ np.linalg.solve(yee, yek)
    else:
        yred = ykk.copy()
    yred = 0.5 * (yred + yred.T)  # restore symmetry lost to roundoff
    return _laplacianize(yred)


def reduce_network(model: NetworkModel, omega0: float) -> ReducedNetwork:
    """Eliminate the load nodes of ``model`` and return the reduced network.

    Converter and generator nodes are kept (in model order); shunts at
    kept nodes and equivalent shunts of eliminated loads both end up in
    the setpoint shift.
    """
    y_full = build_admittance(model, omega0)
    ids = model.node_ids
    keep = [i for i, nid in enumerate(ids) if model.nodes[nid] is not NodeRole.LOAD]
    if not keep:
        raise ConfigurationError("network has no converter or generator nodes")
    y, shift = kron_reduce(y_full, keep)
    kept_ids = tuple(ids[i] for i in keep)
    return ReducedNetwork(y=y, setpoint_shift=shift, node_ids=kept_ids)


def sg_partition(reduced: ReducedNetwork, roles: dict) -> SgPartition:
    """Split a reduced network into converter and generator blocks.

    ``roles`` maps node id -> NodeRole for every kept node.  The
    converter block keeps its setpoint shifts but is no longer a
    Laplacian: its missing row-sum mass is exactly the coupling to the
    generator nodes, which enters the dynamics as a forcing term.
    """
    conv = [i for i, nid in enumerate(reduced.node_ids) if roles[nid] is NodeRole.CONVERTER]
    gen = [i for i, nid in enumerate(reduced.node_ids) if roles[nid] is NodeRole.GENERATOR]
    if not conv:
        raise ConfigurationError("partition has no converter nodes")
    if not gen:
        raise ConfigurationError("partition has no generator nodes")
    if len(conv) + len(gen) != reduced.n:
        raise ConfigurationError("roles must classify every kept node as converter or generator")
    y = reduced.y
    block = ReducedNetwork(
        y=y[np.ix_(conv, conv)],
        setpoint_shift=reduced.setpoint_shift[conv],
        node_ids=tuple(reduced.node_ids[i] for i in conv),
        laplacian=False,
    )
    return SgPartition(
        converter=block,
        coupling=y[np.ix_(conv, gen)].copy(),
        generator_block=y[np.ix_(gen, gen)].copy(),
        generator_ids=tuple(reduced.node_ids[i] for i in gen),
    )


def normalized_power_flow(net: ReducedNetwork | np.ndarray, v: np.ndarray) -> np.ndarray:
    """Conjugate normalized power drawn from each node: (Y v)_k / v_k.

    Equals rho + j*sigma with rho the normalized active and sigma the
    normalized reactive component, i.e. the complex conjugate of s/v^2.
    """
    y = net.y if isinstance(net, ReducedNetwork) else np.asarray(net, dtype=np.complex128)
    v = np.asarray(v, dtype=np.complex128)
    if np.any(v == 0):
        raise ConfigurationError("normalized power flow is undefined at zero voltage")
    return (y @ v) / v


def linear_power_flow(net: ReducedNetwork | np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Linearized (dc) normalized power flow Y @ theta in complex-angle coordinates."""
    y = net.y if isinstance(net, ReducedNetwork) else np.asarray(net, dtype=np.complex128)
    return y @ np.asarray(theta, dtype=np.complex128)


def algebraic_connectivity(net: ReducedNetwork | np.ndarray, phi: float) -> float:
    """Second-smallest eigenvalue of the rotated real part Re(e^{j phi} Y).

    For a Laplacian Y with passive branches and phi in [0, pi/2] this is
    the algebraic connectivity of the rotated conductance graph.  A
    non-Laplacian or indefinite input still yields the eigenvalue but
    triggers a warning, since the connectivity interpretation is lost.
    """
    if isinstance(net, ReducedNetwork):
        y = net.y
        if not net.laplacian:
            warnings.warn("rotated connectivity of a non-Laplacian block has no "
                          "connectivity interpretation", stacklevel=2)
    else:
        y = np.asarray(net, dtype=np.complex128)
    n = y.shape[0]
    if n < 2:
        raise ConfigurationError("need at least two nodes for a second eigenvalue")
    m = (np.exp(1j * phi) * y).real
    m = 0.5 * (m + m.T)
    evals = np.linalg.eigvalsh(m)
    scale = max(1.0, float(np.max(np.abs(evals))))
    if evals[0] < -1e-10 * scale:
        warnings.warn(f"rotated conductance matrix is indefinite "
                      f"(min eigenvalue {evals[0]:.3e})", stacklevel=2)
    return float(evals[1])


# Reference three-converter benchmark network used across tests and docs:
# a triangle of RL branches with distinct r/x ratios, no shunts.
CANON3_BRANCHES = (
    BranchSpec(1, 2, 0.02, 0.10),
    BranchSpec(2, 3, 0.05, 0.05),
    BranchSpec(1, 3, 0.01, 0.12),
)


def canon3() -> NetworkModel:
    """The three-converter triangle benchmark network."""
    return NetworkModel(
        nodes={1: NodeRole.CONVERTER, 2: NodeRole.CONVERTER, 3: NodeRole.CONVERTER},
        branches=list(CANON3_BRANCHES),
    )
