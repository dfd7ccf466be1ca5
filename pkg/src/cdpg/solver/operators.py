"""Dual operators of the penalized dual problem and step-size selection.

Every agent (i, j) owns ``lambda_ij = [mu_ij, gamma_ij, theta_ij]`` of size
``M + n_i*M + B``. The local operators are

    H_ij = [-I_M, -(column j of L^i kron I_M)^T, -(A_i / n_i)^T]
    E_ij = [0, 0, kappa_i * eta_ij * b^T]

and ``Z`` stacks one signed-difference block per consensus edge: ``n_i*M``
rows for each intra-cluster edge (gamma agreement) followed by ``B`` rows for
each global edge (theta agreement). ``D`` weights each block with the
penalty of the edge's lower-indexed endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AssemblyError, NumericalError, ValidationError
from ..graph import MultiClusterNetwork, NeighborSets, laplacian, neighbor_sets, relabel_agent
from ..problem import ScenarioSpec

INTRA = "intra"
GLOBAL = "global"


@dataclass(frozen=True)
class AgentOperators:
    agent: tuple[int, int]
    index: int
    offset: int
    M: int
    n: int
    B: int
    H: np.ndarray
    E: np.ndarray
    A_slice: np.ndarray

    @property
    def size(self) -> int:
        return self.M + self.n * self.M + self.B

    @property
    def mu(self) -> slice:
        return slice(0, self.M)

    @property
    def gamma(self) -> slice:
        return slice(self.M, self.M + self.n * self.M)

    @property
    def theta(self) -> slice:
        return slice(self.M + self.n * self.M, self.size)

    def block(self, lam: np.ndarray) -> np.ndarray:
        return lam[self.offset:self.offset + self.size]


@dataclass(frozen=True)
class EdgeBlock:
    """One consensus constraint: value(high) - value(low) = 0.

    ``label`` is ``(i, j, l)`` for intra edges (local indices) and
    ``(i, j, k)`` for global edges (k a global index), matching the
    multiplier names xi_ijl and zeta_ijk.
    """

    kind: str
    low: int
    high: int
    pi: float
    offset: int
    size: int
    label: tuple[int, int, int]


@dataclass(frozen=True)
class Assembly:
    network: MultiClusterNetwork
    neighbors: NeighborSets
    agents: tuple[AgentOperators, ...]
    edges: tuple[EdgeBlock, ...]
    Z: np.ndarray
    D: np.ndarray
    pi_bar: np.ndarray

    @property
    def dim_lambda(self) -> int:
        return self.Z.shape[1]

    @property
    def dim_omega(self) -> int:
        return self.Z.shape[0]

    def agent(self, i: int, j: int) -> AgentOperators:
        return self.agents[relabel_agent(self.network, i, j) - 1]

    def consensus(self, lam: np.ndarray) -> np.ndarray:
        return self.Z @ lam

    def ZtDZ(self) -> np.ndarray:
        return self.Z.T @ (self.D[:, None] * self.Z)


def _agent_operators(spec: ScenarioSpec, i: int, j: int, index: int, offset: int) -> AgentOperators:
    net = spec.network
    M, B = net.dim, net.n_constraints
    cluster = net.cluster(i)
    n = cluster.n_agents
    L = laplacian(cluster).astype(float)
    A_i = spec.coupling.block(i, M) if B else np.zeros((0, M))
    if A_i.shape != (B, M):
        raise AssemblyError(f"coupling block has shape {A_i.shape}, expected {(B, M)}", (i, j))
    A_slice = A_i / n
    d = M + n * M + B
    H = np.zeros((M, d))
    H[:, :M] = -np.eye(M)
    for l in range(n):
        if L[l, j - 1] != 0.0:
            H[:, M + l * M:M + (l + 1) * M] = -L[l, j - 1] * np.eye(M)
    H[:, M + n * M:] = -A_slice.T
    E = np.zeros(d)
    kappa = spec.weights.kappa[i - 1]
    eta = spec.weights.eta[i - 1][j - 1]
    E[M + n * M:] = kappa * eta * spec.coupling.b_vector
    return AgentOperators((i, j), index, offset, M, n, B, H, E, A_slice)


def assemble(spec: ScenarioSpec, pi=None) -> Assembly:
    """Build the per-agent operators, the consensus matrix Z and diag(D).

    ``pi`` overrides the scenario's penalty weights: a scalar applies to
    every agent, a nested sequence is indexed ``pi[i-1][j-1]``.
    """
    net = spec.network
    M, B = net.dim, net.n_constraints
    if pi is None:
        pi_rows = spec.weights.pi
    elif isinstance(pi, (int, float, np.floating, np.integer)):
        pi_rows = [[float(pi)] * n for n in net.sizes]
    else:
        pi_rows = pi
    pi_bar = np.array([float(pi_rows[i - 1][j - 1]) for i, j in net.agents()])
    if np.any(~(pi_bar > 0)):
        raise ValidationError("penalty weights pi must be strictly positive")

    agents = []
    offset = 0
    for index, (i, j) in enumerate(net.agents()):
        op = _agent_operators(spec, i, j, index, offset)
        agents.append(op)
        offset += op.size
    dim_lambda = offset

    nbrs = neighbor_sets(net)
    edges = []
    w = 0
    for cluster in net.clusters:
        i = cluster.cluster_id
        size = cluster.n_agents * M
        for j in range(1, cluster.n_agents + 1):
            low = relabel_agent(net, i, j) - 1
            for l in nbrs[(i, j)].S:
                high = relabel_agent(net, i, l) - 1
                edges.append(EdgeBlock(INTRA, low, high, pi_bar[low], w, size, (i, j, l)))
                w += size
    if B:
        for (i, j) in net.agents():
            low = relabel_agent(net, i, j) - 1
            for k in nbrs[(i, j)].Sbar:
                edges.append(EdgeBlock(GLOBAL, low, k - 1, pi_bar[low], w, B, (i, j, k)))
                w += B
    dim_omega = w

    Z = np.zeros((dim_omega, dim_lambda))
    D = np.zeros(dim_omega)
    for e in edges:
        lo_op, hi_op = agents[e.low], agents[e.high]
        part = lo_op.gamma if e.kind == INTRA else lo_op.theta
        part_hi = hi_op.gamma if e.kind == INTRA else hi_op.theta
        rows = np.arange(e.offset, e.offset + e.size)
        Z[rows, lo_op.offset + np.arange(part.start, part.stop)] = -1.0
        Z[rows, hi_op.offset + np.arange(part_hi.start, part_hi.stop)] = 1.0
        D[rows] = e.pi
    return Assembly(net, nbrs, tuple(agents), tuple(edges), Z, D, pi_bar)


def power_iteration(matvec, n: int, rtol: float = 1e-10, max_iter: int = 100_000, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric positive semidefinite operator."""
    if n == 0:
        return 0.0
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    rho_prev = None
    for _ in range(max_iter):
        y = matvec(x)
        rho = float(x @ y)
        ny = float(np.linalg.norm(y))
        if ny == 0.0:
            return 0.0
        resid = float(np.linalg.norm(y - rho * x))
        if resid <= 1e-7 * ny:
            return rho
        if rho_prev is not None and abs(rho - rho_prev) <= rtol * 1e-3 * abs(rho):
            return rho
        rho_prev = rho
        x = y / ny
    raise NumericalError("power iteration stagnated", residual=resid)


def spectral_norm_sq(H: np.ndarray) -> float:
    """||H||^2, by power iteration on H^T H."""
    return power_iteration(lambda x: H.T @ (H @ x), H.shape[1])


def lipschitz_h(op: AgentOperators, sigma: float) -> float:
    """Lipschitz constant ||H_ij||^2 / sigma_ij of the local dual gradient."""
    if not sigma > 0:
        raise ValidationError(f"agent {op.agent}: sigma must be positive, got {sigma}")
    return spectral_norm_sq(op.H) / sigma


def tau_max(Z: np.ndarray, D: np.ndarray, method: str = "power") -> float:
    """Largest eigenvalue of Z^T diag(D) Z.

    ``"gershgorin"`` gives the row-sum upper bound instead, which each agent
    could evaluate from neighbor information alone.
    """
    if Z.shape[0] == 0:
        return 0.0
    if method == "power":
        return power_iteration(lambda x: Z.T @ (D * (Z @ x)), Z.shape[1])
    if method == "gershgorin":
        return float(np.max(np.abs(Z.T @ (D[:, None] * Z)).sum(axis=1)))
    raise ValidationError(f"unknown tau method {method!r}")


@dataclass(frozen=True)
class StepSizes:
    c: np.ndarray
    h: np.ndarray
    tau_max: float
    safety: float

    def per_coordinate(self, assembly: Assembly) -> np.ndarray:
        """Diagonal of S[c], one entry per dual coordinate."""
        return np.concatenate([np.full(op.size, self.c[op.index]) for op in assembly.agents])


def step_sizes(h, Z: np.ndarray, D: np.ndarray, safety: float = 1.0, method: str = "power") -> StepSizes:
    """Heterogeneous steps ``c_ij = safety / (h_ij + tau_max(Z^T D Z))``."""
    if not safety > 0:
        raise ValidationError("safety factor must be positive")
    h = np.asarray(h, dtype=float)
    tau = tau_max(Z, D, method)
    return StepSizes(safety / (h + tau), h, tau, float(safety))
