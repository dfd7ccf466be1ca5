"""Independent checks for the solver.

The dense operators here are rebuilt from Kronecker products of the
cluster incidence matrices, without the solver's per-edge assembly, and the
compact update ``lam+ = prox_Q[lam - S(grad P + Z^T w + Z^T D Z lam)]``,
``w+ = w + D Z lam+`` is applied as plain matrix algebra.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, ValidationError
from .functions import prox_conjugate
from .graph import incidence, laplacian, order_edges
from .problem import INEQUALITY, ScenarioSpec, feasibility_witness

BRUTE_FORCE_MAX_DIM = 6


# -- dense operators ------------------------------------------------------------


@dataclass(frozen=True)
class DenseOperators:
    spec: ScenarioSpec
    H_blocks: tuple
    E: np.ndarray
    Z: np.ndarray
    D: np.ndarray
    sizes: tuple
    offsets: tuple

    @property
    def dim(self) -> int:
        return self.E.size

    def blocks(self, lam):
        for k, (o, d) in enumerate(zip(self.offsets, self.sizes)):
            yield k, lam[o:o + d]


def dense_operators(spec: ScenarioSpec, pi=None) -> DenseOperators:
    """Kronecker-product construction of every operator, penalties ``pi``.

    ``pi`` is a scalar or a nested per-agent sequence; the scenario's
    weights are used when it is None.
    """
    net = spec.network
    M, B, N = spec.M, spec.B, net.n_clusters
    agents = net.agents()
    if pi is None:
        pi_rows = spec.weights.pi
    elif isinstance(pi, (int, float, np.floating, np.integer)):
        pi_rows = [[float(pi)] * n for n in net.sizes]
    else:
        pi_rows = pi
    pibar = np.array([pi_rows[i - 1][j - 1] for i, j in agents], dtype=float)
    A = spec.coupling.A_matrix if B else np.zeros((0, N * M))
    b = spec.coupling.b_vector if B else np.zeros(0)

    sizes = [M + net.cluster(i).n_agents * M + B for i, _ in agents]
    offsets = list(np.cumsum([0] + sizes[:-1]))
    total = int(sum(sizes))
    H_blocks, E = [], np.zeros(total)
    for k, (i, j) in enumerate(agents):
        n = net.cluster(i).n_agents
        Lk = np.kron(laplacian(net.cluster(i)).astype(float), np.eye(M))
        A_i = A[:, (i - 1) * M:i * M]
        A_cal = np.kron(np.ones((1, n)), A_i) / n
        H = np.hstack([-np.eye(M),
                       -Lk[:, (j - 1) * M:j * M].T,
                       -A_cal[:, (j - 1) * M:j * M].T])
        H_blocks.append(H)
        E[offsets[k] + M + n * M:offsets[k] + sizes[k]] = (
            spec.weights.kappa[i - 1] * spec.weights.eta[i - 1][j - 1] * b)

    # gamma part: per cluster, G_i^T kron I_{n_i M} applied to stacked gammas.
    rows, weights = [], []
    start = 0
    for c in net.clusters:
        n = c.n_agents
        edges = order_edges(c.edges)
        G = incidence(n, edges).astype(float)
        GG = np.kron(G.T, np.eye(n * M))
        sel = np.zeros((n * n * M, total))
        for j in range(n):
            k = start + j
            o = offsets[k] + M
            sel[j * n * M:(j + 1) * n * M, o:o + n * M] = np.eye(n * M)
        rows.append(GG @ sel)
        for (lo, _hi) in edges:
            weights.append(np.full(n * M, pibar[start + lo - 1]))
        start += n
    if B:
        gedges = order_edges(net.global_edges)
        Gbar = incidence(len(agents), gedges).astype(float)
        sel = np.zeros((len(agents) * B, total))
        for k in range(len(agents)):
            o = offsets[k] + sizes[k] - B
            sel[k * B:(k + 1) * B, o:o + B] = np.eye(B)
        rows.append(np.kron(Gbar.T, np.eye(B)) @ sel)
        for (lo, _hi) in gedges:
            weights.append(np.full(B, pibar[lo - 1]))
    Z = np.vstack(rows) if rows else np.zeros((0, total))
    D = np.concatenate(weights) if weights else np.zeros(0)
    return DenseOperators(spec, tuple(H_blocks), E, Z, D, tuple(sizes), tuple(offsets))


def _agent_functions(ops: DenseOperators):
    return [ops.spec.agent(i, j) for i, j in ops.spec.network.agents()]


def dense_grad_P(ops: DenseOperators, lam) -> np.ndarray:
    out = np.empty(ops.dim)
    fs = _agent_functions(ops)
    for k, blk in ops.blocks(lam):
        H = ops.H_blocks[k]
        o = ops.offsets[k]
        out[o:o + blk.size] = H.T @ fs[k].f.conjugate_argmax(H @ blk)
    return out + ops.E


def dense_prox_Q(ops: DenseOperators, v, c) -> np.ndarray:
    """Blockwise prox of Q with per-agent steps ``c``."""
    out = np.array(v, dtype=float)
    M, B = ops.spec.M, ops.spec.B
    fs = _agent_functions(ops)
    for k, blk in ops.blocks(v):
        o = ops.offsets[k]
        out[o:o + M] = prox_conjugate(fs[k].g, blk[:M], c[k])
        if B and ops.spec.mode == INEQUALITY:
            out[o + ops.sizes[k] - B:o + ops.sizes[k]] = np.maximum(blk[-B:], 0.0)
    return out


def stepsize_diagonal(ops: DenseOperators, c) -> np.ndarray:
    return np.concatenate([np.full(d, c[k]) for k, d in enumerate(ops.sizes)])


def compact_step(ops: DenseOperators, lam, omega, c):
    """One iteration of the compact dense form; returns (lam+, omega+)."""
    S = stepsize_diagonal(ops, c)
    ZtDZ = ops.Z.T @ (ops.D[:, None] * ops.Z)
    arg = lam - S * (dense_grad_P(ops, lam) + ops.Z.T @ omega + ZtDZ @ lam)
    lam_new = dense_prox_Q(ops, arg, c)
    return lam_new, omega + ops.D * (ops.Z @ lam_new)


def dense_phi(ops: DenseOperators, lam) -> float:
    fs = _agent_functions(ops)
    M, B = ops.spec.M, ops.spec.B
    total = float(ops.E @ lam)
    for k, blk in ops.blocks(lam):
        total += fs[k].f.conjugate(ops.H_blocks[k] @ blk)
        total += fs[k].g.conjugate(blk[:M])
        if B and ops.spec.mode == INEQUALITY and np.any(blk[-B:] < -1e-12):
            return math.inf
    return total


def dense_lagrangian(ops: DenseOperators, lam, omega) -> float:
    z = ops.Z @ lam
    return dense_phi(ops, lam) + 0.5 * float(z @ (ops.D * z)) + float(omega @ z)


@dataclass(frozen=True)
class KKTResiduals:
    stationarity: float
    consensus: float


def kkt_residuals(ops: DenseOperators, lam, omega, c) -> KKTResiduals:
    """Fixed-point residual of the prox-gradient map and ``||Z lam||``."""
    lam = np.asarray(lam, dtype=float)
    S = stepsize_diagonal(ops, c)
    ZtDZ = ops.Z.T @ (ops.D[:, None] * ops.Z)
    arg = lam - S * (dense_grad_P(ops, lam) + ops.Z.T @ omega + ZtDZ @ lam)
    fixed = dense_prox_Q(ops, arg, c)
    return KKTResiduals(float(np.linalg.norm(lam - fixed)), float(np.linalg.norm(ops.Z @ lam)))


# -- primal brute force ---------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceSolution:
    x_star: np.ndarray
    objective: float
    method: str


def _project_factory(spec: ScenarioSpec):
    lo, hi = spec.cluster_bounds()
    B = spec.B
    if B == 0:
        return lambda x: np.clip(x, lo, hi)
    A, b = spec.coupling.A_matrix, spec.coupling.b_vector
    ineq = spec.mode == INEQUALITY

    if B == 1:
        a, beta = A[0], b[0]

        def x_of(nu, v):
            return np.clip(v - nu * a, lo, hi)

        def project(v):
            if ineq and a @ x_of(0.0, v) <= beta:
                return x_of(0.0, v)
            # a.x(nu) is nonincreasing in nu: bracket then bisect.
            lo_nu, hi_nu = (0.0, 1.0) if ineq else (-1.0, 1.0)
            while a @ x_of(hi_nu, v) > beta:
                hi_nu *= 2.0
                if hi_nu > 1e300:
                    raise InfeasibleError("projection onto the coupling set failed")
            while not ineq and a @ x_of(lo_nu, v) < beta:
                lo_nu *= 2.0
                if lo_nu < -1e300:
                    raise InfeasibleError("projection onto the coupling set failed")
            for _ in range(200):
                mid = 0.5 * (lo_nu + hi_nu)
                if a @ x_of(mid, v) > beta:
                    lo_nu = mid
                else:
                    hi_nu = mid
            return x_of(hi_nu, v)
        return project

    # General B: Dykstra over the box and each row's halfspace/hyperplane.
    def project(v, sweeps=5000):
        x = np.array(v, dtype=float)
        sets = 1 + B
        incr = [np.zeros_like(x) for _ in range(sets)]
        for _ in range(sweeps):
            prev = x.copy()
            for s in range(sets):
                y = x + incr[s]
                if s == 0:
                    z = np.clip(y, lo, hi)
                else:
                    row, rhs = A[s - 1], b[s - 1]
                    gap = row @ y - rhs
                    z = y - (max(gap, 0.0) if ineq else gap) / (row @ row) * row
                incr[s] = y - z
                x = z
            if np.max(np.abs(x - prev)) < 1e-15:
                break
        return x
    return project


def _grad_and_curvature(spec: ScenarioSpec, x):
    M = spec.M
    grad = np.zeros_like(x)
    for (i, j), s in spec.agents.items():
        sl = slice((i - 1) * M, i * M)
        grad[sl] += s.f.gradient(x[sl])
    return grad


def _lipschitz_bound(spec: ScenarioSpec, lo, hi) -> float:
    """Upper bound on the smooth part's curvature over the box."""
    M = spec.M
    L = np.zeros(spec.network.n_clusters * M)
    for (i, j), s in spec.agents.items():
        a, _b, r1, r2 = s.f.packed(M).T
        top = np.where(np.isfinite(hi[(i - 1) * M:i * M]), hi[(i - 1) * M:i * M], 0.0)
        bot = np.where(np.isfinite(lo[(i - 1) * M:i * M]), lo[(i - 1) * M:i * M], 0.0)
        edge = np.maximum(r2 * top, r2 * bot)
        L[(i - 1) * M:i * M] += 2 * a + r1 * r2 * r2 * np.exp(np.minimum(edge, 700.0))
    return float(np.max(L))


def brute_force_primal(spec: ScenarioSpec, iters: int = 1_000_000, grid: float = 1e-4) -> ReferenceSolution:
    """Reference optimum of the aggregated primal problem.

    Projected (sub)gradient with step ``1/(L (1 + t/1e4))`` from a feasible
    start, then a local grid refinement: the 3^n neighbors at spacing
    ``grid`` are projected and scored, the spacing shrinks tenfold once no
    neighbor improves, down to 1e-10.
    """
    n = spec.network.n_clusters * spec.M
    if n > BRUTE_FORCE_MAX_DIM:
        raise ValidationError(f"brute force limited to {BRUTE_FORCE_MAX_DIM} primal coordinates, got {n}")
    x = feasibility_witness(spec)
    project = _project_factory(spec)
    lo, hi = spec.cluster_bounds()
    L = _lipschitz_bound(spec, lo, hi)
    smooth_only = all(s.g.__class__.__name__ in ("Zero", "BoxIndicator") for s in spec.agents.values())
    x = project(x)
    for t in range(iters):
        g = _grad_and_curvature(spec, x)
        if not smooth_only:
            for (i, j), s in spec.agents.items():
                if s.g.__class__.__name__ == "NormPenalty":
                    sl = slice((i - 1) * spec.M, i * spec.M)
                    xi = x[sl]
                    if s.g.order == 1:
                        g[sl] += s.g.weight * np.sign(xi)
                    elif np.linalg.norm(xi) > 0:
                        g[sl] += s.g.weight * xi / np.linalg.norm(xi)
        step = 1.0 / (L * (1.0 + t / 1e4))
        x_new = project(x - step * g)
        moved = float(np.max(np.abs(x_new - x)))
        x = x_new
        if smooth_only and moved <= 1e-15 * (1.0 + float(np.max(np.abs(x)))):
            break
    best = spec.objective(x)
    method = "projected-gradient"
    h = grid
    offsets = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=n)))
    while h >= 1e-10:
        improved = False
        for _ in range(50):
            cands = [project(x + h * d) for d in offsets]
            vals = [spec.objective(cnd) for cnd in cands]
            k = int(np.argmin(vals))
            if vals[k] < best - 1e-15 * max(1.0, abs(best)):
                x, best, improved = cands[k], vals[k], True
                method = "projected-gradient+grid"
            else:
                break
        h /= 10.0
    if spec.constraint_violation(x) > 1e-8:
        raise InfeasibleError(f"reference point violates the coupling by {spec.constraint_violation(x):.3e}")
    return ReferenceSolution(x, float(best), method)


# -- convergence certificate ---------------------------------------------------------------


@dataclass
class CertificateRow:
    T: int
    gap: float
    consensus: float
    bound: float
    scaled_residual: float

    @property
    def ok(self) -> bool:
        return self.gap <= self.bound and self.consensus <= self.bound


@dataclass
class CertificateReport:
    theta: float
    phi_star: float
    omega_star_norm: float
    rows: list = field(default_factory=list)
    growth_limit: float = 0.0

    @property
    def violations(self) -> list:
        return [r.T for r in self.rows if not r.ok]

    @property
    def scaled_bounded(self) -> bool:
        """T * ||Z lam_bar^T|| stays under the theorem's constant Theta / ||omega*||."""
        return all(r.scaled_residual <= self.growth_limit for r in self.rows)

    @property
    def passed(self) -> bool:
        return not self.violations and self.scaled_bounded

    def format(self) -> str:
        lines = [f"Theta = {self.theta:.6e}   Phi(lam*) = {self.phi_star:.12g}   ||omega*|| = {self.omega_star_norm:.6e}",
                 f"{'T':>7} {'|Phi gap|':>12} {'||w*|| ||Z lam||':>17} {'Theta/(T+1)':>12} {'(T+1)||Z lam||':>15}  ok"]
        for r in self.rows:
            lines.append(f"{r.T:>7d} {r.gap:12.4e} {r.consensus:17.4e} {r.bound:12.4e} "
                         f"{r.scaled_residual:15.4e}  {'yes' if r.ok else 'NO'}")
        lines.append(f"scaled residual bound {self.growth_limit:.4e}: {'held' if self.scaled_bounded else 'EXCEEDED'}")
        lines.append("certificate " + ("PASSED" if self.passed else f"FAILED at T = {self.violations}"))
        return "\n".join(lines)


def theorem1_certificate(ergodic: dict, phi, lam_star, omega_star, lam0, omega0,
                         c_diag, Z, D) -> CertificateReport:
    """Check the ergodic gap and consensus bounds at every recorded T.

    Parameters
    ----------
    ergodic : dict
        ``{T: lam_bar^{T+1}}``, the mean of the first T+1 iterates.
    phi : callable
        Dual objective ``P + Q``.
    c_diag : ndarray
        Diagonal of S[c], one step per dual coordinate.
    """
    lam_star, omega_star = np.asarray(lam_star, float), np.asarray(omega_star, float)
    lam0, omega0 = np.asarray(lam0, float), np.asarray(omega0, float)
    delta = lam_star - lam0
    zd = Z @ delta
    theta = (4.0 * float(omega_star @ (omega_star / D)) + float(omega0 @ (omega0 / D))
             + 0.5 * float(delta @ (delta / c_diag)) - 0.5 * float(zd @ (D * zd)))
    phi_star = phi(lam_star)
    w_norm = float(np.linalg.norm(omega_star))
    report = CertificateReport(theta, phi_star, w_norm)
    report.growth_limit = theta / w_norm if w_norm > 0 else math.inf
    for T in sorted(ergodic):
        lam_bar = ergodic[T]
        res = float(np.linalg.norm(Z @ lam_bar))
        report.rows.append(CertificateRow(T, abs(phi(lam_bar) - phi_star), w_norm * res,
                                          theta / (T + 1), (T + 1) * res))
    return report
