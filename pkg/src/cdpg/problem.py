"""Problem instances: network, per-agent functions, coupling constraint, weights."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InfeasibleError, ValidationError
from .functions import (BoxIndicator, NormPenalty, ProxSpec, QuadExp, Quadratic,
                        SmoothSpec, Zero)
from .graph import MultiClusterNetwork

INEQUALITY = "inequality"
EQUALITY = "equality"
MODES = (INEQUALITY, EQUALITY)


@dataclass(frozen=True)
class AgentSpec:
    f: SmoothSpec
    g: ProxSpec = field(default_factory=Zero)


@dataclass(frozen=True)
class Coupling:
    """``A x <= b`` (inequality) or ``A x = b`` (equality), A of shape (B, N*M)."""

    A: tuple
    b: tuple
    mode: str = INEQUALITY

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        A = np.asarray(self.A, dtype=float)
        A = np.zeros((0, 0)) if A.size == 0 and b.size == 0 else np.atleast_2d(A)
        if self.mode not in MODES:
            raise ValidationError(f"coupling mode must be one of {MODES}, got {self.mode!r}")
        if A.shape[0] != b.shape[0]:
            raise ValidationError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        object.__setattr__(self, "A", tuple(tuple(float(v) for v in row) for row in A))
        object.__setattr__(self, "b", tuple(float(v) for v in b))

    @property
    def A_matrix(self) -> np.ndarray:
        if not self.b:
            return np.zeros((0, 0))
        return np.array(self.A, dtype=float).reshape(len(self.b), -1)

    @property
    def b_vector(self) -> np.ndarray:
        return np.array(self.b, dtype=float)

    def block(self, i: int, M: int) -> np.ndarray:
        """Column block A_i (B x M) acting on cluster i (1-based)."""
        return self.A_matrix[:, (i - 1) * M:i * M]


@dataclass(frozen=True)
class Weights:
    """Split weights kappa_i, eta_ij (each summing to one) and penalties pi_ij."""

    kappa: tuple
    eta: tuple
    pi: tuple

    def __post_init__(self):
        object.__setattr__(self, "kappa", tuple(float(v) for v in self.kappa))
        object.__setattr__(self, "eta", tuple(tuple(float(v) for v in row) for row in self.eta))
        object.__setattr__(self, "pi", tuple(tuple(float(v) for v in row) for row in self.pi))

    @classmethod
    def uniform(cls, sizes, pi: float = 1.0) -> "Weights":
        N = len(sizes)
        return cls(kappa=[1.0 / N] * N,
                   eta=[[1.0 / n] * n for n in sizes],
                   pi=[[pi] * n for n in sizes])

    def check(self, sizes) -> list[str]:
        problems = []
        if len(self.kappa) != len(sizes):
            problems.append(f"kappa has {len(self.kappa)} entries for {len(sizes)} clusters")
        elif abs(sum(self.kappa) - 1.0) > 1e-9:
            problems.append(f"kappa sums to {sum(self.kappa)}, expected 1")
        for name, rows in (("eta", self.eta), ("pi", self.pi)):
            if len(rows) != len(sizes) or any(len(r) != n for r, n in zip(rows, sizes)):
                problems.append(f"{name} shape does not match cluster sizes {tuple(sizes)}")
        if not problems:
            for i, row in enumerate(self.eta, start=1):
                if abs(sum(row) - 1.0) > 1e-9:
                    problems.append(f"eta of cluster {i} sums to {sum(row)}, expected 1")
            for i, row in enumerate(self.pi, start=1):
                for j, v in enumerate(row, start=1):
                    if not v > 0:
                        problems.append(f"pi of agent {i}.{j} must be > 0, got {v}")
        return problems


@dataclass(frozen=True)
class ScenarioSpec:
    """A complete problem instance.

    ``agents`` maps ``(i, j)`` to that agent's functions. ``x_star`` is an
    optional reference primal solution (length N*M) used for relative errors.
    """

    name: str
    network: MultiClusterNetwork
    agents: dict
    coupling: Coupling
    weights: Weights
    x_star: Optional[tuple] = None

    def __post_init__(self):
        agents = {tuple(k): v for k, v in self.agents.items()}
        object.__setattr__(self, "agents", agents)
        if self.x_star is not None:
            object.__setattr__(self, "x_star", tuple(float(v) for v in self.x_star))
        problems = self.structural_problems()
        if problems:
            raise ValidationError(problems)

    @property
    def M(self) -> int:
        return self.network.dim

    @property
    def B(self) -> int:
        return self.network.n_constraints

    @property
    def mode(self) -> str:
        return self.coupling.mode

    def agent(self, i: int, j: int) -> AgentSpec:
        return self.agents[(i, j)]

    def with_mode(self, mode: str) -> "ScenarioSpec":
        c = self.coupling
        return ScenarioSpec(self.name, self.network, self.agents,
                            Coupling(c.A, c.b, mode), self.weights, self.x_star)

    def structural_problems(self) -> list[str]:
        net = self.network
        M, B, N = net.dim, net.n_constraints, net.n_clusters
        problems = []
        expected = set(net.agents())
        have = set(self.agents)
        for k in sorted(expected - have):
            problems.append(f"missing functions for agent {k[0]}.{k[1]}")
        for k in sorted(have - expected):
            problems.append(f"functions given for unknown agent {k[0]}.{k[1]}")
        for key in sorted(have & expected):
            spec = self.agents[key]
            if not isinstance(spec.f, (Quadratic, QuadExp)):
                problems.append(f"agent {key[0]}.{key[1]}: f must be quadratic or quadexp")
            elif spec.f.size not in (None, M):
                problems.append(f"agent {key[0]}.{key[1]}: f parameters have length {spec.f.size}, M={M}")
            if not isinstance(spec.g, (Zero, BoxIndicator, NormPenalty)):
                problems.append(f"agent {key[0]}.{key[1]}: g must be zero, box or norm")
            elif spec.g.size not in (None, M):
                problems.append(f"agent {key[0]}.{key[1]}: g parameters have length {spec.g.size}, M={M}")
        A = self.coupling.A_matrix
        if len(self.coupling.b) != B:
            problems.append(f"b has {len(self.coupling.b)} entries, network declares B={B}")
        if B and A.shape != (B, N * M):
            problems.append(f"A has shape {A.shape}, expected {(B, N * M)}")
        problems.extend(self.weights.check(net.sizes))
        if self.x_star is not None and len(self.x_star) != N * M:
            problems.append(f"x_star has {len(self.x_star)} entries, expected {N * M}")
        return problems

    # -- primal side -------------------------------------------------------

    def cluster_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Intersection of the agents' boxes per cluster, stacked to length N*M."""
        M = self.M
        lo = np.full(self.network.n_clusters * M, -np.inf)
        hi = np.full(self.network.n_clusters * M, np.inf)
        for (i, j), spec in self.agents.items():
            glo, ghi = spec.g.bounds(M)
            sl = slice((i - 1) * M, i * M)
            lo[sl] = np.maximum(lo[sl], glo)
            hi[sl] = np.minimum(hi[sl], ghi)
        return lo, hi

    def objective(self, x) -> float:
        """Aggregated primal cost sum_ij f_ij(x_i) + g_ij(x_i)."""
        x = np.asarray(x, dtype=float)
        M = self.M
        total = 0.0
        for (i, j), spec in self.agents.items():
            xi = x[(i - 1) * M:i * M]
            total += spec.f.value(xi) + spec.g.value(xi)
        return total

    def constraint_violation(self, x) -> float:
        if self.B == 0:
            return 0.0
        r = self.coupling.A_matrix @ np.asarray(x, dtype=float) - self.coupling.b_vector
        if self.mode == INEQUALITY:
            r = np.maximum(r, 0.0)
        return float(np.max(np.abs(r)))

    def sigmas(self) -> dict:
        return {k: spec.f.sigma(self.M) for k, spec in self.agents.items()}


def feasibility_witness(spec: ScenarioSpec) -> np.ndarray:
    """A point in the relative interior of the local sets meeting the coupling.

    Strict (``A x < b``) for inequality coupling. Raises
    :class:`InfeasibleError` when no such point is found.
    """
    lo, hi = spec.cluster_bounds()
    if np.any(lo > hi):
        bad = sorted({int(k) // spec.M + 1 for k in np.flatnonzero(lo > hi)})
        raise InfeasibleError(f"empty intersection of local boxes in clusters {bad}")
    n = lo.size
    if spec.B == 0:
        return np.clip(np.zeros(n), lo, hi)
    A, b = spec.coupling.A_matrix, spec.coupling.b_vector
    # Interior of the box: shrink finite boxes slightly, keep degenerate ones.
    width = np.where(np.isfinite(hi - lo), hi - lo, np.inf)
    shrink = np.where(np.isfinite(width), 1e-6 * width, 0.0)
    ilo, ihi = lo + shrink, hi - shrink
    if spec.B == 1:
        a = A[0]
        xmin, xmax = _row_extremes(a, ilo, ihi, b[0])
        box_min, box_max = float(a @ xmin), float(a @ xmax)
        if spec.mode == INEQUALITY:
            if not box_min <= b[0]:
                raise InfeasibleError(
                    f"coupling infeasible: smallest achievable A x = {box_min:.6g} exceeds b = {b[0]:.6g}")
            target = 0.5 * (box_min + min(b[0], box_max))
        else:
            if not box_min <= b[0] <= box_max:
                raise InfeasibleError(
                    f"coupling infeasible: b = {b[0]:.6g} outside achievable range [{box_min:.6g}, {box_max:.6g}]")
            target = b[0]
        span = box_max - box_min
        t = 0.0 if span == 0 else (target - box_min) / span
        return xmin + t * (xmax - xmin)
    # General B: alternate projections onto the box and the affine set.
    x = np.clip(np.zeros(n), ilo, ihi)
    pinv = np.linalg.pinv(A)
    for _ in range(20000):
        r = A @ x - b
        if spec.mode == INEQUALITY:
            r = np.maximum(r + 1e-9, 0.0)
        x = np.clip(x - pinv @ r, ilo, ihi)
        if spec.constraint_violation(x) <= 1e-9:
            return x
    raise InfeasibleError("could not find a feasible point for the coupling constraint")


def _row_extremes(a, lo, hi, target):
    """Box corners minimizing / maximizing a.x; infinite sides are truncated
    far enough out that the range covers ``target``."""
    finite = np.concatenate([lo[np.isfinite(lo)], hi[np.isfinite(hi)], [0.0]])
    R = 1.0 + np.max(np.abs(finite)) + abs(target)
    while True:
        flo, fhi = np.maximum(lo, -R), np.minimum(hi, R)
        mid = 0.5 * (flo + fhi)
        xmin = np.where(a > 0, flo, np.where(a < 0, fhi, mid))
        xmax = np.where(a > 0, fhi, np.where(a < 0, flo, mid))
        low_ok = a @ xmin <= target or np.all(np.isfinite(np.where(a > 0, lo, hi))[a != 0])
        high_ok = a @ xmax >= target or np.all(np.isfinite(np.where(a > 0, hi, lo))[a != 0])
        if (low_ok and high_ok) or R > 1e15:
            return xmin, xmax
        R *= 10.0


def check_assumptions(spec: ScenarioSpec) -> list[str]:
    """Decidable parts of the standing assumptions, as a list of violations.

    Connectivity is enforced when the network is built; this checks strong
    convexity and the existence of a strictly feasible point.
    """
    problems = []
    for (i, j), s in sorted(spec.sigmas().items()):
        if not s > 0:
            problems.append(f"agent {i}.{j}: f is not strongly convex (sigma={s})")
    try:
        feasibility_witness(spec)
    except InfeasibleError as exc:
        problems.append(str(exc))
    return problems
