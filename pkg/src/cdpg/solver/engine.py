"""CDPG iteration driver: gradients, primal recovery, metrics and the run loop."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .._kernels import get_backend
from ..errors import DivergenceError, NumericalError, ValidationError
from ..functions import conjugate_argmax
from ..problem import INEQUALITY, MODES, ScenarioSpec, check_assumptions, feasibility_witness
from .layout import build_layout
from .operators import AgentOperators, Assembly, StepSizes, assemble, lipschitz_h, step_sizes
from .state import DualState, EdgeMultipliers

FEAS_TOL = 1e-12
ERGODIC_CHECKPOINTS = (100, 1000, 10000)


@dataclass
class SolverConfig:
    """Run parameters. ``pi`` and ``mode`` override the scenario when set."""

    max_iters: int = 100_000
    tol: float = 1e-9
    mode: Optional[str] = None
    safety: float = 1.0
    pi: Optional[object] = None
    lam0: Optional[np.ndarray] = None
    omega0: Optional[np.ndarray] = None
    record_every: int = 100
    window: int = 50
    workers: int = 1
    tau_mode: str = "power"
    backend: Optional[str] = None
    stop_on_convergence: bool = True
    checkpoints: tuple = ERGODIC_CHECKPOINTS

    def problems(self) -> list[str]:
        out = []
        if self.max_iters < 1:
            out.append("max_iters must be >= 1")
        if not self.tol > 0:
            out.append("tol must be > 0")
        if self.record_every < 1:
            out.append("record_every must be >= 1")
        if self.window < 1:
            out.append("window must be >= 1")
        if self.workers < 1:
            out.append("workers must be >= 1")
        if not self.safety > 0:
            out.append("safety must be > 0")
        if self.mode is not None and self.mode not in MODES:
            out.append(f"mode must be one of {MODES}")
        return out


@dataclass(frozen=True)
class Metrics:
    consensus_residual: float
    lagrangian: float
    rel_error_o: Optional[float]
    o_is_absolute: bool
    primal: np.ndarray
    q_infeasible: bool


@dataclass
class SolverTrace:
    """Recorded metrics rows and ergodic snapshots ``{T: lambda_bar^{T+1}}``."""

    columns: list
    rows: list = field(default_factory=list)
    ergodic: dict = field(default_factory=dict)
    o_is_absolute: bool = False

    def append(self, t: int, m: Metrics) -> None:
        self.rows.append((t, m.consensus_residual, m.lagrangian, m.rel_error_o, *m.primal.ravel()))

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([str(row[0])] + ["" if v is None else f"{v:.17g}" for v in row[1:]])
        return buf.getvalue() if fh is None else ""

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.array([np.nan if r[idx] is None else r[idx] for r in self.rows], dtype=float)


@dataclass
class RunResult:
    state: DualState
    edges: EdgeMultipliers
    trace: SolverTrace
    converged: bool
    iterations: int
    y: np.ndarray
    x: np.ndarray
    wall_time: float
    steps: StepSizes


class CDPG:
    """A scenario with its operators, step sizes and kernel layout prepared.

    Parameters
    ----------
    spec : ScenarioSpec
        Problem instance. ``mode`` replaces its coupling mode when given.
    safety : float
        Fraction of the largest step allowed by the convergence theorem.
    pi : float or nested sequence, optional
        Penalty weights overriding the scenario's.
    tau_mode : {"power", "gershgorin"}
        How the largest eigenvalue of ``Z^T D Z`` is obtained.
    backend : {"compiled", "python"}, optional
        Sweep kernel; defaults to the one selected at import.
    """

    def __init__(self, spec: ScenarioSpec, *, mode=None, safety=1.0, pi=None,
                 tau_mode="power", backend=None):
        if mode is not None and mode != spec.mode:
            spec = spec.with_mode(mode)
        self.spec = spec
        sig_problems = [p for p in check_assumptions(spec) if "strongly convex" in p]
        if sig_problems:
            raise ValidationError(sig_problems)
        feasibility_witness(spec)
        self.assembly: Assembly = assemble(spec, pi)
        sigmas = spec.sigmas()
        h = [lipschitz_h(op, sigmas[op.agent]) for op in self.assembly.agents]
        self.steps = step_sizes(h, self.assembly.Z, self.assembly.D, safety, tau_mode)
        self.layout = build_layout(spec, self.assembly, self.steps, spec.mode)
        self.kernel = get_backend(backend)
        self.inequality = spec.mode == INEQUALITY
        self.reference = None if spec.x_star is None else -spec.objective(spec.x_star)

    # -- per-agent oracles ---------------------------------------------------

    def _f(self, op: AgentOperators):
        return self.spec.agent(*op.agent).f

    def grad_p(self, i: int, j: int, lam_ij) -> np.ndarray:
        """``H^T argmax_u((H lam)^T u - f(u)) + E^T`` for agent (i, j)."""
        op = self.assembly.agent(i, j)
        lam_ij = np.asarray(lam_ij, dtype=float)
        return op.H.T @ conjugate_argmax(self._f(op), op.H @ lam_ij) + op.E

    def grad_P(self, lam: np.ndarray) -> np.ndarray:
        out = np.empty_like(lam)
        for op in self.assembly.agents:
            out[op.offset:op.offset + op.size] = self.grad_p(*op.agent, op.block(lam))
        return out

    def recover_primal(self, lam: np.ndarray) -> np.ndarray:
        """Local primal estimates y_ij, shape (agents, M), relabeled order."""
        return np.array([conjugate_argmax(self._f(op), op.H @ op.block(lam))
                         for op in self.assembly.agents])

    def cluster_primal(self, y: np.ndarray) -> np.ndarray:
        """Average the agents' estimates within each cluster, length N*M."""
        out = []
        start = 0
        for n in self.spec.network.sizes:
            out.append(y[start:start + n].mean(axis=0))
            start += n
        return np.concatenate(out)

    # -- objective pieces ----------------------------------------------------

    def P(self, lam: np.ndarray) -> float:
        total = 0.0
        for op in self.assembly.agents:
            blk = op.block(lam)
            total += self._f(op).conjugate(op.H @ blk) + float(op.E @ blk)
        return total

    def Q(self, lam: np.ndarray) -> float:
        """Conjugates of the g's plus the indicator of theta >= 0 (inequality).

        Indicator terms count as zero when met within ``FEAS_TOL`` and as
        ``inf`` otherwise.
        """
        total = 0.0
        for op in self.assembly.agents:
            blk = op.block(lam)
            total += self.spec.agent(*op.agent).g.conjugate(blk[op.mu])
            if self.inequality and np.any(blk[op.theta] < -FEAS_TOL):
                return math.inf
        return total

    def phi(self, lam: np.ndarray) -> float:
        return self.P(lam) + self.Q(lam)

    def lagrangian(self, lam: np.ndarray, omega: np.ndarray) -> float:
        z = self.assembly.Z @ lam
        return self.phi(lam) + 0.5 * float(z @ (self.assembly.D * z)) + float(omega @ z)

    def metrics(self, lam: np.ndarray, omega: np.ndarray) -> Metrics:
        with np.errstate(over="ignore", invalid="ignore"):
            res = float(np.linalg.norm(self.assembly.Z @ lam))
            lag = self.lagrangian(lam, omega)
        o, absolute = None, False
        if self.reference is not None:
            if self.reference == 0.0:
                o, absolute = abs(lag), True
            else:
                o = abs((lag - self.reference) / self.reference)
        return Metrics(res, lag, o, absolute, self.recover_primal(lam), not math.isfinite(lag))

    # -- iteration -----------------------------------------------------------

    def _sweep(self, lam, omega, lam_sum, n, t0, executor=None):
        lam_new = np.empty_like(lam)
        with np.errstate(over="ignore", invalid="ignore"):
            done, status, bad, phase = self.kernel.run_sweeps(
                self.layout, lam, omega, lam_sum, lam_new, n, executor)
        if status != 0:
            agent = self.assembly.agents[bad].agent if bad >= 0 else None
            if status == 2:
                raise NumericalError(f"conjugate argmax failed at iteration {t0 + done + 1}")
            raise DivergenceError(t0 + done + 1, phase, agent)
        return done

    def iterate(self, state: DualState, edges: EdgeMultipliers) -> tuple[DualState, EdgeMultipliers]:
        """One synchronous CDPG iteration; inputs are left untouched."""
        lam = state.lam.copy()
        omega = edges.omega.copy()
        self._sweep(lam, omega, np.zeros_like(lam), 1, state.t)
        return DualState(lam, self.assembly, state.t + 1), EdgeMultipliers(omega, self.assembly)

    def initial(self, lam0=None, omega0=None) -> tuple[DualState, EdgeMultipliers]:
        a = self.assembly
        lam = np.zeros(a.dim_lambda) if lam0 is None else np.array(lam0, dtype=float)
        omega = np.zeros(a.dim_omega) if omega0 is None else np.array(omega0, dtype=float)
        if lam.shape != (a.dim_lambda,) or omega.shape != (a.dim_omega,):
            raise ValidationError(f"initial point must have shapes ({a.dim_lambda},) and ({a.dim_omega},)")
        return DualState(lam, a), EdgeMultipliers(omega, a)

    def columns(self) -> list[str]:
        cols = ["t", "consensus_residual", "lagrangian", "rel_error_o"]
        for (i, j) in self.spec.network.agents():
            cols += [f"y_hat_{i}.{j}.{m}" for m in range(1, self.spec.M + 1)]
        return cols

    def run(self, config: SolverConfig) -> RunResult:
        """Iterate until the stopping rule fires or ``max_iters`` is reached.

        Stops when ``||Z lam|| <= tol`` and the primal estimates moved by at
        most ``tol`` (max norm) over the last ``window`` iterations.
        """
        problems = config.problems()
        if problems:
            raise ValidationError(problems)
        state, edges = self.initial(config.lam0, config.omega0)
        lam, omega = state.lam, edges.omega
        lam_sum = np.zeros_like(lam)
        trace = SolverTrace(self.columns())
        checkpoints = sorted(T for T in config.checkpoints if T + 1 <= config.max_iters)
        executor = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
        started = time.perf_counter()
        t = 0
        converged = False
        y_prev = self.recover_primal(lam)
        last_recorded = -1
        try:
            while t < config.max_iters:
                events = [config.max_iters,
                          (t // config.record_every + 1) * config.record_every,
                          (t // config.window + 1) * config.window]
                events += [T + 1 for T in checkpoints if T + 1 > t]
                target = min(events)
                t += self._sweep(lam, omega, lam_sum, target - t, t, executor)
                for T in checkpoints:
                    if T + 1 == t:
                        trace.ergodic[T] = lam_sum / t
                if t % config.record_every == 0:
                    m = self.metrics(lam, omega)
                    trace.append(t, m)
                    trace.o_is_absolute = m.o_is_absolute
                    last_recorded = t
                if t % config.window == 0:
                    y = self.recover_primal(lam)
                    moved = float(np.max(np.abs(y - y_prev)))
                    y_prev = y
                    res = float(np.linalg.norm(self.assembly.Z @ lam))
                    if res <= config.tol and moved <= config.tol:
                        converged = True
                        if config.stop_on_convergence:
                            break
        finally:
            if executor is not None:
                executor.shutdown()
        if last_recorded != t:
            m = self.metrics(lam, omega)
            trace.append(t, m)
            trace.o_is_absolute = m.o_is_absolute
        wall = time.perf_counter() - started
        y = self.recover_primal(lam)
        return RunResult(DualState(lam, self.assembly, t), EdgeMultipliers(omega, self.assembly),
                         trace, converged, t, y, self.cluster_primal(y), wall, self.steps)


# -- module-level operations ----------------------------------------------------


def grad_p(solver: CDPG, i: int, j: int, lam_ij) -> np.ndarray:
    return solver.grad_p(i, j, lam_ij)


def recover_primal(solver: CDPG, lam: np.ndarray) -> np.ndarray:
    return solver.recover_primal(lam)


def cdpg_iterate(solver: CDPG, state: DualState, edges: EdgeMultipliers):
    return solver.iterate(state, edges)


def metrics(solver: CDPG, state: DualState, edges: EdgeMultipliers) -> Metrics:
    return solver.metrics(state.lam, edges.omega)


def run(spec: ScenarioSpec, config: SolverConfig | None = None) -> RunResult:
    config = config or SolverConfig()
    solver = CDPG(spec, mode=config.mode, safety=config.safety, pi=config.pi,
                  tau_mode=config.tau_mode, backend=config.backend)
    return solver.run(config)


__all__ = ["CDPG", "SolverConfig", "SolverTrace", "RunResult", "Metrics", "grad_p",
           "recover_primal", "cdpg_iterate", "metrics", "run"]
