"""Command-line front end: ``cdpg solve``, ``cdpg verify``, ``cdpg export``.

Exit codes: 0 converged or all checks passed, 2 iteration limit reached
without convergence, 3 a verification check failed or the instance is
infeasible, 1 any other error. Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import oracle
from .config import RunConfig, export_config, parse_config
from .errors import CDPGError, InfeasibleError
from .problem import ScenarioSpec, check_assumptions
from .scenarios import builtin
from .solver import CDPG, SolverConfig

EXIT_OK, EXIT_ERROR, EXIT_MAX_ITERS, EXIT_VERIFY = 0, 1, 2, 3

KKT_TOL = 1e-4
STAR_KKT_TOL = 1e-8
ORACLE_TOL = 1e-3
FEAS_TOL = 1e-6


def _add_common(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="built-in scenario: commodity-market, emission-dispatch, random")
    src.add_argument("--config", help="path to a JSON scenario config")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--safety", type=float)
    p.add_argument("--record-every", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--mode", choices=["inequality", "equality"])
    p.add_argument("--seed", type=int, help="instance seed for --scenario random")
    p.add_argument("--out-trace", help="write the metrics trace CSV here")
    p.add_argument("--out-summary", help="write the JSON summary here (default: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdpg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("solve", help="run the solver and write trace and summary"))
    _add_common(sub.add_parser("verify", help="run the oracle checks and print a pass/fail table"))
    exp = sub.add_parser("export", help="write a built-in scenario as a JSON config")
    exp.add_argument("--scenario", required=True)
    exp.add_argument("--seed", type=int, default=0)
    exp.add_argument("--out", help="output path (default: standard output)")
    return parser


def _load(args) -> tuple[ScenarioSpec, RunConfig]:
    if args.config:
        spec, run = parse_config(args.config)
    else:
        run = RunConfig(scenario=args.scenario)
        seed = args.seed if args.seed is not None else 0
        name = f"random-{seed}" if args.scenario == "random" else args.scenario
        spec = builtin(name)
    run = run.updated(max_iters=args.max_iters, tol=args.tol, safety=args.safety,
                      record_every=args.record_every, workers=args.workers, mode=args.mode,
                      seed=args.seed, out_trace=args.out_trace, out_summary=args.out_summary)
    problems = run.problems()
    if problems:
        raise CDPGError("; ".join(problems))
    if run.mode is not None and run.mode != spec.mode:
        spec = spec.with_mode(run.mode)
    return spec, run


def _solver_config(run: RunConfig, **extra) -> SolverConfig:
    return SolverConfig(max_iters=run.max_iters, tol=run.tol, safety=run.safety,
                        record_every=run.record_every, workers=run.workers, **extra)


def _emit(text: str, path) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _labels(spec: ScenarioSpec):
    return [f"{i}.{j}" for i, j in spec.network.agents()]


def cmd_solve(args) -> int:
    spec, run = _load(args)
    solver = CDPG(spec, safety=run.safety)
    result = solver.run(_solver_config(run))
    if run.out_trace:
        with open(run.out_trace, "w", newline="") as fh:
            result.trace.to_csv(fh)
    last = result.trace.rows[-1]
    summary = {
        "scenario": spec.name,
        "mode": spec.mode,
        "converged": result.converged,
        "iterations": result.iterations,
        "wall_time_s": result.wall_time,
        "primal": result.x.tolist(),
        "agent_estimates": dict(zip(_labels(spec), result.y.tolist())),
        "consensus_residual": last[1],
        "lagrangian": last[2],
        "rel_error_o": last[3],
        "rel_error_o_absolute": result.trace.o_is_absolute,
        "objective": spec.objective(result.x),
        "coupling_residual": (spec.coupling.A_matrix @ result.x - spec.coupling.b_vector).tolist(),
        "step_sizes": result.steps.c.tolist(),
        "tau_max": result.steps.tau_max,
    }
    _emit(json.dumps(summary, indent=2) + "\n", run.out_summary)
    if not result.converged:
        print(f"cdpg: no convergence within {run.max_iters} iterations", file=sys.stderr)
        return EXIT_MAX_ITERS
    return EXIT_OK


def verify(spec: ScenarioSpec, run: RunConfig, horizon: int = 10_001) -> tuple[list, str]:
    """Run every check; returns ``(rows, certificate_text)``.

    Each row is ``(name, passed, detail)``.
    """
    rows = []
    problems = check_assumptions(spec)
    if problems:
        raise InfeasibleError("; ".join(problems))
    solver = CDPG(spec, safety=run.safety)
    result = solver.run(_solver_config(run))
    rows.append(("converged", result.converged, f"{result.iterations} iterations"))

    if spec.network.n_clusters * spec.M <= oracle.BRUTE_FORCE_MAX_DIM:
        ref = oracle.brute_force_primal(spec)
        gap = float(np.max(np.abs(result.x - ref.x_star)))
        rows.append(("oracle agreement", gap <= ORACLE_TOL, f"max |x - x_ref| = {gap:.3e} ({ref.method})"))

    viol = spec.constraint_violation(result.x)
    rows.append(("coupling feasibility", viol <= FEAS_TOL, f"violation {viol:.3e}"))
    spread = max(float(np.max(np.abs(result.y[k] - result.x[(i - 1) * spec.M:i * spec.M])))
                 for k, (i, _j) in enumerate(spec.network.agents()))
    rows.append(("intra-cluster spread", spread <= FEAS_TOL, f"{spread:.3e}"))

    ops = oracle.dense_operators(spec)
    kkt = oracle.kkt_residuals(ops, result.state.lam, result.edges.omega, solver.steps.c)
    rows.append(("KKT at convergence", max(kkt.stationarity, kkt.consensus) <= KKT_TOL,
                 f"stationarity {kkt.stationarity:.3e}, consensus {kkt.consensus:.3e}"))

    star = solver.run(_solver_config(run.updated(max_iters=10 * run.max_iters, tol=run.tol / 100)))
    kstar = oracle.kkt_residuals(ops, star.state.lam, star.edges.omega, solver.steps.c)
    rows.append(("reference saddle point", max(kstar.stationarity, kstar.consensus) <= STAR_KKT_TOL,
                 f"stationarity {kstar.stationarity:.3e}, consensus {kstar.consensus:.3e}"))

    erg = solver.run(SolverConfig(max_iters=horizon, safety=run.safety, record_every=run.record_every,
                                  stop_on_convergence=False))
    cert = oracle.theorem1_certificate(
        erg.trace.ergodic, solver.phi, star.state.lam, star.edges.omega,
        np.zeros(solver.assembly.dim_lambda), np.zeros(solver.assembly.dim_omega),
        solver.steps.per_coordinate(solver.assembly), solver.assembly.Z, solver.assembly.D)
    rows.append(("ergodic certificate", cert.passed, f"Theta = {cert.theta:.4e}"))
    return rows, cert.format()


def cmd_verify(args) -> int:
    spec, run = _load(args)
    try:
        rows, cert_text = verify(spec, run)
    except InfeasibleError as exc:
        print(f"cdpg: infeasible instance: {exc}", file=sys.stderr)
        print(f"{'infeasibility':<26} FAIL  {exc}")
        return EXIT_VERIFY
    width = max(len(r[0]) for r in rows)
    lines = [f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}" for name, ok, detail in rows]
    text = "\n".join(lines) + "\n\n" + cert_text + "\n"
    _emit(text, run.out_summary)
    return EXIT_OK if all(r[1] for r in rows) else EXIT_VERIFY


def cmd_export(args) -> int:
    name = f"random-{args.seed}" if args.scenario == "random" else args.scenario
    doc = export_config(builtin(name))
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"solve": cmd_solve, "verify": cmd_verify, "export": cmd_export}[args.command]
    try:
        return handler(args)
    except InfeasibleError as exc:
        print(f"cdpg: infeasible instance: {exc}", file=sys.stderr)
        return EXIT_VERIFY if args.command == "verify" else EXIT_ERROR
    except CDPGError as exc:
        print(f"cdpg: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"cdpg: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
