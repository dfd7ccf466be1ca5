"""Time the compiled sweep against the pure-Python fallback.

Usage::

    python benchmarks/bench_kernels.py [--iters 2000] [--repeat 3]

Each backend runs the same fixed number of iterations from zero on every
scenario (no early stop), and the final multipliers are compared bit for
bit so the timing compares equal work.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from cdpg._kernels import BACKENDS
from cdpg.scenarios import commodity_market, emission_dispatch, random_small
from cdpg.solver import CDPG, SolverConfig


def time_backend(spec, backend: str, iters: int, repeat: int):
    solver = CDPG(spec, backend=backend)
    config = SolverConfig(max_iters=iters, record_every=iters, stop_on_convergence=False, checkpoints=())
    best, result = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        result = solver.run(config)
        best = min(best, time.perf_counter() - start)
    return best, result


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--iters", type=int, default=2000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    backends = [b for b in ("compiled", "python") if b in BACKENDS]
    if "compiled" not in backends:
        print("compiled kernel not built; timing the Python fallback only")
    specs = [commodity_market(), emission_dispatch(), random_small(1), random_small(2)]
    header = f"{'scenario':<20} {'agents':>6} " + " ".join(f"{b + ' [s]':>14}" for b in backends)
    if len(backends) == 2:
        header += f" {'speedup':>9} {'identical':>10}"
    print(f"{args.iters} iterations, best of {args.repeat}")
    print(header)
    for spec in specs:
        times, results = [], []
        for b in backends:
            t, r = time_backend(spec, b, args.iters, args.repeat)
            times.append(t)
            results.append(r)
        line = f"{spec.name:<20} {spec.network.n_agents:>6} " + " ".join(f"{t:>14.4f}" for t in times)
        if len(backends) == 2:
            same = (np.array_equal(results[0].state.lam, results[1].state.lam)
                    and np.array_equal(results[0].edges.omega, results[1].edges.omega))
            line += f" {times[1] / times[0]:>8.1f}x {str(same):>10}"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
