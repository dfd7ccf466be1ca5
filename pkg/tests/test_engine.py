import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdpg.errors import DivergenceError, InvalidIndexError, ValidationError
from cdpg.functions import BoxIndicator, QuadExp, Quadratic, Zero
from cdpg.graph import ClusterGraph, MultiClusterNetwork
from cdpg.oracle import brute_force_primal, compact_step, dense_lagrangian, dense_operators
from cdpg.problem import EQUALITY, AgentSpec, Coupling, ScenarioSpec, Weights
from cdpg.scenarios import commodity_market, random_small
from cdpg.solver import (CDPG, DualState, EdgeMultipliers, ErgodicAverage, SolverConfig,
                         cdpg_iterate, ergodic_average, grad_p, metrics, recover_primal, run)


def lone_agent(f, g=None, b=None, mode="inequality"):
    net = MultiClusterNetwork((ClusterGraph(1, 1),), (), 1, 0 if b is None else 1)
    A, bb = ([], []) if b is None else ([[1.0]], [b])
    return ScenarioSpec("lone", net, {(1, 1): AgentSpec(f, g or Zero())}, Coupling(A, bb, mode),
                        Weights.uniform((1,)))


def two_by_two():
    """Two clusters of two agents each, quadratic costs, one coupling row."""
    clusters = (ClusterGraph(1, 2, [(1, 2)]), ClusterGraph(2, 2, [(1, 2)]))
    net = MultiClusterNetwork(clusters, [(1, 2), (3, 4), (2, 3)], 1, 1)
    agents = {(1, 1): AgentSpec(Quadratic(1.0, -1.0), BoxIndicator(0.0, 2.0)),
              (1, 2): AgentSpec(Quadratic(0.5, 0.5), BoxIndicator(-1.0, 2.0)),
              (2, 1): AgentSpec(Quadratic(2.0, -3.0), BoxIndicator(0.0, 1.5)),
              (2, 2): AgentSpec(Quadratic(1.5, 0.0), BoxIndicator(0.0, 1.5))}
    return ScenarioSpec("2x2", net, agents, Coupling([[1.0, 1.0]], [1.5]), Weights.uniform((2, 2)))


def conjugate_by_search(f, v, lo=-50.0, hi=50.0):
    """max_u v*u - f(u) by ternary search on a concave scalar function."""
    for _ in range(300):
        a, b = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if v * a - f.value([a]) < v * b - f.value([b]):
            lo = a
        else:
            hi = b
    u = 0.5 * (lo + hi)
    return v * u - f.value([u])


# -- gradient of p --------------------------------------------------------------


def test_grad_p_vanishes_at_zero_for_centered_quadratic():
    solver = CDPG(lone_agent(Quadratic(1.0, 0.0)))
    assert np.array_equal(grad_p(solver, 1, 1, np.zeros(2)), np.zeros(2))


def test_grad_p_theta_block_carries_demand():
    solver = CDPG(lone_agent(Quadratic(1.0, 0.0), BoxIndicator(0.0, 10.0), b=5.0))
    g = solver.grad_p(1, 1, np.zeros(3))
    assert g[-1] == pytest.approx(5.0)
    assert np.allclose(g[:2], 0.0)


@pytest.mark.parametrize("f", [Quadratic(0.7, -0.4), QuadExp(1.2, 0.3, 0.5, 0.4, -0.2)])
def test_grad_p_matches_finite_difference_of_searched_conjugate(f):
    spec = two_by_two()
    spec = ScenarioSpec(spec.name, spec.network, {**spec.agents, (1, 2): AgentSpec(f, BoxIndicator(-1.0, 2.0))},
                        spec.coupling, spec.weights)
    solver = CDPG(spec)
    op = solver.assembly.agent(1, 2)
    rng = np.random.default_rng(3)
    lam = rng.uniform(-1.0, 1.0, op.size)

    def p(x):
        return conjugate_by_search(f, float((op.H @ x)[0])) + float(op.E @ x)

    h = 1e-5
    fd = np.array([(p(lam + h * e) - p(lam - h * e)) / (2 * h) for e in np.eye(op.size)])
    assert np.allclose(solver.grad_p(1, 2, lam), fd, atol=1e-5)


# -- one iteration ----------------------------------------------------------------


def test_uncoupled_single_agent_reduces_to_gradient_step():
    """No edges and no coupling: gamma takes a plain gradient step, mu is
    pushed to the only point in the domain of the conjugate of zero."""
    solver = CDPG(lone_agent(Quadratic(2.0, -1.0)))
    lam = np.array([0.3, -0.7])
    state, edges = solver.initial(lam)
    new, _ = cdpg_iterate(solver, state, edges)
    c = solver.steps.c[0]
    expected = lam - c * solver.grad_p(1, 1, lam)
    assert new.lam[0] == 0.0
    assert new.lam[1] == pytest.approx(expected[1], abs=1e-15)
    assert new.t == 1


@pytest.mark.parametrize("seed", range(5))
def test_one_step_matches_compact_dense_form(seed):
    spec = random_small(seed)
    solver = CDPG(spec)
    ops = dense_operators(spec)
    rng = np.random.default_rng(seed)
    lam0 = np.abs(rng.standard_normal(solver.assembly.dim_lambda))
    omega0 = rng.standard_normal(solver.assembly.dim_omega)
    new, new_edges = solver.iterate(*solver.initial(lam0, omega0))
    lam_ref, omega_ref = compact_step(ops, lam0, omega0, solver.steps.c)
    assert np.max(np.abs(new.lam - lam_ref)) <= 1e-12
    assert np.max(np.abs(new_edges.omega - omega_ref)) <= 1e-12


def test_iterate_leaves_inputs_untouched():
    solver = CDPG(two_by_two())
    state, edges = solver.initial()
    state.lam[:] = 0.25
    before = state.lam.copy()
    solver.iterate(state, edges)
    assert np.array_equal(state.lam, before)
    assert not np.any(edges.omega)


def test_theta_is_projected_to_zero_in_inequality_mode():
    solver = CDPG(two_by_two())
    lam0 = np.zeros(solver.assembly.dim_lambda)
    for op in solver.assembly.agents:
        lam0[op.offset + op.theta.start] = -100.0
    new, _ = solver.iterate(*solver.initial(lam0))
    for op in solver.assembly.agents:
        assert new.lam[op.offset + op.theta.start] == 0.0


def test_theta_may_go_negative_in_equality_mode():
    solver = CDPG(two_by_two(), mode=EQUALITY)
    lam0 = np.zeros(solver.assembly.dim_lambda)
    for op in solver.assembly.agents:
        lam0[op.offset + op.theta.start] = -100.0
    new, _ = solver.iterate(*solver.initial(lam0))
    assert min(new.lam[op.offset + op.theta.start] for op in solver.assembly.agents) < 0.0


def test_edge_update_adds_weighted_consensus_violation():
    solver = CDPG(two_by_two())
    rng = np.random.default_rng(11)
    state, edges = solver.initial(rng.standard_normal(solver.assembly.dim_lambda),
                                  rng.standard_normal(solver.assembly.dim_omega))
    for _ in range(5):
        new, new_edges = solver.iterate(state, edges)
        a = solver.assembly
        assert np.array_equal(new_edges.omega, edges.omega + a.D * (a.Z @ new.lam))
        state, edges = new, new_edges


@given(seed=st.integers(0, 10_000))
@settings(max_examples=25)
def test_theta_stays_nonnegative_along_inequality_runs(seed):
    solver = CDPG(random_small(seed))
    state, edges = solver.initial()
    theta_idx = np.concatenate([np.arange(op.offset + op.theta.start, op.offset + op.theta.stop)
                                for op in solver.assembly.agents])
    for _ in range(30):
        state, edges = solver.iterate(state, edges)
        assert np.all(state.lam[theta_idx] >= 0.0)


# -- primal recovery -----------------------------------------------------------------


def test_recover_primal_at_zero_multiplier_is_unconstrained_minimizer():
    solver = CDPG(lone_agent(Quadratic(1.0, -2.0)))
    assert recover_primal(solver, np.zeros(2))[0, 0] == pytest.approx(1.0)


@pytest.mark.parametrize("f", [Quadratic(0.8, 0.3), QuadExp(0.5, -1.0, 0.2, 0.6, 0.1)])
def test_recover_primal_inverts_stationarity(f):
    y0 = 0.6
    solver = CDPG(lone_agent(f))
    mu = -float(f.gradient([y0])[0])
    assert solver.recover_primal(np.array([mu, 0.0]))[0, 0] == pytest.approx(y0, abs=1e-10)


def test_cluster_primal_averages_agents():
    solver = CDPG(two_by_two())
    y = np.array([[1.0], [3.0], [0.5], [0.7]])
    assert np.allclose(solver.cluster_primal(y), [2.0, 0.6])


# -- metrics -----------------------------------------------------------------------


def test_consensus_residual_vanishes_for_consensual_multipliers():
    solver = CDPG(two_by_two())
    lam = np.zeros(solver.assembly.dim_lambda)
    for op in solver.assembly.agents:
        blk = lam[op.offset:op.offset + op.size]
        blk[op.mu] = 0.1 * op.index
        blk[op.gamma] = [0.4, -0.2]
        blk[op.theta] = 0.9
    state, edges = solver.initial(lam)
    assert metrics(solver, state, edges).consensus_residual == 0.0


@pytest.mark.parametrize("seed", range(4))
def test_lagrangian_matches_dense_construction(seed):
    spec = random_small(seed)
    solver = CDPG(spec)
    ops = dense_operators(spec)
    rng = np.random.default_rng(seed + 100)
    lam = np.abs(rng.standard_normal(solver.assembly.dim_lambda))
    omega = rng.standard_normal(solver.assembly.dim_omega)
    assert solver.lagrangian(lam, omega) == pytest.approx(dense_lagrangian(ops, lam, omega), abs=1e-10)


def test_negative_theta_makes_dual_objective_infinite():
    solver = CDPG(two_by_two())
    lam = np.zeros(solver.assembly.dim_lambda)
    lam[solver.assembly.agents[0].theta.start] = -1.0
    m = solver.metrics(lam, np.zeros(solver.assembly.dim_omega))
    assert m.q_infeasible and math.isinf(m.lagrangian)


def test_relative_error_switches_to_absolute_for_zero_reference():
    spec = lone_agent(Quadratic(1.0, 0.0))
    spec = ScenarioSpec(spec.name, spec.network, spec.agents, spec.coupling, spec.weights, (0.0,))
    solver = CDPG(spec)
    m = solver.metrics(np.zeros(2), np.zeros(0))
    assert m.o_is_absolute and m.rel_error_o == 0.0


def test_relative_error_uses_negated_reference_objective():
    spec = commodity_market()
    solver = CDPG(spec)
    assert solver.reference == pytest.approx(-spec.objective(spec.x_star))
    m = solver.metrics(np.zeros(solver.assembly.dim_lambda), np.zeros(solver.assembly.dim_omega))
    assert not m.o_is_absolute
    assert m.rel_error_o == pytest.approx(abs((m.lagrangian - solver.reference) / solver.reference))


# -- ergodic average ------------------------------------------------------------------


def test_ergodic_average_of_constant_sequence():
    assert np.array_equal(ergodic_average([np.ones(3)] * 7), np.ones(3))


def test_ergodic_average_of_ramp():
    assert np.allclose(ergodic_average([np.full(2, k) for k in range(1, 11)]), 5.5)


def test_ergodic_average_incremental_matches_batch():
    rng = np.random.default_rng(0)
    xs = rng.standard_normal((50, 4))
    avg = ErgodicAverage(4)
    for x in xs:
        avg.add(x)
    assert avg.count == 50
    assert np.allclose(avg.value, xs.mean(axis=0), atol=1e-14)


def test_ergodic_average_rejects_empty_history():
    with pytest.raises(ValueError):
        ergodic_average([])


def test_run_records_ergodic_snapshots_as_running_means():
    solver = CDPG(two_by_two())
    res = solver.run(SolverConfig(max_iters=101, checkpoints=(0, 9, 100), stop_on_convergence=False))
    state, edges = solver.initial()
    history = []
    for _ in range(101):
        state, edges = solver.iterate(state, edges)
        history.append(state.lam)
    for T in (0, 9, 100):
        assert np.allclose(res.trace.ergodic[T], ergodic_average(history[:T + 1]), atol=1e-12)


# -- full runs -----------------------------------------------------------------------


def test_single_agent_run_matches_brute_force():
    spec = lone_agent(Quadratic(1.0, -4.0), BoxIndicator(-1.0, 3.0), b=1.5)
    res = run(spec, SolverConfig(tol=1e-11))
    ref = brute_force_primal(spec)
    assert res.converged
    assert res.x[0] == pytest.approx(ref.x_star[0], abs=1e-6)
    assert res.x[0] == pytest.approx(1.5, abs=1e-6)


def test_trace_layout_and_recording_cadence():
    solver = CDPG(two_by_two())
    res = solver.run(SolverConfig(max_iters=250, record_every=100, stop_on_convergence=False))
    assert res.trace.columns[:4] == ["t", "consensus_residual", "lagrangian", "rel_error_o"]
    assert res.trace.columns[4:] == ["y_hat_1.1.1", "y_hat_1.2.1", "y_hat_2.1.1", "y_hat_2.2.1"]
    assert [r[0] for r in res.trace.rows] == [100, 200, 250]
    assert all(r[3] is None for r in res.trace.rows)
    assert res.iterations == 250


def test_csv_leaves_missing_reference_blank():
    solver = CDPG(two_by_two())
    text = solver.run(SolverConfig(max_iters=100)).trace.to_csv()
    header, first = text.splitlines()[:2]
    assert header.startswith("t,consensus_residual,lagrangian,rel_error_o,")
    assert first.split(",")[3] == ""


def test_iteration_limit_reports_no_convergence():
    res = run(commodity_market(), SolverConfig(max_iters=50))
    assert not res.converged and res.iterations == 50


def test_workers_do_not_change_python_backend_results():
    spec = random_small(4)
    a = CDPG(spec, backend="python").run(SolverConfig(max_iters=300, workers=1))
    b = CDPG(spec, backend="python").run(SolverConfig(max_iters=300, workers=3))
    assert np.array_equal(a.state.lam, b.state.lam)
    assert np.array_equal(a.edges.omega, b.edges.omega)


def test_nan_start_raises_divergence():
    solver = CDPG(two_by_two())
    lam0 = np.zeros(solver.assembly.dim_lambda)
    lam0[2] = np.nan
    with pytest.raises(DivergenceError) as info:
        solver.run(SolverConfig(max_iters=10, lam0=lam0))
    assert info.value.iteration == 1


def test_oversized_steps_raise_divergence():
    with pytest.raises(DivergenceError) as info:
        CDPG(commodity_market(), safety=3.0).run(SolverConfig(max_iters=20_000))
    assert info.value.phase in (1, 2)
    assert info.value.agent is not None


def test_invalid_run_settings_are_reported_together():
    with pytest.raises(ValidationError) as info:
        run(two_by_two(), SolverConfig(max_iters=0, tol=-1.0, workers=0))
    assert len(info.value.problems) == 3


def test_initial_point_shape_is_checked():
    with pytest.raises(ValidationError):
        CDPG(two_by_two()).initial(np.zeros(3))


# -- multiplier accessors ----------------------------------------------------------------


def test_dual_state_accessors_slice_agent_blocks():
    solver = CDPG(two_by_two())
    lam = np.arange(solver.assembly.dim_lambda, dtype=float)
    state = DualState(lam, solver.assembly)
    op = solver.assembly.agent(2, 1)
    assert np.array_equal(state.mu(2, 1), lam[op.offset:op.offset + 1])
    assert np.array_equal(state.gamma(2, 1), lam[op.offset + 1:op.offset + 3])
    assert np.array_equal(state.theta(2, 1), lam[op.offset + 3:op.offset + 4])


def test_edge_multiplier_accessors():
    solver = CDPG(two_by_two())
    omega = np.arange(solver.assembly.dim_omega, dtype=float)
    edges = EdgeMultipliers(omega, solver.assembly)
    assert np.array_equal(edges.xi(1, 1, 2), [0.0, 1.0])
    assert np.array_equal(edges.xi(2, 1, 2), [2.0, 3.0])
    assert np.array_equal(edges.zeta(1, 1, 2), [4.0])
    assert np.array_equal(edges.zeta(1, 2, 3), [5.0])
    assert np.array_equal(edges.zeta(2, 1, 4), [6.0])
    with pytest.raises(InvalidIndexError):
        edges.zeta(1, 1, 4)
    with pytest.raises(InvalidIndexError):
        edges.xi(1, 2, 1)
