import numpy as np
import pytest

from cdpg.errors import ValidationError
from cdpg.functions import BoxIndicator, Quadratic
from cdpg.graph import ClusterGraph, MultiClusterNetwork
from cdpg.oracle import dense_operators
from cdpg.problem import AgentSpec, Coupling, ScenarioSpec, Weights
from cdpg.scenarios import commodity_market, random_small
from cdpg.solver import CDPG, assemble, lipschitz_h, power_iteration, step_sizes, tau_max
from cdpg.solver.operators import AgentOperators

FIVE_VERTEX_EDGES = [(1, 2), (2, 4), (2, 5), (3, 4), (4, 5)]


def four_cluster_spec():
    clusters = (ClusterGraph(1, 1), ClusterGraph(2, 1), ClusterGraph(3, 1), ClusterGraph(4, 2, [(1, 2)]))
    net = MultiClusterNetwork(clusters, FIVE_VERTEX_EDGES)
    agents = {a: AgentSpec(Quadratic(0.5 + 0.1 * k), BoxIndicator(0.0, 3.0))
              for k, a in enumerate(net.agents())}
    return ScenarioSpec("four_cluster", net, agents, Coupling([[1.0] * 4], [2.0]), Weights.uniform(net.sizes))


def single_agent_spec(B=1):
    net = MultiClusterNetwork((ClusterGraph(1, 1),), (), 1, B)
    A, b = ([[1.0]], [1.0]) if B else ([], [])
    return ScenarioSpec("one", net, {(1, 1): AgentSpec(Quadratic(1.0))}, Coupling(A, b),
                        Weights.uniform((1,)))


def bare_operator(H):
    return AgentOperators((1, 1), 0, 0, H.shape[0], 1, 0, H, np.zeros(H.shape[1]), np.zeros((0, H.shape[0])))


# -- assemble ----------------------------------------------------------------------------

def test_single_agent_has_no_consensus_rows():
    asm = assemble(single_agent_spec())
    assert asm.Z.shape == (0, 3)


def test_four_cluster_row_count():
    asm = assemble(four_cluster_spec())
    assert asm.Z.shape[0] == 7


def test_two_agent_gamma_consensus_nullspace():
    net = MultiClusterNetwork((ClusterGraph(1, 2, [(1, 2)]),), [(1, 2)])
    spec = ScenarioSpec("pair", net, {(1, 1): AgentSpec(Quadratic(1.0)), (1, 2): AgentSpec(Quadratic(2.0))},
                        Coupling([[1.0]], [1.0]), Weights.uniform((2,)))
    asm = assemble(spec)
    lam = np.zeros(asm.dim_lambda)
    gamma = np.array([0.7, -1.2])
    for op in asm.agents:
        lam[op.offset + op.gamma.start:op.offset + op.gamma.stop] = gamma
        lam[op.offset + op.mu.start] = np.random.default_rng(op.index).normal()
    intra_rows = [r for e in asm.edges if e.kind == "intra" for r in range(e.offset, e.offset + e.size)]
    assert np.all(asm.Z[intra_rows] @ lam == 0.0)
    lam[asm.agents[1].offset + 1] += 0.5
    assert np.linalg.norm(asm.Z[intra_rows] @ lam) > 0


def test_zero_consensus_iff_all_agree():
    spec = four_cluster_spec()
    asm = assemble(spec)
    rng = np.random.default_rng(0)
    lam = np.zeros(asm.dim_lambda)
    theta = rng.normal()
    gam4 = rng.normal(size=2)
    for op in asm.agents:
        blk = slice(op.offset, op.offset + op.size)
        lam[blk][op.mu] = rng.normal()
        lam[blk][op.theta] = theta
        lam[blk][op.gamma] = gam4 if op.n == 2 else rng.normal()
    assert np.linalg.norm(asm.Z @ lam) == 0.0


def test_H_and_E_blocks_match_kronecker_construction():
    spec = four_cluster_spec()
    asm = assemble(spec)
    ops = dense_operators(spec)
    for op in asm.agents:
        assert np.array_equal(op.H, ops.H_blocks[op.index])
        assert np.array_equal(op.E, ops.E[op.offset:op.offset + op.size])
    assert np.array_equal(asm.Z, ops.Z)
    assert np.array_equal(asm.D, ops.D)


def test_penalty_weights_from_low_endpoint():
    spec = four_cluster_spec()
    pi = [[1.0], [2.0], [3.0], [4.0, 5.0]]
    asm = assemble(spec, pi)
    for e in asm.edges:
        assert np.all(asm.D[e.offset:e.offset + e.size] == asm.pi_bar[e.low])
    assert asm.pi_bar.tolist() == [1.0, 2.0, 3.0, 4.0, 5.0]


def test_nonpositive_pi_rejected():
    with pytest.raises(ValidationError):
        assemble(four_cluster_spec(), 0.0)


# -- lipschitz_h ---------------------------------------------------------------------------

def test_h_scalar_identity():
    assert lipschitz_h(bare_operator(np.array([[-1.0]])), 2.0) == pytest.approx(0.5, rel=1e-12)


@pytest.mark.parametrize("c", [0.0, 0.5, 3.0])
def test_h_concatenated_identities(c):
    H = np.hstack([-np.eye(2), -c * np.eye(2)])
    assert lipschitz_h(bare_operator(H), 1.0) == pytest.approx(1.0 + c * c, rel=1e-10)


def test_h_matches_dense_svd_on_commodity_market():
    spec = commodity_market()
    op = assemble(spec).agent(1, 1)
    svd = np.linalg.svd(op.H, compute_uv=False)[0] ** 2
    assert lipschitz_h(op, 1.0) == pytest.approx(svd, rel=1e-8)
    assert lipschitz_h(op, spec.sigmas()[(1, 1)]) == pytest.approx(svd / 0.2, rel=1e-8)


def test_h_requires_positive_sigma():
    with pytest.raises(ValidationError):
        lipschitz_h(bare_operator(np.array([[-1.0]])), 0.0)


def test_power_iteration_on_random_psd():
    rng = np.random.default_rng(1)
    for _ in range(10):
        X = rng.normal(size=(6, 6))
        A = X @ X.T
        assert power_iteration(lambda v: A @ v, 6) == pytest.approx(np.linalg.eigvalsh(A)[-1], rel=1e-8)


# -- step sizes -------------------------------------------------------------------------------

def test_steps_without_edges():
    steps = step_sizes([0.5], np.zeros((0, 3)), np.zeros(0), 1.0)
    assert steps.tau_max == 0.0
    assert steps.c.tolist() == [2.0]


def test_safety_scales_linearly():
    asm = assemble(four_cluster_spec())
    h = np.linspace(0.5, 1.5, 5)
    full = step_sizes(h, asm.Z, asm.D, 1.0)
    half = step_sizes(h, asm.Z, asm.D, 0.5)
    assert np.allclose(half.c, 0.5 * full.c, rtol=1e-15)


def test_steps_match_dense_eigensolve_on_four_cluster():
    spec = four_cluster_spec()
    solver = CDPG(spec)
    asm = solver.assembly
    lam_max = np.linalg.eigvalsh(asm.Z.T @ np.diag(asm.D) @ asm.Z)[-1]
    expected = [1.0 / (np.linalg.svd(op.H, compute_uv=False)[0] ** 2 / spec.sigmas()[op.agent] + lam_max)
                for op in asm.agents]
    assert np.allclose(solver.steps.c, expected, rtol=1e-8, atol=0)


@pytest.mark.parametrize("seed", range(5))
def test_gershgorin_bounds_power(seed):
    asm = assemble(random_small(seed))
    assert tau_max(asm.Z, asm.D, "gershgorin") >= tau_max(asm.Z, asm.D, "power") * (1 - 1e-9)


def test_step_invariant_bound():
    solver = CDPG(commodity_market(), safety=0.7)
    s = solver.steps
    assert np.all(s.c > 0) and np.all(s.c <= 1.0 / (s.h + s.tau_max) * (1 + 1e-15))


def test_bad_tau_method():
    with pytest.raises(ValidationError):
        tau_max(np.eye(2), np.ones(2), "exact")
