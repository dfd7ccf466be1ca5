"""Built-in problem instances and a seeded random generator.

``commodity_market`` is a social-welfare problem over three regions whose
machines have concave quadratic utilities, and ``emission_dispatch`` an
economic/emission dispatch over three generators with exponential NOx
terms. Both use a single coupling row ``sum_i x_i (<=|=) 5``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError
from .functions import BoxIndicator, QuadExp, Quadratic
from .graph import ClusterGraph, MultiClusterNetwork
from .problem import EQUALITY, INEQUALITY, AgentSpec, Coupling, ScenarioSpec, Weights

TOPOLOGIES = ("path", "star", "complete")

# Commodity market: utilities w x^2 + s x (w < 0) on [0, upper].
MARKET_W = ((-0.1, -0.2, -0.3, -0.2), (-0.5, -0.45, -0.55), (-0.8, -0.9))
MARKET_S = ((2.1, 2.2, 2.0, 1.9), (0.2, 0.25, 0.5), (3.3, 4.1))
MARKET_UPPER = ((10.5, 5.5, 3.33, 4.75), (0.2, 0.27, 0.45), (2.06, 2.27))
MARKET_X_STAR = (3.33, 0.0, 1.67)

# Emission dispatch, per generator:
# (lower, upper, alpha1, alpha2, beta1, beta2, rho1, rho2, rho3)
DISPATCH = (
    (0.05, 5.0, 100.0, 200.0, 6.490, -2.000, 0.255, 0.012, -3.554),
    (0.05, 10.0, 120.0, 150.0, 5.638, -3.000, 0.250, 0.012, -4.047),
    (0.05, 10.0, 40.0, 180.0, 4.586, -2.000, 0.255, 0.012, -3.094),
)
DISPATCH_CHI = 0.5
DISPATCH_X_STAR = (2.38, 2.57, 0.05)
DEMAND = 5.0


def _intra_edges(n: int, topology: str) -> list:
    if topology == "path":
        return [(j, j + 1) for j in range(1, n)]
    if topology == "star":
        return [(1, j) for j in range(2, n + 1)]
    if topology == "complete":
        return [(j, l) for j in range(1, n + 1) for l in range(j + 1, n + 1)]
    raise ValidationError(f"unknown topology {topology!r}; choose from {TOPOLOGIES}")


def build_network(sizes, topology: str = "path", dim: int = 1, n_constraints: int = 1) -> MultiClusterNetwork:
    """Clusters with the given intra topology, joined into one global graph.

    The global graph contains every intra edge (relabeled) plus bridges:
    ``path`` chains the first agents of consecutive clusters, ``star``
    joins the first agent of cluster 1 to the first agent of every other
    cluster, ``complete`` links the last agent of cluster i to the first
    agent of every later cluster.
    """
    clusters = [ClusterGraph(i, n, _intra_edges(n, topology)) for i, n in enumerate(sizes, start=1)]
    first = np.cumsum([0] + list(sizes))[:-1] + 1
    last = np.cumsum(sizes)
    glob = [(int(first[c.cluster_id - 1]) + a - 1, int(first[c.cluster_id - 1]) + b - 1)
            for c in clusters for a, b in c.edges]
    N = len(sizes)
    if topology == "path":
        glob += [(int(first[i]), int(first[i + 1])) for i in range(N - 1)]
    elif topology == "star":
        glob += [(1, int(first[i])) for i in range(1, N)]
    else:
        glob += [(int(last[i]), int(first[k])) for i in range(N) for k in range(i + 1, N)]
    return MultiClusterNetwork(tuple(clusters), tuple(glob), dim, n_constraints)


def commodity_market(topology: str = "path", pi: float = 1.0) -> ScenarioSpec:
    """Social welfare maximization, posed as minimizing negated utility.

    Agent (i, j) holds ``f_ij(x) = -(w_ij x^2 + s_ij x)`` and the box
    ``[0, upper_ij]``; regions share ``x_1 + x_2 + x_3 <= 5``.
    """
    sizes = tuple(len(row) for row in MARKET_W)
    net = build_network(sizes, topology)
    agents = {}
    for i, (ws, ss, us) in enumerate(zip(MARKET_W, MARKET_S, MARKET_UPPER), start=1):
        for j, (w, s, u) in enumerate(zip(ws, ss, us), start=1):
            agents[(i, j)] = AgentSpec(Quadratic(-w, -s), BoxIndicator(0.0, u))
    coupling = Coupling([[1.0] * len(sizes)], [DEMAND], INEQUALITY)
    return ScenarioSpec("commodity-market", net, agents, coupling,
                        Weights.uniform(sizes, pi), MARKET_X_STAR)


def dispatch_delta(params) -> float:
    """Emission price: fuel cost over total emission at the upper limit."""
    lo, hi, a1, a2, b1, b2, r1, r2, r3 = params
    cost = a1 * hi * hi + a2 * hi
    emission = b1 * hi * hi + b2 * hi + r1 * math.exp(r2 * hi) + r3 * hi
    return cost / emission


def emission_dispatch(topology: str = "path", sizes=(3, 3, 3), pi: float = 1.0,
                      chi: float = DISPATCH_CHI) -> ScenarioSpec:
    """Economic emission dispatch with demand ``sum_i x_i = 5``.

    Generator i's cost ``chi C_i + (1 - chi) delta_i (E^S_i + E^N_i)`` is
    split evenly over the n_i agents of its cluster. Constant terms are
    dropped.
    """
    if len(sizes) != len(DISPATCH):
        raise ValidationError(f"emission dispatch has {len(DISPATCH)} clusters, got sizes {sizes}")
    net = build_network(tuple(sizes), topology)
    agents = {}
    for i, (params, n) in enumerate(zip(DISPATCH, sizes), start=1):
        lo, hi, a1, a2, b1, b2, r1, r2, r3 = params
        d = (1.0 - chi) * dispatch_delta(params)
        f = QuadExp(a=(chi * a1 + d * b1) / n, b=(chi * a2 + d * b2) / n,
                    rho1=d * r1 / n, rho2=r2, rho3=d * r3 / n)
        for j in range(1, n + 1):
            agents[(i, j)] = AgentSpec(f, BoxIndicator(lo, hi))
    coupling = Coupling([[1.0] * len(sizes)], [DEMAND], EQUALITY)
    return ScenarioSpec("emission-dispatch", net, agents, coupling,
                        Weights.uniform(sizes, pi), DISPATCH_X_STAR)


def _random_tree(rng, n: int, offset: int = 0) -> list:
    return [(int(rng.integers(1, v)) + offset, v + offset) for v in range(2, n + 1)]


def random_small(seed: int, N: int | None = None, n_max: int = 3, mode: str = INEQUALITY) -> ScenarioSpec:
    """Random box-constrained quadratic instance with M = 1 and A = 1^T.

    Every agent's box contains a common cluster box, and b sits strictly
    between the smallest and largest achievable sums, so a strictly
    feasible point exists by construction.
    """
    rng = np.random.default_rng(seed)
    if N is None:
        N = int(rng.integers(1, 4))
    if not (1 <= N <= 3 and 1 <= n_max <= 3):
        raise ValidationError("random_small supports N <= 3 and n_max <= 3")
    sizes = tuple(int(v) for v in rng.integers(1, n_max + 1, size=N))
    clusters = []
    for i, n in enumerate(sizes, start=1):
        edges = _random_tree(rng, n)
        extra = [(j, l) for j in range(1, n + 1) for l in range(j + 1, n + 1) if (j, l) not in edges]
        if extra and rng.random() < 0.5:
            edges.append(extra[int(rng.integers(len(extra)))])
        clusters.append(ClusterGraph(i, n, edges))
    first = np.cumsum((0,) + sizes)
    glob = [(int(first[c.cluster_id - 1]) + a, int(first[c.cluster_id - 1]) + b)
            for c in clusters for a, b in c.edges]
    for v, u in _random_tree(rng, N):
        glob.append((int(first[u - 1]) + int(rng.integers(1, sizes[u - 1] + 1)),
                     int(first[v - 1]) + int(rng.integers(1, sizes[v - 1] + 1))))
    net = MultiClusterNetwork(tuple(clusters), tuple(glob), 1, 1)

    agents = {}
    lows, highs = [], []
    for i, n in enumerate(sizes, start=1):
        lo = float(rng.uniform(-2.0, 0.0))
        hi = lo + float(rng.uniform(1.0, 4.0))
        lows.append(lo)
        highs.append(hi)
        for j in range(1, n + 1):
            grow = rng.uniform(0.0, 1.0, size=2) * (rng.random() < 0.5)
            f = Quadratic(float(rng.uniform(0.1, 2.0)), float(rng.uniform(-3.0, 3.0)))
            agents[(i, j)] = AgentSpec(f, BoxIndicator(lo - float(grow[0]), hi + float(grow[1])))
    # Agents' boxes all contain [lo, hi]; one agent pins the cluster box exactly.
    for i, n in enumerate(sizes, start=1):
        agents[(i, 1)] = AgentSpec(agents[(i, 1)].f, BoxIndicator(lows[i - 1], highs[i - 1]))
    b = sum(lows) + float(rng.uniform(0.2, 0.8)) * (sum(highs) - sum(lows))
    coupling = Coupling([[1.0] * N], [b], mode)
    return ScenarioSpec(f"random-{seed}", net, agents, coupling, Weights.uniform(sizes))


BUILTIN = {
    "commodity-market": commodity_market,
    "emission-dispatch": emission_dispatch,
}


def builtin(name: str, **kwargs) -> ScenarioSpec:
    if name.startswith("random-"):
        try:
            seed = int(name.split("-", 1)[1])
        except ValueError:
            raise ValidationError(f"bad random scenario name {name!r}; use random-<seed>") from None
        return random_small(seed, **kwargs)
    if name not in BUILTIN:
        raise ValidationError(f"unknown scenario {name!r}; built-ins are {sorted(BUILTIN)} and random-<seed>")
    return BUILTIN[name](**kwargs)
