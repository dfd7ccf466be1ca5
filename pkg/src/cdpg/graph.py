"""Two-level communication graphs: clusters inside a global agent graph.

All indices exposed here are 1-based. Agent ``j`` of cluster ``i`` is
relabeled to the global index ``n_ij = n_1 + ... + n_{i-1} + j``.
Edges are stored as ``(low, high)`` pairs and ordered lexicographically,
which is the edge numbering used for incidence matrices and multipliers.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ContractError, GraphError, InvalidIndexError

Edge = tuple[int, int]


def _normalize(edges: Iterable, n_vertices: int | None = None, where: str = "") -> list[Edge]:
    seen: set[Edge] = set()
    problems = []
    out = []
    for e in edges:
        try:
            a, b = (int(v) for v in e)
        except (TypeError, ValueError):
            problems.append(f"{where}malformed edge {e!r}")
            continue
        if a == b:
            problems.append(f"{where}self-loop ({a},{b})")
            continue
        if n_vertices is not None and not (1 <= a <= n_vertices and 1 <= b <= n_vertices):
            problems.append(f"{where}edge ({a},{b}) references a vertex outside 1..{n_vertices}")
            continue
        key = (min(a, b), max(a, b))
        if key in seen:
            problems.append(f"{where}duplicate edge {key}")
            continue
        seen.add(key)
        out.append(key)
    if problems:
        raise GraphError(problems)
    return out


def order_edges(edges: Iterable) -> list[Edge]:
    """Number undirected edges by (smaller endpoint, larger endpoint).

    Returns the edges as ``(low, high)`` tuples, ``e_1`` first.

    >>> order_edges({(2, 4), (1, 2), (4, 5), (2, 5), (3, 4)})
    [(1, 2), (2, 4), (2, 5), (3, 4), (4, 5)]
    """
    return sorted(_normalize(edges))


def is_connected(n_vertices: int, edges: Iterable[Edge]) -> bool:
    """Breadth-first reachability from vertex 1 (1-based vertices)."""
    if n_vertices <= 1:
        return True
    adj: list[list[int]] = [[] for _ in range(n_vertices + 1)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = [False] * (n_vertices + 1)
    seen[1] = True
    queue = deque([1])
    count = 1
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                count += 1
                queue.append(w)
    return count == n_vertices


@dataclass(frozen=True)
class ClusterGraph:
    """Undirected connected graph over the agents ``1..n_agents`` of one cluster."""

    cluster_id: int
    n_agents: int
    edges: tuple[Edge, ...] = ()

    def __post_init__(self):
        if self.n_agents < 1:
            raise GraphError(f"cluster {self.cluster_id}: needs at least one agent")
        where = f"cluster {self.cluster_id}: "
        ordered = sorted(_normalize(self.edges, self.n_agents, where))
        if not is_connected(self.n_agents, ordered):
            raise GraphError(f"cluster {self.cluster_id}: intra-cluster graph is not connected")
        object.__setattr__(self, "edges", tuple(ordered))

    def neighbors(self, j: int) -> list[int]:
        return sorted(b if a == j else a for a, b in self.edges if j in (a, b))


@dataclass(frozen=True)
class AgentNeighbors:
    """Neighbor sets of one agent, split by the index order of the neighbor.

    ``S``/``S_sharp`` hold intra-cluster agent indices greater/smaller than the
    agent's own; ``Sbar``/``Sbar_sharp`` do the same for global indices.
    """

    S: tuple[int, ...]
    S_sharp: tuple[int, ...]
    Sbar: tuple[int, ...]
    Sbar_sharp: tuple[int, ...]


@dataclass(frozen=True)
class NeighborSets:
    by_agent: dict[tuple[int, int], AgentNeighbors]

    def __getitem__(self, agent: tuple[int, int]) -> AgentNeighbors:
        return self.by_agent[agent]

    def __iter__(self):
        return iter(self.by_agent)

    def __len__(self):
        return len(self.by_agent)


@dataclass(frozen=True)
class MultiClusterNetwork:
    """Clusters plus the global graph over relabeled agents.

    ``dim`` is the block size M of each cluster's decision variable and
    ``n_constraints`` the row count B of the coupling constraint.
    """

    clusters: tuple[ClusterGraph, ...]
    global_edges: tuple[Edge, ...]
    dim: int = 1
    n_constraints: int = 1
    _offsets: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        clusters = tuple(self.clusters)
        if not clusters:
            raise GraphError("network needs at least one cluster")
        problems = []
        for pos, c in enumerate(clusters, start=1):
            if c.cluster_id != pos:
                problems.append(f"cluster at position {pos} has id {c.cluster_id}")
        if self.dim < 1:
            problems.append("dim must be >= 1")
        if self.n_constraints < 0:
            problems.append("n_constraints must be >= 0")
        if problems:
            raise GraphError(problems)
        total = sum(c.n_agents for c in clusters)
        ordered = sorted(_normalize(self.global_edges, total, "global graph: "))
        if not is_connected(total, ordered):
            raise GraphError("global graph is not connected")
        offsets = [0]
        for c in clusters:
            offsets.append(offsets[-1] + c.n_agents)
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "global_edges", tuple(ordered))
        object.__setattr__(self, "_offsets", tuple(offsets))

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def n_agents(self) -> int:
        return self._offsets[-1]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(c.n_agents for c in self.clusters)

    def agents(self) -> list[tuple[int, int]]:
        """All ``(i, j)`` pairs in relabeled order."""
        return [(c.cluster_id, j) for c in self.clusters for j in range(1, c.n_agents + 1)]

    def cluster(self, i: int) -> ClusterGraph:
        if not 1 <= i <= self.n_clusters:
            raise InvalidIndexError(f"cluster index {i} outside 1..{self.n_clusters}")
        return self.clusters[i - 1]

    def unlabel(self, k: int) -> tuple[int, int]:
        """Inverse of :func:`relabel_agent`."""
        if not 1 <= k <= self.n_agents:
            raise InvalidIndexError(f"global agent index {k} outside 1..{self.n_agents}")
        i = int(np.searchsorted(self._offsets, k, side="left"))
        return i, k - self._offsets[i - 1]


def relabel_agent(network: MultiClusterNetwork, i: int, j: int) -> int:
    """Global index of agent ``j`` in cluster ``i``."""
    cluster = network.cluster(i)
    if not 1 <= j <= cluster.n_agents:
        raise InvalidIndexError(f"agent index {j} outside 1..{cluster.n_agents} in cluster {i}")
    return network._offsets[i - 1] + j


def laplacian(cluster: ClusterGraph) -> np.ndarray:
    """Integer Laplacian: degrees on the diagonal, -1 per edge."""
    n = cluster.n_agents
    L = np.zeros((n, n), dtype=np.int64)
    for a, b in cluster.edges:
        L[a - 1, a - 1] += 1
        L[b - 1, b - 1] += 1
        L[a - 1, b - 1] = -1
        L[b - 1, a - 1] = -1
    return L


def incidence(n_vertices: int, ordered_edges) -> np.ndarray:
    """Vertex-by-edge incidence matrix with +1 at the larger endpoint.

    ``ordered_edges`` must already be in :func:`order_edges` form.
    """
    edges = [tuple(e) for e in ordered_edges]
    if edges != order_edges(edges) or any(a > b for a, b in edges):
        raise ContractError("incidence() expects edges as returned by order_edges()")
    G = np.zeros((n_vertices, len(edges)), dtype=np.int64)
    for k, (a, b) in enumerate(edges):
        if not (1 <= a <= n_vertices and 1 <= b <= n_vertices):
            raise ContractError(f"edge ({a},{b}) outside 1..{n_vertices}")
        G[a - 1, k] = -1
        G[b - 1, k] = 1
    return G


def neighbor_sets(network: MultiClusterNetwork) -> NeighborSets:
    """Split every agent's neighbors into higher- and lower-indexed sets."""
    glob_adj: dict[int, list[int]] = {k: [] for k in range(1, network.n_agents + 1)}
    for a, b in network.global_edges:
        glob_adj[a].append(b)
        glob_adj[b].append(a)
    out = {}
    for cluster in network.clusters:
        i = cluster.cluster_id
        for j in range(1, cluster.n_agents + 1):
            local = cluster.neighbors(j)
            k = relabel_agent(network, i, j)
            glob = sorted(glob_adj[k])
            out[(i, j)] = AgentNeighbors(
                S=tuple(l for l in local if l > j),
                S_sharp=tuple(l for l in local if l < j),
                Sbar=tuple(g for g in glob if g > k),
                Sbar_sharp=tuple(g for g in glob if g < k),
            )
    return NeighborSets(out)
