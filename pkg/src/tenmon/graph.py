"""Fixed network structures: adjacency construction and neighbourhood weights.

A :class:`Graph` is immutable after construction.  Edge processes live on a
transformed graph whose nodes are the original edges; that transform
(:func:`to_line_graph`) and two random stand-ins (:func:`sample_erdos_renyi`,
:func:`sample_sbm`) all produce plain :class:`Graph` values, so downstream
code never cares where the adjacency came from.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class Graph:
    """Simple binary-adjacency graph with no self-loops.

    ``adjacency[i, j] == 1`` means there is an edge i -> j (both directions
    are stored for undirected graphs).
    """

    n_nodes: int
    adjacency: np.ndarray
    directed: bool = False

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=np.int8)
        if self.n_nodes < 1:
            raise ValueError("graph needs at least one node")
        if adj.shape != (self.n_nodes, self.n_nodes):
            raise ValueError(f"adjacency must be {self.n_nodes}x{self.n_nodes}, got {adj.shape}")
        if not np.isin(adj, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        if np.diagonal(adj).any():
            raise ValueError("self-loops are not allowed")
        if not self.directed and not np.array_equal(adj, adj.T):
            raise ValueError("undirected graph requires a symmetric adjacency matrix")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, n_nodes: int, edges: list[tuple[int, int]], directed: bool = False) -> Graph:
        adj = np.zeros((n_nodes, n_nodes), dtype=np.int8)
        for a, b in edges:
            adj[a, b] = 1
            if not directed:
                adj[b, a] = 1
        return cls(n_nodes=n_nodes, adjacency=adj, directed=directed)

    def edges(self) -> list[tuple[int, int]]:
        """Edge list in canonical order.

        Undirected graphs yield each edge once as (i, j) with i < j; directed
        graphs yield every ordered pair present, so a reciprocal i->j / j->i
        connection counts as two edges.
        """
        if self.directed:
            rows, cols = np.nonzero(self.adjacency)
            return list(zip(rows.tolist(), cols.tolist()))
        rows, cols = np.nonzero(np.triu(self.adjacency))
        return list(zip(rows.tolist(), cols.tolist()))

    @property
    def n_edges(self) -> int:
        return len(self.edges())


@dataclass(frozen=True)
class NeighbourhoodTable:
    """Stage-r neighbour sets and their weights for every node.

    ``nodes[i][r - 1]`` holds the nodes at shortest-path distance exactly r
    from node i, and ``weights[i][r - 1]`` the matching weights, equal within
    a stage and summing to one whenever the stage set is non-empty.
    """

    r_max: int
    nodes: tuple[tuple[np.ndarray, ...], ...] = field(repr=False)
    weights: tuple[tuple[np.ndarray, ...], ...] = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def nodes_at(self, node: int, stage: int) -> np.ndarray:
        return self.nodes[node][stage - 1]

    def weights_at(self, node: int, stage: int) -> np.ndarray:
        return self.weights[node][stage - 1]

    def weight_matrix(self, stage: int) -> np.ndarray:
        """Dense matrix W with W[i, j] = weight of j in node i's stage set."""
        n = self.n_nodes
        w = np.zeros((n, n))
        for i in range(n):
            w[i, self.nodes_at(i, stage)] = self.weights_at(i, stage)
        return w


def to_line_graph(g: Graph) -> tuple[Graph, dict[tuple[int, int], int]]:
    """Edge-to-vertex dual: edges of ``g`` become nodes, adjacent iff they
    share an endpoint in ``g``.

    Edge direction is ignored for endpoint sharing and the result is
    undirected.  Returns the new graph together with a map from each original
    edge (as listed by ``g.edges()``) to its node index in the result.
    """
    edges = g.edges()
    if not edges:
        raise ValueError("degenerate line graph: input graph has no edges")
    m = len(edges)
    adj = np.zeros((m, m), dtype=np.int8)
    for i, j in itertools.combinations(range(m), 2):
        a, b = edges[i]
        c, d = edges[j]
        if {a, b} & {c, d}:
            adj[i, j] = 1
            adj[j, i] = 1
    index_map = {edge: k for k, edge in enumerate(edges)}
    return Graph(n_nodes=m, adjacency=adj, directed=False), index_map


def sample_erdos_renyi(n_nodes: int, n_edges: int, seed) -> Graph:
    """Uniform undirected graph with exactly ``n_edges`` distinct edges."""
    max_edges = n_nodes * (n_nodes - 1) // 2
    if not 1 <= n_edges <= max_edges:
        raise ValueError(
            f"n_edges must be in [1, {max_edges}] for {n_nodes} nodes, got {n_edges}"
        )
    rng = np.random.default_rng(seed)
    all_pairs = list(itertools.combinations(range(n_nodes), 2))
    chosen = rng.choice(len(all_pairs), size=n_edges, replace=False)
    return Graph.from_edges(n_nodes, [all_pairs[k] for k in chosen])


def sample_sbm(
    cluster_sizes: tuple[int, ...],
    p_within: float,
    p_between: float,
    seed,
) -> tuple[Graph, np.ndarray]:
    """Stochastic block model draw; returns the graph and per-node cluster labels.

    Every unordered node pair is connected independently with the block
    probability (``p_within`` if the nodes share a cluster, else
    ``p_between``); the edge count is random.
    """
    if any(s < 1 for s in cluster_sizes):
        raise ValueError("cluster sizes must be positive")
    for name, p in (("p_within", p_within), ("p_between", p_between)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {p}")
    labels = np.repeat(np.arange(len(cluster_sizes)), cluster_sizes)
    n = int(labels.size)
    rng = np.random.default_rng(seed)
    u = rng.random((n, n))
    prob = np.where(labels[:, None] == labels[None, :], p_within, p_between)
    upper = np.triu(u < prob, k=1)
    adj = (upper | upper.T).astype(np.int8)
    return Graph(n_nodes=n, adjacency=adj, directed=False), labels


def neighbourhoods(g: Graph, r_max: int) -> NeighbourhoodTable:
    """Stage-r neighbour sets (shortest-path distance exactly r) with equal
    weights 1/|set| within each stage.

    Isolated nodes get empty sets at every stage.  For directed graphs the
    search follows out-edges.
    """
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    n = g.n_nodes
    adj_lists = [np.nonzero(g.adjacency[i])[0] for i in range(n)]
    all_nodes: list[tuple[np.ndarray, ...]] = []
    all_weights: list[tuple[np.ndarray, ...]] = []
    for start in range(n):
        dist = np.full(n, -1, dtype=np.int64)
        dist[start] = 0
        frontier = [start]
        d = 0
        while frontier and d < r_max:
            d += 1
            nxt = []
            for v in frontier:
                for w in adj_lists[v]:
                    if dist[w] < 0:
                        dist[w] = d
                        nxt.append(w)
            frontier = nxt
        stages = []
        weights = []
        for r in range(1, r_max + 1):
            members = np.sort(np.nonzero(dist == r)[0])
            stages.append(members)
            if members.size:
                weights.append(np.full(members.size, 1.0 / members.size))
            else:
                weights.append(np.empty(0))
        all_nodes.append(tuple(stages))
        all_weights.append(tuple(weights))
    return NeighbourhoodTable(r_max=r_max, nodes=tuple(all_nodes), weights=tuple(all_weights))


def save_graph(g: Graph, csv_path: str | Path) -> None:
    """Write the edge list as CSV (`from,to`) with a JSON sidecar holding
    node count and directedness."""
    csv_path = Path(csv_path)
    lines = ["from,to"] + [f"{a},{b}" for a, b in g.edges()]
    csv_path.write_text("\n".join(lines) + "\n")
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps({"n_nodes": g.n_nodes, "directed": g.directed}) + "\n")


def load_graph(csv_path: str | Path) -> Graph:
    """Inverse of :func:`save_graph`."""
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    edges = []
    with open(csv_path) as fh:
        header = fh.readline().strip()
        if header != "from,to":
            raise ValueError(f"unexpected edge-list header: {header!r}")
        for line in fh:
            line = line.strip()
            if line:
                a, b = line.split(",")
                edges.append((int(a), int(b)))
    return Graph.from_edges(int(meta["n_nodes"]), edges, directed=bool(meta["directed"]))
