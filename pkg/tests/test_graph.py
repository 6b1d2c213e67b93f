import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tenmon.graph import (
    Graph,
    load_graph,
    neighbourhoods,
    sample_erdos_renyi,
    sample_sbm,
    save_graph,
    to_line_graph,
)


def line_graph_oracle(g: Graph) -> np.ndarray:
    """O(|E|^2) pairwise endpoint-sharing check."""
    edges = g.edges()
    m = len(edges)
    adj = np.zeros((m, m), dtype=np.int8)
    for i in range(m):
        for j in range(m):
            if i != j and set(edges[i]) & set(edges[j]):
                adj[i, j] = 1
    return adj


def bfs_layers(g: Graph, start: int, r_max: int) -> list[set[int]]:
    """Distance layers via plain breadth-first search."""
    seen = {start}
    layer = {start}
    out = []
    for _ in range(r_max):
        nxt = set()
        for v in layer:
            for w in np.nonzero(g.adjacency[v])[0]:
                if w not in seen:
                    nxt.add(int(w))
        seen |= nxt
        out.append(nxt)
        layer = nxt
    return out


def random_graph(rng: np.random.Generator, n: int, p: float = 0.4) -> Graph:
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return Graph(n_nodes=n, adjacency=(upper | upper.T).astype(np.int8))


class TestGraphType:
    def test_rejects_self_loops(self):
        adj = np.eye(2, dtype=int)
        with pytest.raises(ValueError, match="self-loops"):
            Graph(n_nodes=2, adjacency=adj)

    def test_rejects_asymmetric_undirected(self):
        adj = np.array([[0, 1], [0, 0]])
        with pytest.raises(ValueError, match="symmetric"):
            Graph(n_nodes=2, adjacency=adj, directed=False)

    def test_rejects_non_binary(self):
        adj = np.array([[0, 2], [2, 0]])
        with pytest.raises(ValueError, match="0 or 1"):
            Graph(n_nodes=2, adjacency=adj)

    def test_adjacency_immutable(self):
        g = Graph.from_edges(3, [(0, 1)])
        with pytest.raises(ValueError):
            g.adjacency[0, 2] = 1

    def test_directed_edges_counted_individually(self):
        g = Graph.from_edges(2, [(0, 1), (1, 0)], directed=True)
        assert g.n_edges == 2


class TestLineGraph:
    def test_path_two_edges(self):
        # path A-B-C: the two edges share B
        g = Graph.from_edges(3, [(0, 1), (1, 2)])
        lg, emap = to_line_graph(g)
        assert lg.n_nodes == 2
        assert lg.edges() == [(0, 1)]
        assert emap == {(0, 1): 0, (1, 2): 1}

    def test_triangle_stays_triangle(self):
        g = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
        lg, _ = to_line_graph(g)
        assert lg.n_nodes == 3
        assert lg.n_edges == 3

    def test_star_becomes_complete(self):
        g = Graph.from_edges(5, [(0, i) for i in range(1, 5)])
        lg, _ = to_line_graph(g)
        assert np.array_equal(lg.adjacency, line_graph_oracle(g))
        assert lg.n_edges == 6  # K4

    def test_empty_edge_set_errors(self):
        g = Graph(n_nodes=3, adjacency=np.zeros((3, 3), dtype=int))
        with pytest.raises(ValueError, match="degenerate line graph"):
            to_line_graph(g)

    def test_exhaustive_small_graphs(self):
        # every labelled undirected graph on 4 nodes with at least one edge
        pairs = list(itertools.combinations(range(4), 2))
        for mask in range(1, 2 ** len(pairs)):
            edges = [pairs[i] for i in range(len(pairs)) if mask >> i & 1]
            g = Graph.from_edges(4, edges)
            lg, _ = to_line_graph(g)
            assert lg.n_nodes == len(edges)
            assert np.array_equal(lg.adjacency, line_graph_oracle(g))

    def test_directed_input_ignores_direction(self):
        g = Graph.from_edges(3, [(1, 0), (1, 2)], directed=True)
        lg, _ = to_line_graph(g)
        assert not lg.directed
        assert lg.edges() == [(0, 1)]

    @given(st.integers(min_value=0, max_value=10_000), st.integers(5, 8))
    @settings(max_examples=60, deadline=None)
    def test_matches_oracle_random(self, seed, n):
        g = random_graph(np.random.default_rng(seed), n)
        if g.n_edges == 0:
            return
        lg, _ = to_line_graph(g)
        assert np.array_equal(lg.adjacency, line_graph_oracle(g))


class TestSamplers:
    def test_er_dimensions(self):
        g = sample_erdos_renyi(10, 30, seed=1)
        assert g.n_nodes == 10
        assert g.n_edges == 30

    def test_er_complete_graph(self):
        g = sample_erdos_renyi(5, 10, seed=1)
        assert g.n_edges == 10
        assert (g.adjacency + np.eye(5) == 1).all()

    def test_er_zero_edges_errors(self):
        with pytest.raises(ValueError):
            sample_erdos_renyi(5, 0, seed=1)

    def test_er_too_many_edges_errors(self):
        with pytest.raises(ValueError):
            sample_erdos_renyi(5, 11, seed=1)

    def test_er_deterministic_and_seed_sensitive(self):
        a = sample_erdos_renyi(10, 30, seed=5)
        b = sample_erdos_renyi(10, 30, seed=5)
        c = sample_erdos_renyi(10, 30, seed=6)
        assert np.array_equal(a.adjacency, b.adjacency)
        assert not np.array_equal(a.adjacency, c.adjacency)

    def test_sbm_deterministic(self):
        a, la = sample_sbm((5, 5), 0.8, 0.2, seed=5)
        b, lb = sample_sbm((5, 5), 0.8, 0.2, seed=5)
        assert np.array_equal(a.adjacency, b.adjacency)
        assert np.array_equal(la, lb)

    def test_sbm_disjoint_cliques(self):
        g, labels = sample_sbm((3, 4), 1.0, 0.0, seed=2)
        same = labels[:, None] == labels[None, :]
        expected = same.astype(np.int8) - np.eye(7, dtype=np.int8)
        assert np.array_equal(g.adjacency, expected)

    def test_sbm_expected_edge_count(self):
        # blocks of 5/5 with p_in=0.8, p_out=0.2: mean edges = 2*C(5,2)*0.8 + 25*0.2 = 21
        reps = 10_000
        counts = np.array(
            [sample_sbm((5, 5), 0.8, 0.2, seed=(900_000 + i))[0].n_edges for i in range(reps)]
        )
        expected = 2 * 10 * 0.8 + 25 * 0.2
        # per-draw variance of a sum of independent Bernoullis
        var = 2 * 10 * 0.8 * 0.2 + 25 * 0.2 * 0.8
        se = np.sqrt(var / reps)
        assert abs(counts.mean() - expected) < 3 * se

    def test_sbm_equal_probs_collapses_to_bernoulli_pairs(self):
        reps = 10_000
        p = 0.35
        counts = np.array(
            [sample_sbm((5, 5), p, p, seed=(700_000 + i))[0].n_edges for i in range(reps)]
        )
        n_pairs = 45
        expected = n_pairs * p
        se = np.sqrt(n_pairs * p * (1 - p) / reps)
        assert abs(counts.mean() - expected) < 3 * se

    def test_sbm_bad_probability(self):
        with pytest.raises(ValueError, match="p_within"):
            sample_sbm((2, 2), 1.5, 0.2, seed=0)

    def test_sbm_bad_sizes(self):
        with pytest.raises(ValueError, match="positive"):
            sample_sbm((0, 3), 0.5, 0.5, seed=0)


class TestNeighbourhoods:
    def test_path_from_endpoint(self):
        g = Graph.from_edges(3, [(0, 1), (1, 2)])
        nb = neighbourhoods(g, 2)
        assert nb.nodes_at(0, 1).tolist() == [1]
        assert nb.weights_at(0, 1).tolist() == [1.0]
        assert nb.nodes_at(0, 2).tolist() == [2]
        assert nb.weights_at(0, 2).tolist() == [1.0]

    def test_star_center_equal_weights(self):
        k = 6
        g = Graph.from_edges(k + 1, [(0, i) for i in range(1, k + 1)])
        nb = neighbourhoods(g, 1)
        assert nb.nodes_at(0, 1).tolist() == list(range(1, k + 1))
        assert np.allclose(nb.weights_at(0, 1), 1.0 / k)

    def test_isolated_node_empty_sets(self):
        g = Graph.from_edges(3, [(0, 1)])
        nb = neighbourhoods(g, 2)
        assert nb.nodes_at(2, 1).size == 0
        assert nb.weights_at(2, 1).size == 0

    def test_stage_sets_disjoint_and_exclude_self(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            g = random_graph(rng, 12, 0.3)
            nb = neighbourhoods(g, 3)
            for i in range(12):
                seen = {i}
                for r in (1, 2, 3):
                    members = set(nb.nodes_at(i, r).tolist())
                    assert not members & seen
                    seen |= members

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_matches_bfs_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 21))
        g = random_graph(rng, n, 0.25)
        r_max = 3
        nb = neighbourhoods(g, r_max)
        for i in range(n):
            layers = bfs_layers(g, i, r_max)
            for r in range(1, r_max + 1):
                assert set(nb.nodes_at(i, r).tolist()) == layers[r - 1]

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_weights_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, int(rng.integers(2, 15)), 0.3)
        nb = neighbourhoods(g, 2)
        for i in range(g.n_nodes):
            for r in (1, 2):
                w = nb.weights_at(i, r)
                if w.size:
                    assert abs(w.sum() - 1.0) <= 1e-12
                    assert ((w >= 0) & (w <= 1)).all()

    def test_weight_matrix_layout(self):
        g = Graph.from_edges(3, [(0, 1), (0, 2)])
        w = neighbourhoods(g, 1).weight_matrix(1)
        assert np.allclose(w, [[0, 0.5, 0.5], [1, 0, 0], [1, 0, 0]])

    def test_r_max_validation(self):
        g = Graph.from_edges(2, [(0, 1)])
        with pytest.raises(ValueError):
            neighbourhoods(g, 0)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        g = sample_erdos_renyi(8, 12, seed=4)
        save_graph(g, tmp_path / "g.csv")
        loaded = load_graph(tmp_path / "g.csv")
        assert loaded.n_nodes == g.n_nodes
        assert loaded.directed == g.directed
        assert np.array_equal(loaded.adjacency, g.adjacency)

    def test_csv_header(self, tmp_path):
        g = Graph.from_edges(2, [(0, 1)])
        save_graph(g, tmp_path / "g.csv")
        assert (tmp_path / "g.csv").read_text().splitlines()[0] == "from,to"
        assert (tmp_path / "g.json").exists()
