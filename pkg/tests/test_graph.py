import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grapes.errors import GraphInputError
from grapes.graph import (LabelData, build_csr, candidates, complete_graph, edge_homophily,
                          layer_adjacency, normalize_full)

from oracles import dense_normalized, random_graph


graphs = st.integers(min_value=1, max_value=12).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                                             max_size=40)))


class TestBuildCsr:
    def test_single_edge(self):
        g = build_csr([(0, 1)], 2)
        assert g.row_offsets.tolist() == [0, 1, 2]
        assert g.col_indices.tolist() == [1, 0]
        assert g.num_edges == 1

    def test_duplicates_and_reverse_collapse(self):
        g = build_csr([(0, 1), (1, 0), (0, 1)], 2)
        assert g.row_offsets.tolist() == [0, 1, 2]
        assert g.col_indices.tolist() == [1, 0]

    def test_self_loop_stripped(self):
        g = build_csr([(0, 0)], 1)
        assert g.num_edges == 0
        assert g.row_offsets.tolist() == [0, 0]

    def test_out_of_range(self):
        with pytest.raises(GraphInputError):
            build_csr([(0, 2)], 2)

    @given(graphs)
    @settings(max_examples=60, deadline=None)
    def test_invariants(self, case):
        n, edges = case
        g = build_csr(edges, n)
        assert g.row_offsets[-1] == 2 * g.num_edges
        assert np.all(np.diff(g.row_offsets) >= 0)
        for i in range(n):
            row = g.neighbors(i)
            assert np.all(np.diff(row) > 0)
            assert i not in row
            for j in row:
                assert i in g.neighbors(j)


class TestCandidates:
    path = build_csr([(0, 1), (1, 2)], 3)

    def test_path_middle(self):
        assert candidates(self.path, [1]).tolist() == [0, 2]

    def test_everything_included(self):
        assert candidates(self.path, [0, 1, 2]).tolist() == []

    def test_complete(self):
        assert candidates(complete_graph(4), [0]).tolist() == [1, 2, 3]

    @given(graphs, st.data())
    @settings(max_examples=60, deadline=None)
    def test_disjoint_and_adjacent(self, case, data):
        n, edges = case
        g = build_csr(edges, n)
        K = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n, unique=True))
        c = candidates(g, K)
        assert not set(c) & set(K)
        reach = set()
        for v in K:
            reach.update(g.neighbors(v).tolist())
        assert set(c) <= reach


class TestNormalize:
    def test_isolated_node(self):
        assert normalize_full(build_csr([], 1)).matrix().toarray().tolist() == [[1.0]]

    def test_single_edge(self):
        m = normalize_full(build_csr([(0, 1)], 2)).matrix().toarray()
        np.testing.assert_allclose(m, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)

    def test_star(self):
        g = build_csr([(0, 1), (0, 2), (0, 3)], 4)
        m = normalize_full(g).matrix().toarray()
        assert m[0, 0] == pytest.approx(0.25)
        assert m[0, 1] == pytest.approx(0.35355339, abs=1e-8)
        np.testing.assert_allclose(m, dense_normalized(g), atol=1e-15)

    def test_matches_full_layer_block(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            g = random_graph(rng, 15, 0.3)
            everyone = np.arange(15)
            full = normalize_full(g).matrix().toarray()
            block = layer_adjacency(g, everyone, everyone).dense()
            np.testing.assert_allclose(full, block, atol=1e-12)
            np.testing.assert_allclose(full, full.T, atol=1e-12)
            assert np.all(full[full != 0] <= 1.0)
            assert np.all(full[full != 0] > 0.0)


class TestLayerAdjacency:
    path = build_csr([(0, 1), (1, 2)], 3)

    def test_self_only(self):
        assert layer_adjacency(self.path, [0], [0]).dense().tolist() == [[1.0]]

    def test_block_degrees(self):
        blk = layer_adjacency(self.path, [0], [1, 2]).dense()
        assert blk.tolist() == [[1.0, 0.0]]

    def test_no_edge(self):
        assert layer_adjacency(self.path, [0], [2]).dense().tolist() == [[0.0]]

    def test_values_follow_block_degrees(self):
        rng = np.random.default_rng(5)
        g = random_graph(rng, 20, 0.25)
        rows, cols = rng.choice(20, 8, replace=False), rng.choice(20, 11, replace=False)
        dense = dense_normalized(g) != 0
        pattern = dense[np.ix_(rows, cols)].astype(float)
        r, c = pattern.sum(axis=1), pattern.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            expected = np.where(pattern > 0, pattern / np.sqrt(np.outer(r, c)), 0.0)
        np.testing.assert_allclose(layer_adjacency(g, rows, cols).dense(), expected, atol=1e-15)


class TestHomophily:
    def test_uniform_labels(self):
        rng = np.random.default_rng(0)
        g = random_graph(rng, 10, 0.5)
        assert edge_homophily(g, LabelData.multiclass([2] * 10, 3)) == 1.0

    def test_jaccard_single_edge(self):
        g = build_csr([(0, 1)], 2)
        labels = LabelData.multilabel([{1, 2}, {2, 3}], 4)
        assert edge_homophily(g, labels) == pytest.approx(1 / 3)

    def test_no_edges(self):
        with pytest.raises(GraphInputError):
            edge_homophily(build_csr([], 3), LabelData.multiclass([0, 1, 0]))

    def test_eight_node_balanced_complete_graph(self):
        labels = LabelData.multiclass([0, 1, 1, 0, 1, 0, 0, 1], 2)
        assert edge_homophily(complete_graph(8), labels) == pytest.approx(12 / 28)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = 12
            g = random_graph(rng, n, 0.4)
            if g.num_edges == 0:
                continue
            y = rng.integers(0, 3, n)
            perm = rng.permutation(n)
            inv = np.argsort(perm)
            g2 = build_csr(perm[g.edges()], n)
            y2 = y[inv]
            assert edge_homophily(g, LabelData.multiclass(y, 3)) == pytest.approx(
                edge_homophily(g2, LabelData.multiclass(y2, 3)))
