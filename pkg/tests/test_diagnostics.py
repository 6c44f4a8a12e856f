import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grapes.diagnostics import entropy_stats, label_distribution_diff, node_budget_report
from grapes.errors import ShapeError
from grapes.gcn import PROB_EPS
from grapes.graph import LabelData, build_csr
from grapes.sampler import UniformPolicy, sample_trajectory

from oracles import random_graph

probs = st.lists(st.floats(min_value=PROB_EPS, max_value=1 - PROB_EPS), min_size=1, max_size=30)


class TestEntropy:
    def test_half(self):
        s = entropy_stats([np.full(7, 0.5), np.full(3, 0.5)])
        assert s.mean == [1.0, 1.0]
        assert s.std == [0.0, 0.0]

    def test_near_deterministic(self):
        s = entropy_stats([np.full(5, PROB_EPS)])
        assert s.mean[0] < 1e-4 and s.std[0] < 1e-12

    def test_quarter(self):
        h = -(0.25 * np.log2(0.25) + 0.75 * np.log2(0.75))
        assert entropy_stats([[0.25]]).mean[0] == pytest.approx(h, rel=1e-14)
        assert entropy_stats([[0.25]]).mean[0] == pytest.approx(0.811278, abs=1e-6)

    def test_empty(self):
        with pytest.raises(ShapeError):
            entropy_stats([])
        with pytest.raises(ShapeError):
            entropy_stats([np.zeros(0)])

    def test_empty_layer_is_nan(self):
        s = entropy_stats([[0.5], []])
        assert np.isnan(s.mean[1])

    @given(probs)
    @settings(max_examples=100, deadline=None)
    def test_symmetric_and_bounded(self, p):
        p = np.array(p)
        a, b = entropy_stats([p]), entropy_stats([1.0 - p])
        assert a.mean[0] == pytest.approx(b.mean[0], abs=1e-12)
        assert a.std[0] == pytest.approx(b.std[0], abs=1e-12)
        assert 0.0 <= a.mean[0] <= 1.0 and a.std[0] >= 0.0


class TestLabelDiff:
    labels = LabelData.multiclass([0, 0, 0, 1, 1, 1], 2)

    def test_full_set(self):
        assert label_distribution_diff(range(6), self.labels).tolist() == [0.0, 0.0]

    def test_single_class(self):
        labels = LabelData.multiclass([1, 1, 1], 3)
        assert label_distribution_diff([0, 2], labels)[1] == 0.0

    def test_skewed_hand_count(self):
        # graph: 3/6 in each class; sample {0, 1, 3}: 2/3 class 0, 1/3 class 1
        diff = label_distribution_diff([0, 1, 3], self.labels)
        np.testing.assert_allclose(diff, [0.5 - 2 / 3, 0.5 - 1 / 3])
        assert diff[0] < 0 < diff[1]


class TestNodeBudget:
    def test_bound(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            g = random_graph(rng, 30, 0.2)
            traj, _ = sample_trajectory(UniformPolicy(), g, np.zeros((30, 1)), [0, 1], 4, 2, rng,
                                        build_blocks=False)
            rep = node_budget_report(traj)
            assert rep.union <= 2 + 2 * 4
            brute = set([0, 1])
            for s in traj.steps:
                brute |= set(s.selected.tolist())
            assert rep.union == len(brute)

    def test_full_budget(self):
        g = build_csr([(0, 1), (0, 2), (0, 3)], 4)
        traj, _ = sample_trajectory(UniformPolicy(), g, np.zeros((4, 1)), [0], 10, 1, np.random.default_rng(0))
        rep = node_budget_report(traj)
        assert rep.selected == rep.candidates == [3]
        assert rep.layer_sizes == [4]
