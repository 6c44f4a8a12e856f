"""Policy entropy, sampled-label skew and node-count accounting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .graph import LabelData


@dataclass
class EntropyStats:
    mean: list[float]
    std: list[float]

    def to_record(self) -> dict:
        return {"entropy_mean": list(self.mean), "entropy_std": list(self.std)}


def bernoulli_entropy(p) -> np.ndarray:
    """Entropy in bits of Bernoulli(p), elementwise; 0 at p in {0, 1}."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p) + (1.0 - p) * np.log2(1.0 - p))
    return np.nan_to_num(h, nan=0.0)


def entropy_stats(probs_per_layer) -> EntropyStats:
    """Mean and std of per-candidate entropy, per layer. Empty layers report NaN."""
    probs_per_layer = list(probs_per_layer)
    if not probs_per_layer or all(np.size(p) == 0 for p in probs_per_layer):
        raise ShapeError("entropy statistics need at least one probability")
    means, stds = [], []
    for p in probs_per_layer:
        h = bernoulli_entropy(p)
        if h.size == 0:
            means.append(float("nan"))
            stds.append(float("nan"))
        else:
            means.append(float(h.mean()))
            stds.append(float(h.std()))
    return EntropyStats(means, stds)


def label_fractions(labels: LabelData, nodes=None) -> np.ndarray:
    ind = labels.indicator(nodes)
    if ind.shape[0] == 0:
        return np.zeros(labels.num_classes)
    return ind.mean(axis=0)


def label_distribution_diff(sampled_nodes, labels: LabelData, reference_nodes=None) -> np.ndarray:
    """Per class: fraction of reference nodes carrying it minus fraction of sampled nodes carrying it.

    The reference defaults to the whole graph.
    """
    sampled = np.unique(np.asarray(sampled_nodes, dtype=np.int64))
    return label_fractions(labels, reference_nodes) - label_fractions(labels, sampled)


@dataclass
class NodeBudget:
    candidates: list[int]
    selected: list[int]
    layer_sizes: list[int]
    union: int

    def to_record(self) -> dict:
        return {"candidates": self.candidates, "selected": self.selected,
                "layer_sizes": self.layer_sizes, "union": self.union}


def node_budget_report(traj) -> NodeBudget:
    """Per-layer candidate/selected counts and the number of distinct nodes touched."""
    nodes = [traj.targets] + [s.selected for s in traj.steps]
    return NodeBudget(
        candidates=[int(s.candidates.size) for s in traj.steps],
        selected=[int(s.selected.size) for s in traj.steps],
        layer_sizes=[int(s.layer_set.size) for s in traj.steps],
        union=int(np.unique(np.concatenate(nodes)).size),
    )
