"""Synthetic graph families and the oracle machinery for the partner-matching task.

A partner-matching instance is a complete graph on N nodes whose nodes are paired by
a random perfect matching. Both partners share a unique first feature; each
node's label is its partner's second feature. Only a sampler that looks at
features can find the partner reliably.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractViolation, GraphInputError, ShapeError
from .gcn import PROB_EPS, Module, glorot
from .graph import Graph, LabelData, candidates, complete_graph, build_csr, mean_adjacency
from .io import Dataset
from .sampler import sample_trajectory


@dataclass(frozen=True, eq=False)
class Theorem1Instance:
    graph: Graph
    features: np.ndarray
    labels: LabelData
    partner: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    def check(self) -> None:
        """Raise ContractViolation unless every structural invariant holds."""
        n = self.num_nodes
        p = self.partner
        idx = np.arange(n)
        if np.any(p == idx) or not np.array_equal(p[p], idx):
            raise ContractViolation("partner map is not a fixed-point-free involution")
        first = self.features[:, 0]
        same = first[:, None] == first[None, :]
        np.fill_diagonal(same, False)
        expected = np.zeros((n, n), dtype=bool)
        expected[idx, p] = True
        if not np.array_equal(same, expected):
            raise ContractViolation("first feature does not identify partners uniquely")
        y = self.labels.class_ids()
        if not np.array_equal(y, self.features[p, 1].astype(np.int64)):
            raise ContractViolation("labels are not the partners' second features")
        if self.graph.num_edges != n * (n - 1) // 2:
            raise ContractViolation("graph is not complete")

    def to_dataset(self, splits: dict[str, np.ndarray]) -> Dataset:
        return Dataset(self.graph, self.features, self.labels, splits)


def generate_theorem1(n: int, rng: np.random.Generator) -> Theorem1Instance:
    if n < 4 or n % 2:
        raise GraphInputError(f"partner-matching graphs need an even N >= 4, got {n}")
    perm = rng.permutation(n)
    pairs = perm.reshape(-1, 2)
    partner = np.empty(n, dtype=np.int64)
    partner[pairs[:, 0]] = pairs[:, 1]
    partner[pairs[:, 1]] = pairs[:, 0]
    X = np.zeros((n, 2))
    X[pairs[:, 0], 0] = np.arange(len(pairs)) + 1.0
    X[pairs[:, 1], 0] = np.arange(len(pairs)) + 1.0
    X[:, 1] = rng.integers(0, 2, size=n)
    labels = LabelData.multiclass(X[partner, 1].astype(np.int64), num_classes=2)
    inst = Theorem1Instance(complete_graph(n), X, labels, partner)
    return inst


def oracle_policy_probs(inst: Theorem1Instance, K) -> tuple[np.ndarray, np.ndarray]:
    """(candidates, p) with p = 1 - eps for partners of K and eps elsewhere."""
    K = np.asarray(K, dtype=np.int64)
    cands = candidates(inst.graph, K)
    high = np.isin(cands, inst.partner[K])
    return cands, np.where(high, 1.0 - PROB_EPS, PROB_EPS)


def partner_neighborhoods(inst: Theorem1Instance) -> list[np.ndarray]:
    return [np.array([j]) for j in inst.partner]


@dataclass
class OracleOutput:
    layer1: np.ndarray
    f: np.ndarray
    layer3: np.ndarray
    predictions: np.ndarray


def constructed_gcn_oracle(inst: Theorem1Instance, neighborhoods=None, features=None) -> OracleOutput:
    """The hand-built three-layer GCN with an exact comparison rule as its middle layer.

    Layer 1 stacks a node's own features on the mean of its neighbours';
    layer 2 outputs the second own feature when the first own feature equals
    the neighbour mean's first feature and 0 otherwise; layer 3 averages
    layer 2 over the neighbourhood. Only valid when every neighbourhood is
    exactly the node's partner.
    """
    X = inst.features if features is None else np.asarray(features, dtype=np.float64)
    n = inst.num_nodes
    if neighborhoods is None:
        neighborhoods = partner_neighborhoods(inst)
    if len(neighborhoods) != n:
        raise ContractViolation(f"{len(neighborhoods)} neighbourhoods for {n} nodes")
    for i, nb in enumerate(neighborhoods):
        nb = np.asarray(nb).reshape(-1)
        if nb.size != 1 or nb[0] != inst.partner[i]:
            raise ContractViolation(f"neighbourhood of node {i} is not exactly its partner")
    self_w = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    nbr_w = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    h1 = np.empty((n, 4))
    for i, nb in enumerate(neighborhoods):
        nb = np.asarray(nb).reshape(-1)
        h1[i] = self_w @ X[i] + nbr_w @ X[nb].mean(axis=0)
    f = np.where(np.abs(h1[:, 0] - h1[:, 2]) <= 1e-9, h1[:, 1], 0.0)
    h3 = np.array([f[np.asarray(nb).reshape(-1)].mean() for nb in neighborhoods])
    return OracleOutput(h1, f, h3, np.rint(h3).astype(np.int64))


def nonadaptive_hit_probability(n: int, k: int, num_layers: int = 1) -> float:
    """Chance that a non-adaptive sampler draws the partner: sum_i k / (n - i*k - 1)."""
    if n <= num_layers * k:
        raise GraphInputError(f"need N > L*K, got N={n}, L={num_layers}, K={k}")
    return float(sum(k / (n - i * k - 1) for i in range(num_layers)))


def monte_carlo_hit_rate(policy, inst: Theorem1Instance, k: int, num_layers: int, trials: int,
                         rng: np.random.Generator) -> float:
    """Fraction of single-target trajectories whose sampled nodes include the target's partner."""
    hits = 0
    targets = rng.integers(0, inst.num_nodes, size=trials)
    for t in targets:
        traj, _ = sample_trajectory(policy, inst.graph, inst.features, [t], k, num_layers, rng,
                                    build_blocks=False)
        partner = inst.partner[t]
        hits += any(partner in s.selected for s in traj.steps)
    return hits / trials


def random_splits(n: int, rng: np.random.Generator, fractions=(0.6, 0.2, 0.2)) -> dict[str, np.ndarray]:
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train:n_train + n_val]),
        "test": np.sort(perm[n_train + n_val:]),
    }


def generate_sbm(n: int, num_classes: int, rng: np.random.Generator, p_in: float = 0.1,
                 p_out: float = 0.005, num_features: int = 16, feature_noise: float = 1.0) -> Dataset:
    """Homophilous stochastic block model with Gaussian class-centred features."""
    y = rng.integers(0, num_classes, size=n)
    probs = np.where(y[:, None] == y[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < probs, k=1)
    g = build_csr(np.argwhere(upper), n)
    centres = rng.normal(size=(num_classes, num_features))
    X = centres[y] + feature_noise * rng.normal(size=(n, num_features))
    return Dataset(g, X, LabelData.multiclass(y, num_classes), random_splits(n, rng))


class PairRuleGcn(Module):
    """The three-layer partner-matching architecture with a trainable middle MLP.

    Layer 1 concatenates each node's features with the mean features of its
    neighbours among the targets; layer 2 is an MLP applied per node; layer 3
    averages the MLP outputs over each target's sampled neighbours (no
    self-loop). Works on one sampled hop.
    """

    def __init__(self, input_dim: int = 2, num_classes: int = 2, hidden_dim: int = 64, depth: int = 3,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        widths = [2 * input_dim] + [hidden_dim] * (depth - 1) + [num_classes]
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.hidden_dim = hidden_dim
        self.depth = depth
        self.weights = [ad.parameter(glorot(rng, a, b), name=f"W{i + 1}")
                        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))]
        self.biases = [ad.parameter(np.zeros((1, b)), name=f"b{i + 1}")
                       for i, b in enumerate(widths[1:])]

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for w, b in zip(self.weights, self.biases):
            out[w.name] = w
            out[b.name] = b
        return out

    def config(self) -> dict:
        return {"input_dim": self.input_dim, "num_classes": self.num_classes,
                "hidden_dim": self.hidden_dim, "depth": self.depth}

    def mlp(self, h: Tensor) -> Tensor:
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = ad.relu(h)
        return h

    def forward(self, sub, X: np.ndarray) -> Tensor:
        if len(sub.blocks) != 1:
            raise ShapeError("the partner-matching classifier works on exactly one sampled hop")
        k0, k1 = sub.layer_sets
        g = sub.graph
        gathered = mean_adjacency(g, k1, k0).matrix @ X[k0]
        h1 = Tensor(np.hstack([X[k1], gathered]))
        f = self.mlp(h1)
        return ad.spmm(mean_adjacency(g, k0, k1), f)
