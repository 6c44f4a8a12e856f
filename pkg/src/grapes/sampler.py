"""Layer-wise sampling policies, Gumbel-Top-k selection and trajectories."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError
from .gcn import PROB_EPS, SamplerGcn, inclusion_probs, sampler_logits
from .graph import Graph, LayerAdjacency, candidates, layer_adjacency

log = logging.getLogger(__name__)

POLICY_NAMES = ("random", "degree", "grapes-rl", "grapes-gfn", "oracle")


class UniformPolicy:
    """Constant p = 0.5: Gumbel-Top-k then picks a uniform k-subset."""

    name = "random"

    def probabilities(self, g, X, targets, previous, layer):
        cands = candidates(g, np.concatenate([targets, previous]))
        return cands, np.full(len(cands), 0.5), None


class DegreePolicy:
    """p_i = deg(i) / max candidate degree, clamped to [eps, 1 - eps]."""

    name = "degree"

    def probabilities(self, g, X, targets, previous, layer):
        cands = candidates(g, np.concatenate([targets, previous]))
        if cands.size == 0:
            return cands, np.zeros(0), None
        deg = g.degrees[cands].astype(np.float64)
        p = deg / deg.max()
        return cands, np.clip(p, PROB_EPS, 1.0 - PROB_EPS), None


class AdaptivePolicy:
    """Inclusion probabilities from a trainable sampler GCN."""

    name = "adaptive"

    def __init__(self, net: SamplerGcn):
        self.net = net

    def probabilities(self, g, X, targets, previous, layer):
        cands, logits = sampler_logits(self.net, g, X, targets, previous, layer)
        if cands.size == 0:
            return cands, np.zeros(0), None
        probs = inclusion_probs(logits)
        return cands, probs.data[:, 0].copy(), probs


class OraclePolicy:
    """Picks the partner of each node in K: the node sharing its matching key.

    The key defaults to the first feature column, which is exactly the partner
    relation on partner-matching graphs. An explicit ``partner`` array overrides it.
    """

    name = "oracle"

    def __init__(self, partner: np.ndarray | None = None, feature_column: int = 0):
        self.partner = None if partner is None else np.asarray(partner, dtype=np.int64)
        self.feature_column = feature_column

    def _partners_of(self, X, K: np.ndarray) -> np.ndarray:
        if self.partner is not None:
            return self.partner[K]
        key = X[:, self.feature_column]
        hits = np.isin(key, key[K])
        hits[K] = False
        return np.flatnonzero(hits)

    def probabilities(self, g, X, targets, previous, layer):
        K = np.concatenate([targets, previous])
        cands = candidates(g, K)
        high = np.isin(cands, self._partners_of(X, K))
        return cands, np.where(high, 1.0 - PROB_EPS, PROB_EPS), None


def policy_probs(policy, g: Graph, X: np.ndarray, targets, previous=(), layer: int = 1) -> np.ndarray:
    """Inclusion probabilities of the candidates of targets ∪ previous."""
    targets = np.asarray(targets, dtype=np.int64)
    previous = np.asarray(previous, dtype=np.int64)
    return policy.probabilities(g, X, targets, previous, layer)[1]


def gumbel_topk(log_p, k: int, rng: np.random.Generator | None, noise: bool = True) -> np.ndarray:
    """Sorted indices of the k largest log p_i + Gumbel(0, 1) noise.

    With k >= n every index is returned and no noise is drawn. Ties go to the
    lower index.
    """
    log_p = np.asarray(log_p, dtype=np.float64).reshape(-1)
    n = len(log_p)
    if n == 0:
        raise ShapeError("gumbel_topk of an empty array")
    if k < 1:
        raise ShapeError(f"k must be >= 1, got {k}")
    if k >= n:
        return np.arange(n)
    scores = log_p
    if noise:
        u = rng.random(n)
        u = np.clip(u, np.finfo(float).tiny, None)
        scores = log_p - np.log(-np.log(u))
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:k])


@dataclass
class LayerStep:
    candidates: np.ndarray
    probs: np.ndarray
    selected: np.ndarray
    layer_set: np.ndarray
    prob_tensor: Tensor | None = field(default=None, repr=False)

    @property
    def mask(self) -> np.ndarray:
        return np.isin(self.candidates, self.selected)


@dataclass
class Trajectory:
    targets: np.ndarray
    steps: list[LayerStep]

    @property
    def num_layers(self) -> int:
        return len(self.steps)

    def layer_sets(self) -> list[np.ndarray]:
        return [self.targets] + [s.layer_set for s in self.steps]

    def probabilities(self) -> list[np.ndarray]:
        return [s.probs for s in self.steps]


@dataclass
class SampledSubgraph:
    """Layer sets K^(0..L) and blocks; block l has rows K^(l), cols K^(l-1)."""

    graph: Graph
    layer_sets: list[np.ndarray]
    blocks: list[LayerAdjacency]

    @property
    def targets(self) -> np.ndarray:
        return self.layer_sets[0]


def build_subgraph(g: Graph, layer_sets: list[np.ndarray]) -> SampledSubgraph:
    blocks = [layer_adjacency(g, layer_sets[l], layer_sets[l - 1]) for l in range(1, len(layer_sets))]
    return SampledSubgraph(g, layer_sets, blocks)


def full_subgraph(g: Graph, num_layers: int, targets=None) -> SampledSubgraph:
    """Every hidden layer set is the whole node set; the last one holds the targets."""
    everyone = np.arange(g.num_nodes)
    targets = everyone if targets is None else np.asarray(targets, dtype=np.int64)
    sets = [targets] + [everyone] * num_layers
    return build_subgraph(g, sets)


def sample_trajectory(policy, g: Graph, X: np.ndarray, targets, k: int, num_layers: int,
                      rng: np.random.Generator | None, noise: bool = True,
                      build_blocks: bool = True) -> tuple[Trajectory, SampledSubgraph | None]:
    """Sample V^(1..L) layer by layer, each layer conditioned on the previous one."""
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if targets.size == 0:
        raise ShapeError("a trajectory needs at least one target")
    steps = []
    previous = np.zeros(0, dtype=np.int64)
    for layer in range(1, num_layers + 1):
        cands, probs, prob_tensor = policy.probabilities(g, X, targets, previous, layer)
        if cands.size == 0:
            log.debug("layer %d has no candidates; sampling nothing", layer)
            selected = cands
        else:
            selected = cands[gumbel_topk(np.log(probs), k, rng, noise=noise)]
        layer_set = np.concatenate([targets, selected])
        steps.append(LayerStep(cands, probs, selected, layer_set, prob_tensor))
        previous = selected
    traj = Trajectory(targets, steps)
    sub = build_subgraph(g, traj.layer_sets()) if build_blocks else None
    return traj, sub


def log_q(traj: Trajectory) -> Tensor:
    """Unconditional Bernoulli log-likelihood of the sampled sets.

    Differentiable through the sampler network when the trajectory came from
    an adaptive policy; a constant otherwise.
    """
    total = Tensor(0.0)
    for step in traj.steps:
        if step.candidates.size == 0:
            continue
        m = step.mask.astype(np.float64).reshape(-1, 1)
        p = step.prob_tensor if step.prob_tensor is not None else Tensor(step.probs.reshape(-1, 1))
        terms = ad.mul(m, ad.log(p)) + ad.mul(1.0 - m, ad.log(1.0 - p))
        total = total + ad.total(terms)
    return total
