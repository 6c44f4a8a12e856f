"""Classifier GCN, sampler GCN and the log-partition network."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .graph import Graph, candidates, layer_adjacency, neighborhood_adjacency

PROB_EPS = 1e-6


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class GcnConfig:
    input_dim: int
    output_dim: int
    num_layers: int = 2
    hidden_dim: int = 256

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if min(self.input_dim, self.output_dim, self.hidden_dim) <= 0:
            raise ConfigError("layer widths must be positive")

    def widths(self) -> list[int]:
        return [self.input_dim] + [self.hidden_dim] * (self.num_layers - 1) + [self.output_dim]


class Module:
    """Named parameter bookkeeping shared by the networks."""

    def named_parameters(self) -> dict[str, Tensor]:
        raise NotImplementedError

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        if set(params) != set(state):
            raise ShapeError(f"checkpoint keys {sorted(state)} do not match {sorted(params)}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ShapeError(f"{k}: checkpoint shape {arr.shape} != {p.data.shape}")
            p.data[...] = arr


class ClassifierGcn(Module):
    """L-layer GCN without biases: h' = relu(Â h W), no activation on the last layer."""

    def __init__(self, config: GcnConfig, rng: np.random.Generator | None = None, zero: bool = False):
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(0)
        w = config.widths()
        self.weights = [
            ad.parameter(np.zeros((a, b)) if zero else glorot(rng, a, b), name=f"W{i + 1}")
            for i, (a, b) in enumerate(zip(w[:-1], w[1:]))
        ]

    def named_parameters(self) -> dict[str, Tensor]:
        return {w.name: w for w in self.weights}

    def forward(self, sub, X: np.ndarray) -> Tensor:
        return classifier_forward(self, sub, X)


def classifier_forward(net, sub, X: np.ndarray) -> Tensor:
    """Logits at the batch targets, evaluated deepest layer first.

    Layer t aggregates from K^(L-t+1) into K^(L-t) through the transposed
    block of sampled layer L-t+1, so targets get the full L-hop field.
    """
    if not isinstance(net, ClassifierGcn):
        return net.forward(sub, X)
    L = net.config.num_layers
    if len(sub.blocks) != L or len(sub.layer_sets) != L + 1:
        raise ShapeError(f"classifier has {L} layers but subgraph has {len(sub.blocks)} blocks")
    if X.shape[1] != net.config.input_dim:
        raise ShapeError(f"features have width {X.shape[1]}, network expects {net.config.input_dim}")
    h = Tensor(X[sub.layer_sets[L]])
    for t in range(1, L + 1):
        block = sub.blocks[L - t].T
        h = ad.spmm(block, h) @ net.weights[t - 1]
        if t < L:
            h = ad.relu(h)
    return h


class SamplerGcn(Module):
    """Sampler GCN over features augmented with a one-hot layer indicator.

    Each layer computes relu(Â h W + h R): the separate root weight R lets a
    node compare its own features against what it receives from its neighbours.
    The last layer emits one logit per node. No biases, so an all-zero network
    is a fixed point that emits p = 0.5 everywhere.
    """

    def __init__(self, input_dim: int, num_layers: int = 2, sampler_layers: int = 2,
                 hidden_dim: int = 256, rng: np.random.Generator | None = None, zero: bool = False):
        if sampler_layers < 1:
            raise ConfigError("sampler needs at least one layer")
        self.input_dim = input_dim
        self.num_layers = num_layers
        self.sampler_layers = sampler_layers
        self.hidden_dim = hidden_dim
        rng = rng if rng is not None else np.random.default_rng(0)
        w = [input_dim + num_layers + 1] + [hidden_dim] * (sampler_layers - 1) + [1]
        self.weights, self.roots = [], []
        for i, (a, b) in enumerate(zip(w[:-1], w[1:])):
            self.weights.append(ad.parameter(np.zeros((a, b)) if zero else glorot(rng, a, b), name=f"W{i + 1}"))
            self.roots.append(ad.parameter(np.zeros((a, b)) if zero else glorot(rng, a, b), name=f"R{i + 1}"))

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for w, r in zip(self.weights, self.roots):
            out[w.name] = w
            out[r.name] = r
        return out

    def config(self) -> dict:
        return {"input_dim": self.input_dim, "num_layers": self.num_layers,
                "sampler_layers": self.sampler_layers, "hidden_dim": self.hidden_dim}


def indicator_features(X: np.ndarray, slots: np.ndarray, width: int) -> np.ndarray:
    onehot = np.zeros((len(slots), width))
    onehot[np.arange(len(slots)), slots] = 1.0
    return np.hstack([X, onehot])


def sampler_logits(net: SamplerGcn, g: Graph, X: np.ndarray, targets, previous, layer_index: int):
    """Logits for the candidates of K = targets ∪ previous.

    ``previous`` holds the nodes sampled at layer ``layer_index - 1``. Returns
    ``(candidate ids, logits tensor of shape (m, 1))``; both are empty when K
    has no candidates.
    """
    targets = np.asarray(targets, dtype=np.int64)
    previous = np.asarray(previous, dtype=np.int64)
    if targets.size == 0:
        raise ShapeError("sampler needs a non-empty target set")
    if not 1 <= layer_index <= net.num_layers:
        raise ShapeError(f"layer index {layer_index} outside [1, {net.num_layers}]")
    K = np.concatenate([targets, previous])
    cands = candidates(g, K)
    if cands.size == 0:
        return cands, Tensor(np.zeros((0, 1)))
    slots = np.concatenate([np.zeros(len(targets), np.int64),
                            np.full(len(previous), layer_index - 1),
                            np.full(len(cands), layer_index)])
    feats = indicator_features(X[np.concatenate([K, cands])], slots, net.num_layers + 1)
    adj = neighborhood_adjacency(g, K, cands)
    h = Tensor(feats)
    last = len(net.weights) - 1
    for i, (w, r) in enumerate(zip(net.weights, net.roots)):
        h = ad.spmm(adj, h) @ w + h @ r
        if i < last:
            h = ad.relu(h)
    return cands, ad.take_rows(h, np.arange(len(K), len(K) + len(cands)))


def inclusion_probs(logits: Tensor, eps: float = PROB_EPS) -> Tensor:
    return ad.clip(ad.sigmoid(logits), eps, 1.0 - eps)


class ZNet(Module):
    """log Z of a batch: one GCN layer on the target-induced subgraph, mean pool, affine map."""

    def __init__(self, input_dim: int, hidden_dim: int = 64, rng: np.random.Generator | None = None,
                 zero: bool = False):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.weight = ad.parameter(np.zeros((input_dim, hidden_dim)) if zero else glorot(rng, input_dim, hidden_dim), name="W")
        self.head = ad.parameter(np.zeros((hidden_dim, 1)) if zero else glorot(rng, hidden_dim, 1), name="a")
        self.bias = ad.parameter(np.zeros((1, 1)), name="c")

    def named_parameters(self) -> dict[str, Tensor]:
        return {"W": self.weight, "a": self.head, "c": self.bias}


def z_forward(net: ZNet, g: Graph, X: np.ndarray, targets) -> Tensor:
    targets = np.unique(np.asarray(targets, dtype=np.int64))
    if targets.size == 0:
        raise ShapeError("log Z needs at least one target")
    adj = layer_adjacency(g, targets, targets)
    h = ad.relu(ad.spmm(adj, Tensor(X[targets])) @ net.weight)
    return ad.mean_rows(h) @ net.head + net.bias


def save_checkpoint(path, nets: dict[str, Module], meta: dict | None = None) -> None:
    """Write named weight matrices (``net/param``) plus JSON metadata to an .npz file."""
    arrays = {}
    for prefix, net in nets.items():
        for k, v in net.state_dict().items():
            arrays[f"{prefix}/{k}"] = v
    arrays["__meta__"] = np.array(json.dumps(meta or {}, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[dict[str, dict[str, np.ndarray]], dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        nets: dict[str, dict[str, np.ndarray]] = {}
        for key in data.files:
            if key == "__meta__":
                continue
            prefix, name = key.split("/", 1)
            nets.setdefault(prefix, {})[name] = data[key].copy()
    return nets, meta


def gcn_config_dict(cfg: GcnConfig) -> dict:
    return asdict(cfg)
