"""Classification and sampler losses, the training epoch, and micro-F1 evaluation."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor
from .diagnostics import entropy_stats, label_distribution_diff, node_budget_report
from .errors import ConfigError, ShapeError
from .gcn import ClassifierGcn, GcnConfig, Module, SamplerGcn, ZNet, classifier_forward, z_forward
from .graph import Graph, LabelData
from .sampler import (AdaptivePolicy, DegreePolicy, OraclePolicy, UniformPolicy, full_subgraph, log_q,
                      sample_trajectory)

ESTIMATORS = ("rl", "gfn", "none")


@dataclass
class TrainConfig:
    batch_size: int = 256
    k: int = 256
    num_layers: int = 2
    epochs: int = 100
    lr_classifier: float = 1e-3
    lr_sampler: float = 1e-3
    alpha: float = 1.0
    estimator: str = "none"
    seed: int = 0
    sampled_eval: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.estimator == "gfn" and self.alpha <= 0:
            raise ConfigError(f"reward scale alpha must be > 0, got {self.alpha}")
        if self.lr_classifier < 0 or self.lr_sampler < 0:
            raise ConfigError("learning rates must be non-negative")
        for name in ("batch_size", "k", "num_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class EpochReport:
    epoch: int
    train_loss: float
    val_f1: float
    entropy_mean: list[float]
    entropy_std: list[float]
    candidates: list[float]
    selected: list[float]
    nodes_per_batch: float
    nodes_touched: int
    label_diff: list[float]
    sampler_loss: float | None = None
    wall_time: float = 0.0

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, rec: dict) -> "EpochReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in rec.items() if k in names})


@dataclass
class TrainState:
    classifier: Module
    policy: object
    opt_classifier: Adam
    sampler: SamplerGcn | None = None
    znet: ZNet | None = None
    opt_sampler: Adam | None = None

    def nets(self) -> dict[str, Module]:
        out = {"classifier": self.classifier}
        if self.sampler is not None:
            out["sampler"] = self.sampler
        if self.znet is not None:
            out["znet"] = self.znet
        return out


def estimator_for(sampler_kind: str) -> str:
    return {"grapes-rl": "rl", "grapes-gfn": "gfn"}.get(sampler_kind, "none")


def init_state(cfg: TrainConfig, input_dim: int, num_classes: int, sampler_kind: str = "random",
               hidden_dim: int = 256, sampler_hidden: int = 256, sampler_layers: int = 2,
               z_hidden: int = 64, classifier: Module | None = None, zero_sampler: bool = False,
               partner=None) -> TrainState:
    """Fresh networks and optimisers, all seeded from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    if classifier is None:
        classifier = ClassifierGcn(GcnConfig(input_dim, num_classes, cfg.num_layers, hidden_dim), rng)
    sampler = znet = opt_sampler = None
    if sampler_kind in ("grapes-rl", "grapes-gfn"):
        sampler = SamplerGcn(input_dim, cfg.num_layers, sampler_layers, sampler_hidden, rng, zero=zero_sampler)
        policy = AdaptivePolicy(sampler)
        params = sampler.parameters()
        if sampler_kind == "grapes-gfn":
            znet = ZNet(input_dim, z_hidden, rng)
            params += znet.parameters()
        opt_sampler = Adam(params, lr=cfg.lr_sampler)
    elif sampler_kind == "random":
        policy = UniformPolicy()
    elif sampler_kind == "degree":
        policy = DegreePolicy()
    elif sampler_kind == "oracle":
        policy = OraclePolicy(partner)
    else:
        raise ConfigError(f"unknown sampler {sampler_kind!r}")
    return TrainState(classifier, policy, Adam(classifier.parameters(), lr=cfg.lr_classifier),
                      sampler, znet, opt_sampler)


# -- losses -------------------------------------------------------------------

def classification_loss(logits: Tensor, labels: LabelData, targets) -> Tensor:
    targets = np.asarray(targets, dtype=np.int64)
    if logits.shape[0] != len(targets):
        raise ShapeError(f"{logits.shape[0]} logit rows for {len(targets)} targets")
    if logits.shape[1] != labels.num_classes:
        raise ShapeError(f"{logits.shape[1]} logit columns for {labels.num_classes} classes")
    if labels.is_multilabel:
        return ad.binary_cross_entropy(logits, labels.indicator(targets))
    return ad.softmax_cross_entropy(logits, labels.class_ids(targets))


def reinforce_loss(traj, loss_value: float) -> Tensor:
    """loss_value * log q(trajectory); loss_value must be a plain number."""
    if isinstance(loss_value, Tensor):
        raise ShapeError("pass the classification loss as a detached float")
    return ad.mul(float(loss_value), log_q(traj))


def gfn_loss(traj, log_z: Tensor, loss_value: float, alpha: float) -> Tensor:
    """Trajectory balance with P_B = 1 and reward exp(-alpha * loss): (log Z + log q + alpha*loss)^2."""
    if alpha <= 0:
        raise ConfigError(f"reward scale alpha must be > 0, got {alpha}")
    if isinstance(loss_value, Tensor):
        raise ShapeError("pass the classification loss as a detached float")
    return ad.square(log_z + log_q(traj) + alpha * float(loss_value))


# -- evaluation ----------------------------------------------------------------

def predict(logits: np.ndarray, labels: LabelData) -> np.ndarray:
    """0/1 prediction matrix: argmax for multi-class, logit > 0 (sigmoid > 0.5) for multi-label."""
    if labels.is_multilabel:
        return (logits > 0.0).astype(np.float64)
    out = np.zeros_like(logits)
    out[np.arange(len(logits)), np.argmax(logits, axis=1)] = 1.0
    return out


def micro_f1(pred: np.ndarray, truth: np.ndarray) -> float:
    tp = float(np.sum((pred == 1) & (truth == 1)))
    fp = float(np.sum((pred == 1) & (truth == 0)))
    fn = float(np.sum((pred == 0) & (truth == 1)))
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


_FULL_CACHE: dict[tuple[int, int], object] = {}


def _full(g: Graph, num_layers: int):
    key = (id(g), num_layers)
    hit = _FULL_CACHE.get(key)
    if hit is None or hit[0] is not g:
        _FULL_CACHE.clear()
        hit = (g, full_subgraph(g, num_layers))
        _FULL_CACHE[key] = hit
    return hit[1]


def full_logits(net: Module, g: Graph, X: np.ndarray) -> np.ndarray:
    """Unsampled forward pass over every node."""
    if not isinstance(net, ClassifierGcn):
        raise ShapeError("full-batch inference needs a ClassifierGcn")
    return classifier_forward(net, _full(g, net.config.num_layers), X).data


def evaluate_f1(net: Module, g: Graph, X: np.ndarray, labels: LabelData, targets) -> float:
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        return float("nan")
    logits = full_logits(net, g, X)[targets]
    return micro_f1(predict(logits, labels), labels.indicator(targets))


def evaluate_sampled_f1(net: Module, policy, g: Graph, X: np.ndarray, labels: LabelData, targets,
                        k: int, num_layers: int, batch_size: int, rng: np.random.Generator,
                        noise: bool = True) -> float:
    """Micro-F1 with each batch classified on a subgraph drawn from ``policy``."""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        return float("nan")
    preds, truth = [], []
    for lo in range(0, len(targets), batch_size):
        batch = targets[lo:lo + batch_size]
        _, sub = sample_trajectory(policy, g, X, batch, k, num_layers, rng, noise=noise)
        preds.append(predict(classifier_forward(net, sub, X).data, labels))
        truth.append(labels.indicator(batch))
    return micro_f1(np.vstack(preds), np.vstack(truth))


# -- training loop ------------------------------------------------------------------

def train_epoch(state: TrainState, g: Graph, X: np.ndarray, labels: LabelData, train_targets,
                cfg: TrainConfig, rng: np.random.Generator, epoch: int = 0,
                val_targets=None) -> EpochReport:
    """One pass over the shuffled training targets.

    Per batch: sample a trajectory, compute the classification loss, update
    the sampler (and log Z) from the sampler loss, then update the classifier
    from the classification loss. The sampler loss sees the classification
    loss only as a number, so neither update touches the other's weights.
    """
    start = time.perf_counter()
    order = rng.permutation(np.asarray(train_targets, dtype=np.int64))
    L = cfg.num_layers
    losses, sampler_losses, sizes = [], [], []
    probs: list[list[np.ndarray]] = [[] for _ in range(L)]
    cand_counts, sel_counts = np.zeros(L), np.zeros(L)
    unions, touched, label_diffs = [], set(), []
    for lo in range(0, len(order), cfg.batch_size):
        batch = order[lo:lo + cfg.batch_size]
        traj, sub = sample_trajectory(state.policy, g, X, batch, cfg.k, L, rng)
        logits = classifier_forward(state.classifier, sub, X)
        loss_c = classification_loss(logits, labels, batch)
        value = loss_c.item()

        if cfg.estimator != "none" and state.opt_sampler is not None:
            if cfg.estimator == "rl":
                loss_s = reinforce_loss(traj, value)
            else:
                loss_s = gfn_loss(traj, z_forward(state.znet, g, X, batch), value, cfg.alpha)
            state.opt_sampler.zero_grad()
            ad.backward(loss_s)
            state.opt_sampler.step()
            sampler_losses.append(loss_s.item())

        state.opt_classifier.zero_grad()
        ad.backward(loss_c)
        state.opt_classifier.step()

        losses.append(value)
        sizes.append(len(batch))
        budget = node_budget_report(traj)
        unions.append(budget.union)
        for l, step in enumerate(traj.steps):
            probs[l].append(step.probs)
            cand_counts[l] += budget.candidates[l]
            sel_counts[l] += budget.selected[l]
            touched.update(step.selected.tolist())
        touched.update(batch.tolist())
        sampled = np.concatenate([s.selected for s in traj.steps]) if traj.steps else batch
        label_diffs.append(label_distribution_diff(sampled, labels) if sampled.size else
                           np.zeros(labels.num_classes))

    n_batches = max(len(losses), 1)
    layer_probs = [np.concatenate(p) if p else np.zeros(0) for p in probs]
    ent = entropy_stats(layer_probs) if any(p.size for p in layer_probs) else None
    if val_targets is not None and len(val_targets):
        if cfg.sampled_eval:
            val = evaluate_sampled_f1(state.classifier, state.policy, g, X, labels, val_targets,
                                      cfg.k, L, cfg.batch_size, rng)
        else:
            val = evaluate_f1(state.classifier, g, X, labels, val_targets)
    else:
        val = float("nan")
    nan_layers = [float("nan")] * L
    return EpochReport(
        epoch=epoch,
        train_loss=float(np.average(losses, weights=sizes)) if losses else float("nan"),
        val_f1=val,
        entropy_mean=ent.mean if ent else nan_layers,
        entropy_std=ent.std if ent else nan_layers,
        candidates=(cand_counts / n_batches).tolist(),
        selected=(sel_counts / n_batches).tolist(),
        nodes_per_batch=float(np.mean(unions)) if unions else 0.0,
        nodes_touched=len(touched),
        label_diff=np.mean(label_diffs, axis=0).tolist() if label_diffs else [0.0] * labels.num_classes,
        sampler_loss=float(np.mean(sampler_losses)) if sampler_losses else None,
        wall_time=time.perf_counter() - start,
    )


def train(state: TrainState, dataset, cfg: TrainConfig, rng: np.random.Generator | None = None,
          sink=None) -> list[EpochReport]:
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    reports = []
    for epoch in range(cfg.epochs):
        rep = train_epoch(state, dataset.graph, dataset.features, dataset.labels,
                          dataset.splits["train"], cfg, rng, epoch=epoch,
                          val_targets=dataset.splits.get("val"))
        reports.append(rep)
        if sink is not None:
            sink.write(rep)
    return reports


def evaluate_state(state: TrainState, dataset, cfg: TrainConfig, split: str = "test",
                   rng: np.random.Generator | None = None) -> float:
    targets = dataset.splits.get(split, np.zeros(0, np.int64))
    if cfg.sampled_eval or not isinstance(state.classifier, ClassifierGcn):
        rng = rng if rng is not None else np.random.default_rng(cfg.seed + 1)
        return evaluate_sampled_f1(state.classifier, state.policy, dataset.graph, dataset.features,
                                   dataset.labels, targets, cfg.k, cfg.num_layers, cfg.batch_size, rng)
    return evaluate_f1(state.classifier, dataset.graph, dataset.features, dataset.labels, targets)
