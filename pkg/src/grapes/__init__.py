"""Adaptive layer-wise neighbour sampling for GCN training."""

from .graph import Graph, LabelData, build_csr, candidates, edge_homophily, layer_adjacency, normalize_full
from .autodiff import Tensor, backward
from .sampler import gumbel_topk, log_q, sample_trajectory
from .training import TrainConfig, EpochReport, train_epoch, evaluate_f1

__version__ = "0.1.0"
