"""Immutable CSR graphs, neighbourhood queries and adjacency normalisation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import GraphInputError, ShapeError

MULTI_CLASS = "multi-class"
MULTI_LABEL = "multi-label"


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph stored symmetrically in CSR form.

    Self-loops are never stored; they are added at normalisation time.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    num_edges: int
    _tilde: sp.csr_matrix | None = field(default=None, repr=False, compare=False)
    _adj: sp.csr_matrix | None = field(default=None, repr=False, compare=False)

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def edges(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with u < v, sorted."""
        src = np.repeat(np.arange(self.num_nodes), self.degrees)
        keep = src < self.col_indices
        return np.stack([src[keep], self.col_indices[keep]], axis=1)

    def adjacency(self) -> sp.csr_matrix:
        if self._adj is None:
            data = np.ones(len(self.col_indices))
            mat = sp.csr_matrix((data, self.col_indices, self.row_offsets),
                                shape=(self.num_nodes, self.num_nodes))
            object.__setattr__(self, "_adj", mat)
        return self._adj

    def tilde(self) -> sp.csr_matrix:
        """A + I as a cached CSR matrix."""
        if self._tilde is None:
            mat = (self.adjacency() + sp.identity(self.num_nodes, format="csr")).tocsr()
            mat.sort_indices()
            object.__setattr__(self, "_tilde", mat)
        return self._tilde

    def same_structure(self, other: "Graph") -> bool:
        return (self.num_nodes == other.num_nodes
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices))


def build_csr(edge_list: Iterable[Sequence[int]] | np.ndarray, num_nodes: int) -> Graph:
    """Deduplicate, symmetrise and strip self-loops from an edge list."""
    edges = np.asarray(list(edge_list) if not isinstance(edge_list, np.ndarray) else edge_list,
                       dtype=np.int64).reshape(-1, 2)
    if num_nodes < 0:
        raise GraphInputError(f"num_nodes must be non-negative, got {num_nodes}")
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        bad = edges[(edges < 0).any(axis=1) | (edges >= num_nodes).any(axis=1)][0]
        raise GraphInputError(f"edge ({bad[0]}, {bad[1]}) out of range for {num_nodes} nodes")
    edges = edges[edges[:, 0] != edges[:, 1]]
    both = np.concatenate([edges, edges[:, ::-1]])
    if len(both):
        both = np.unique(both, axis=0)
    counts = np.bincount(both[:, 0], minlength=num_nodes) if len(both) else np.zeros(num_nodes, int)
    row_offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    col_indices = both[:, 1].astype(np.int64) if len(both) else np.zeros(0, np.int64)
    return Graph(num_nodes, row_offsets, col_indices, len(both) // 2)


def complete_graph(n: int) -> Graph:
    iu = np.triu_indices(n, k=1)
    return build_csr(np.stack(iu, axis=1), n)


def candidates(g: Graph, K: Iterable[int]) -> np.ndarray:
    """Neighbours of the node set K that are not themselves in K, sorted by id."""
    K = np.unique(np.asarray(list(K) if not isinstance(K, np.ndarray) else K, dtype=np.int64))
    if K.size == 0:
        return K
    nbrs = np.concatenate([g.neighbors(i) for i in K])
    return np.setdiff1d(np.unique(nbrs), K, assume_unique=True)


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """D̃^-1/2 (A+I) D̃^-1/2 in CSR form."""

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets),
                             shape=(self.num_nodes, self.num_nodes))

    def as_layer(self) -> "LayerAdjacency":
        nodes = np.arange(self.num_nodes)
        return LayerAdjacency(nodes, nodes, self.matrix())


def normalize_full(g: Graph) -> NormalizedAdjacency:
    n = g.num_nodes
    dtilde = g.degrees.astype(np.float64) + 1.0
    offsets = g.row_offsets + np.arange(n + 1)
    cols = np.empty(len(g.col_indices) + n, dtype=np.int64)
    vals = np.empty(len(cols))
    for i in range(n):
        row = np.sort(np.append(g.neighbors(i), i))
        cols[offsets[i]:offsets[i + 1]] = row
        vals[offsets[i]:offsets[i + 1]] = 1.0 / np.sqrt(dtilde[i] * dtilde[row])
    return NormalizedAdjacency(n, offsets, cols, vals)


@dataclass(frozen=True, eq=False)
class LayerAdjacency:
    """A normalised |rows| x |cols| block of A+I between two ordered node lists."""

    rows: np.ndarray
    cols: np.ndarray
    matrix: sp.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def T(self) -> "LayerAdjacency":
        return LayerAdjacency(self.cols, self.rows, self.matrix.T.tocsr())

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _as_index(nodes) -> np.ndarray:
    return np.asarray(nodes, dtype=np.int64).reshape(-1)


def _sym_normalize(block: sp.csr_matrix) -> sp.csr_matrix:
    """Scale entry (i, j) of a 0/1 block by 1/sqrt(row_nnz_i * col_nnz_j)."""
    block = block.tocsr(copy=True)
    block.sum_duplicates()
    block.sort_indices()
    row_nnz = np.diff(block.indptr)
    col_nnz = np.bincount(block.indices, minlength=block.shape[1]).astype(np.float64)
    row_of = np.repeat(np.arange(block.shape[0]), row_nnz)
    block.data = 1.0 / np.sqrt(row_nnz[row_of].astype(np.float64) * col_nnz[block.indices])
    return block


def layer_adjacency(g: Graph, rows, cols) -> LayerAdjacency:
    """Normalised block of A+I with rows/cols restricted to the given node lists.

    Degrees are counted inside the block; rows without any entry stay zero.
    """
    rows, cols = _as_index(rows), _as_index(cols)
    block = g.tilde()[rows][:, cols]
    return LayerAdjacency(rows, cols, _sym_normalize(block))


def neighborhood_adjacency(g: Graph, K, C) -> LayerAdjacency:
    """Normalised adjacency of the node list K ++ C keeping only edges that touch K.

    Edges between two nodes of C are dropped; self-loops are kept for every node.
    """
    K, C = _as_index(K), _as_index(C)
    nodes = np.concatenate([K, C])
    block = g.tilde()[nodes][:, nodes].tocoo()
    nk = len(K)
    keep = (block.row < nk) | (block.col < nk) | (block.row == block.col)
    block = sp.csr_matrix((block.data[keep], (block.row[keep], block.col[keep])), shape=block.shape)
    return LayerAdjacency(nodes, nodes, _sym_normalize(block))


def mean_adjacency(g: Graph, rows, cols) -> LayerAdjacency:
    """Row-normalised block of A (no self-loops): each row averages its neighbours in cols."""
    rows, cols = _as_index(rows), _as_index(cols)
    block = g.adjacency()[rows][:, cols].tocsr(copy=True)
    block.sort_indices()
    row_nnz = np.diff(block.indptr)
    block.data = 1.0 / np.repeat(row_nnz, row_nnz).astype(np.float64)
    return LayerAdjacency(rows, cols, block)


@dataclass(frozen=True)
class LabelData:
    """Node labels: one class id per node, or a sorted label set per node."""

    task: str
    num_classes: int
    payload: tuple

    def __post_init__(self):
        if self.task not in (MULTI_CLASS, MULTI_LABEL):
            raise ShapeError(f"unknown task {self.task!r}")
        for i, item in enumerate(self.payload):
            ids = (item,) if self.task == MULTI_CLASS else item
            for c in ids:
                if not 0 <= c < self.num_classes:
                    raise ShapeError(f"label {c} of node {i} outside [0, {self.num_classes})")

    @classmethod
    def multiclass(cls, ids, num_classes: int | None = None) -> "LabelData":
        ids = [int(c) for c in ids]
        if num_classes is None:
            num_classes = max(ids) + 1 if ids else 1
        return cls(MULTI_CLASS, num_classes, tuple(ids))

    @classmethod
    def multilabel(cls, sets, num_classes: int) -> "LabelData":
        return cls(MULTI_LABEL, num_classes, tuple(tuple(sorted(set(int(c) for c in s))) for s in sets))

    def __len__(self) -> int:
        return len(self.payload)

    @property
    def is_multilabel(self) -> bool:
        return self.task == MULTI_LABEL

    def class_ids(self, nodes=None) -> np.ndarray:
        if self.is_multilabel:
            raise ShapeError("class_ids is only defined for multi-class labels")
        ids = np.asarray(self.payload, dtype=np.int64)
        return ids if nodes is None else ids[_as_index(nodes)]

    def indicator(self, nodes=None) -> np.ndarray:
        """0/1 matrix of shape (len(nodes), num_classes)."""
        idx = np.arange(len(self.payload)) if nodes is None else _as_index(nodes)
        out = np.zeros((len(idx), self.num_classes))
        for r, i in enumerate(idx):
            item = self.payload[i]
            out[r, list(item) if self.is_multilabel else item] = 1.0
        return out


def edge_homophily(g: Graph, labels: LabelData) -> float:
    """Fraction of edges joining same-labelled nodes.

    Multi-label graphs use the mean Jaccard similarity of endpoint label sets;
    two empty sets count as identical.
    """
    if g.num_edges == 0:
        raise GraphInputError("edge homophily is undefined for a graph without edges")
    if len(labels) != g.num_nodes:
        raise ShapeError(f"{len(labels)} labels for {g.num_nodes} nodes")
    e = g.edges()
    if not labels.is_multilabel:
        y = labels.class_ids()
        return float(np.mean(y[e[:, 0]] == y[e[:, 1]]))
    total = 0.0
    for u, v in e:
        a, b = set(labels.payload[u]), set(labels.payload[v])
        union = a | b
        total += 1.0 if not union else len(a & b) / len(union)
    return total / len(e)
