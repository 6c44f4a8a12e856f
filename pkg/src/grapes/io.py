"""Plain-text dataset bundles and the line-delimited metrics sink.

A bundle is a directory with five files:

``manifest.txt``  ``key=value`` lines: n_nodes, n_features, n_classes, task
``edges.tsv``     one ``u<TAB>v`` undirected edge per line, 0-based ids
``features.txt``  one row of space-separated reals per node, in node order
``labels.txt``    one line per node: a class id, or comma-separated ids (multi-label, may be empty)
``splits.tsv``    ``node_id<TAB>train|val|test`` per labelled node
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .graph import MULTI_CLASS, MULTI_LABEL, Graph, LabelData, build_csr

MANIFEST = "manifest.txt"
EDGES = "edges.tsv"
FEATURES = "features.txt"
LABELS = "labels.txt"
SPLITS = "splits.tsv"
SPLIT_TAGS = ("train", "val", "test")
MANIFEST_KEYS = ("n_nodes", "n_features", "n_classes", "task")


@dataclass(eq=False)
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: LabelData
    splits: dict[str, np.ndarray]

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes


def _lines(path: Path) -> list[str]:
    text = path.read_text()
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return lines


def _require(directory: Path, name: str) -> Path:
    path = directory / name
    if not path.is_file():
        raise DatasetError(name, None, "file is missing")
    return path


def _read_manifest(directory: Path) -> dict:
    raw = {}
    for lineno, line in enumerate(_lines(_require(directory, MANIFEST)), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise DatasetError(MANIFEST, lineno, f"expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in MANIFEST_KEYS:
            raise DatasetError(MANIFEST, lineno, f"unknown key {key!r}")
        raw[key] = value
    missing = [k for k in MANIFEST_KEYS if k not in raw]
    if missing:
        raise DatasetError(MANIFEST, None, f"missing keys {missing}")
    out = {"task": raw["task"]}
    if out["task"] not in (MULTI_CLASS, MULTI_LABEL):
        raise DatasetError(MANIFEST, None, f"unknown task {out['task']!r}")
    for key in ("n_nodes", "n_features", "n_classes"):
        try:
            out[key] = int(raw[key])
        except ValueError:
            raise DatasetError(MANIFEST, None, f"{key} is not an integer: {raw[key]!r}") from None
        if out[key] < 0 or (key != "n_nodes" and out[key] == 0):
            raise DatasetError(MANIFEST, None, f"{key} must be positive")
    return out


def _parse_int(text: str, file: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise DatasetError(file, lineno, f"not an integer: {text!r}") from None


def load_dataset(path) -> Dataset:
    directory = Path(path)
    if not directory.is_dir():
        raise DatasetError(str(directory), None, "dataset directory does not exist")
    man = _read_manifest(directory)
    n, f, c = man["n_nodes"], man["n_features"], man["n_classes"]

    edges = []
    for lineno, line in enumerate(_lines(_require(directory, EDGES)), start=1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetError(EDGES, lineno, "expected u<TAB>v")
        u, v = (_parse_int(p, EDGES, lineno) for p in parts)
        if not (0 <= u < n and 0 <= v < n):
            raise DatasetError(EDGES, lineno, f"node id out of range [0, {n})")
        edges.append((u, v))
    graph = build_csr(np.array(edges, dtype=np.int64).reshape(-1, 2), n)

    feat_lines = _lines(_require(directory, FEATURES))
    X = np.empty((n, f))
    for i in range(n):
        if i >= len(feat_lines):
            raise DatasetError(FEATURES, i + 1, f"expected {n} feature rows, found {len(feat_lines)}")
        parts = feat_lines[i].split(" ")
        if len(parts) != f:
            raise DatasetError(FEATURES, i + 1, f"expected {f} values, found {len(parts)}")
        try:
            X[i] = [float(p) for p in parts]
        except ValueError:
            raise DatasetError(FEATURES, i + 1, "non-numeric feature value") from None
    if len(feat_lines) > n:
        raise DatasetError(FEATURES, n + 1, f"more feature rows than n_nodes={n}")

    label_lines = _lines(_require(directory, LABELS))
    if len(label_lines) != n:
        line = min(len(label_lines), n) + 1
        raise DatasetError(LABELS, line, f"expected {n} label lines, found {len(label_lines)}")
    payload = []
    for lineno, line in enumerate(label_lines, start=1):
        if man["task"] == MULTI_CLASS:
            ids = [_parse_int(line, LABELS, lineno)]
            payload.append(ids[0])
        else:
            ids = [_parse_int(p, LABELS, lineno) for p in line.split(",")] if line else []
            payload.append(tuple(sorted(set(ids))))
        if any(not 0 <= k < c for k in ids):
            raise DatasetError(LABELS, lineno, f"label outside [0, {c})")
    labels = LabelData(man["task"], c, tuple(payload))

    splits: dict[str, list[int]] = {t: [] for t in SPLIT_TAGS}
    seen = set()
    for lineno, line in enumerate(_lines(_require(directory, SPLITS)), start=1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetError(SPLITS, lineno, "expected node_id<TAB>tag")
        node = _parse_int(parts[0], SPLITS, lineno)
        if not 0 <= node < n:
            raise DatasetError(SPLITS, lineno, f"node id out of range [0, {n})")
        if parts[1] not in SPLIT_TAGS:
            raise DatasetError(SPLITS, lineno, f"unknown split tag {parts[1]!r}")
        if node in seen:
            raise DatasetError(SPLITS, lineno, f"node {node} listed twice")
        seen.add(node)
        splits[parts[1]].append(node)
    return Dataset(graph, X, labels, {k: np.array(sorted(v), dtype=np.int64) for k, v in splits.items()})


def save_dataset(ds: Dataset, path) -> Path:
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    labels = ds.labels
    manifest = {"n_nodes": ds.num_nodes, "n_features": ds.features.shape[1],
                "n_classes": labels.num_classes, "task": labels.task}
    (directory / MANIFEST).write_text("".join(f"{k}={manifest[k]}\n" for k in MANIFEST_KEYS))
    (directory / EDGES).write_text("".join(f"{u}\t{v}\n" for u, v in ds.graph.edges()))
    (directory / FEATURES).write_text(
        "".join(" ".join(repr(float(x)) for x in row) + "\n" for row in ds.features))
    if labels.is_multilabel:
        body = "".join(",".join(str(c) for c in item) + "\n" for item in labels.payload)
    else:
        body = "".join(f"{c}\n" for c in labels.payload)
    (directory / LABELS).write_text(body)
    rows = sorted((int(i), tag) for tag in SPLIT_TAGS for i in ds.splits.get(tag, ()))
    (directory / SPLITS).write_text("".join(f"{i}\t{tag}\n" for i, tag in rows))
    return directory


# -- metrics sink -----------------------------------------------------------

def _clean(value):
    """JSON-safe copy: numpy scalars/arrays become Python values, NaN becomes None."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class MetricsWriter:
    """Append-only JSON-lines file: one header record, then one record per epoch."""

    def __init__(self, path, header: dict):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w")
        self._last_epoch = None
        self._write({"type": "header", **_clean(header)})

    def _write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def write(self, report) -> None:
        record = report.to_record() if hasattr(report, "to_record") else dict(report)
        epoch = record.get("epoch")
        if self._last_epoch is not None and epoch is not None and epoch <= self._last_epoch:
            raise ValueError(f"epoch {epoch} written after epoch {self._last_epoch}")
        self._last_epoch = epoch
        self._write({"type": "epoch", **_clean(record)})

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_metrics(sink: MetricsWriter, report) -> None:
    sink.write(report)


def read_metrics(path) -> tuple[dict, list[dict]]:
    header, records = {}, []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("type", "epoch")
            if kind == "header":
                header = rec
            else:
                records.append(rec)
    return header, records
