"""Node-classification datasets on disk, and train/test split generation.

File formats (all text, row ``i`` is node ``i``):

* edges -- edge list as written by :func:`dsgm.graphs.write_edge_list`
* features -- headerless CSV, one row of floats per node
* labels -- headerless CSV with one integer class per row (one-hot rows are
  also accepted)
* splits -- CSV rows ``node,split_id,role`` with role ``train``, ``val`` or
  ``test``; an optional ``node,split_id,role`` header line is skipped

Converting published formats (e.g. the usual ``.npz`` graph archives) into
these files is left to the user: write the edge list, dump the feature
matrix and label vector row by row, and emit one ``split_id`` per mask column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..graphs import Graph, GraphError, one_hot, read_edge_list, write_edge_list

ROLES = ("train", "val", "test")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    splits: tuple

    def __post_init__(self):
        n = self.graph.n
        if self.features.shape[0] != n:
            raise DatasetError(f"{self.features.shape[0]} feature rows for {n} nodes")
        if self.labels.shape[0] != n:
            raise DatasetError(f"{self.labels.shape[0]} labels for {n} nodes")
        if not (np.all((self.labels == 0) | (self.labels == 1)) and np.all(self.labels.sum(1) == 1)):
            raise DatasetError("labels must be one-hot")
        for sid, s in enumerate(self.splits):
            parts = [s.train, s.val, s.test]
            allidx = np.concatenate(parts)
            if allidx.size and (allidx.min() < 0 or allidx.max() >= n):
                raise DatasetError(f"split {sid}: node index out of range")
            if np.unique(allidx).size != allidx.size:
                raise DatasetError(f"split {sid}: train, val and test must be disjoint")

    @property
    def n_classes(self) -> int:
        return self.labels.shape[1]

    def class_index(self) -> np.ndarray:
        return self.labels.argmax(1)

    def summary(self) -> dict:
        return {
            "nodes": self.graph.n,
            "feature_dim": int(self.features.shape[1]),
            "classes": self.n_classes,
            "mean_degree": float(self.graph.degrees.mean()),
            "splits": len(self.splits),
        }


def _read_rows(path):
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if row and any(cell.strip() for cell in row):
                yield lineno, row


def read_features(path) -> np.ndarray:
    rows = []
    width = None
    for lineno, row in _read_rows(path):
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: non-numeric feature value") from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise DatasetError(f"{path}:{lineno}: expected {width} features, got {len(vals)}")
        rows.append(vals)
    if not rows:
        raise DatasetError(f"{path}: no feature rows")
    return np.array(rows, dtype=float)


def read_labels(path) -> np.ndarray:
    """Labels as a one-hot matrix."""
    ints, onehot = [], []
    for lineno, row in _read_rows(path):
        try:
            vals = [int(v) for v in row]
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: labels must be integers") from None
        if len(vals) == 1:
            if vals[0] < 0:
                raise DatasetError(f"{path}:{lineno}: negative class label")
            ints.append(vals[0])
        else:
            if any(v not in (0, 1) for v in vals) or sum(vals) != 1:
                raise DatasetError(f"{path}:{lineno}: label row is not one-hot")
            onehot.append(vals)
    if ints and onehot:
        raise DatasetError(f"{path}: mixes integer and one-hot labels")
    if onehot:
        widths = {len(r) for r in onehot}
        if len(widths) != 1:
            raise DatasetError(f"{path}: one-hot rows have different lengths")
        return np.array(onehot, dtype=float)
    if not ints:
        raise DatasetError(f"{path}: no labels")
    return one_hot(np.array(ints))


def read_splits(path, n: int) -> tuple:
    groups: dict[int, dict[str, list]] = {}
    for lineno, row in _read_rows(path):
        if lineno == 1 and [c.strip() for c in row] == ["node", "split_id", "role"]:
            continue
        if len(row) != 3:
            raise DatasetError(f"{path}:{lineno}: expected node,split_id,role")
        try:
            node, sid = int(row[0]), int(row[1])
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: node and split_id must be integers") from None
        role = row[2].strip()
        if role not in ROLES:
            raise DatasetError(f"{path}:{lineno}: unknown role {role!r}")
        if not 0 <= node < n:
            raise DatasetError(f"{path}:{lineno}: node {node} out of range for n={n}")
        if sid < 0:
            raise DatasetError(f"{path}:{lineno}: negative split id")
        groups.setdefault(sid, {r: [] for r in ROLES})[role].append(node)
    splits = []
    for sid in sorted(groups):
        g = groups[sid]
        splits.append(Split(*(np.array(sorted(g[r]), dtype=np.int64) for r in ROLES)))
    return tuple(splits)


def load_dataset(edges, features, labels, splits) -> Dataset:
    for p in (edges, features, labels, splits):
        if not Path(p).is_file():
            raise DatasetError(f"file not found: {p}")
    x = read_features(features)
    y = read_labels(labels)
    n = x.shape[0]
    if y.shape[0] != n:
        raise DatasetError(f"{features} has {n} rows but {labels} has {y.shape[0]}")
    try:
        graph = read_edge_list(edges, n=n)
    except GraphError as exc:
        raise DatasetError(str(exc)) from None
    return Dataset(graph, x, y, read_splits(splits, n))


def export_dataset(ds: Dataset, directory, prefix: str = "data") -> dict:
    """Write the four files; returns their paths keyed like :func:`load_dataset`."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {k: d / f"{prefix}.{k}" for k in ("edges", "features", "labels", "splits")}
    write_edge_list(ds.graph, paths["edges"])
    with open(paths["features"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in ds.features:
            w.writerow([repr(float(v)) for v in row])
    with open(paths["labels"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for c in ds.class_index():
            w.writerow([int(c)])
    with open(paths["splits"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "split_id", "role"])
        for sid, s in enumerate(ds.splits):
            for role, idx in zip(ROLES, (s.train, s.val, s.test)):
                for node in idx:
                    w.writerow([int(node), sid, role])
    return {k: str(v) for k, v in paths.items()}


def community_split(labels, rng) -> Split:
    """Each community split in half at random; the extra node of an odd class goes to test."""
    classes = np.asarray(labels)
    if classes.ndim == 2:
        classes = classes.argmax(1)
    train, test = [], []
    for c in np.unique(classes):
        idx = np.flatnonzero(classes == c)
        idx = idx[rng.permutation(idx.size)]
        half = idx.size // 2
        train.append(idx[:half])
        test.append(idx[half:])
    return Split(np.sort(np.concatenate(train)), np.zeros(0, dtype=np.int64), np.sort(np.concatenate(test)))


def random_split(n: int, fractions, rng) -> Split:
    """Random train/val/test split with the given fractions (rounded down, rest to test)."""
    f = np.asarray(fractions, dtype=float)
    if f.shape != (3,) or f.min() < 0 or not np.isclose(f.sum(), 1.0):
        raise DatasetError("need three nonnegative fractions summing to one")
    perm = rng.permutation(n)
    n_tr, n_va = int(f[0] * n), int(f[1] * n)
    return Split(np.sort(perm[:n_tr]), np.sort(perm[n_tr : n_tr + n_va]), np.sort(perm[n_tr + n_va :]))
