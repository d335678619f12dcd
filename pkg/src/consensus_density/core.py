"""Partitionings, ensembles and their one-hot incidence encoding."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp


class ValidationError(ValueError):
    """Raised when inputs violate a structural invariant."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Partitioning:
    """Hard assignment of ``n`` items to ``k`` non-empty, disjoint clusters."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64).ravel()
        if labels.size == 0:
            raise ValidationError("a partitioning needs at least one item")
        k = int(self.k)
        if labels.min() < 0 or labels.max() >= k:
            raise ValidationError(f"labels must lie in [0, {k})")
        if np.bincount(labels, minlength=k).min() == 0:
            raise ValidationError("every cluster index in [0, k) must be used")
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "k", k)

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @cached_property
    def sizes(self) -> np.ndarray:
        return _readonly(np.bincount(self.labels, minlength=self.k))

    def clusters(self) -> list[np.ndarray]:
        """Sorted member lists, one per cluster index."""
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(self.sizes)[:-1]
        return np.split(order, bounds)

    def __eq__(self, other):
        if not isinstance(other, Partitioning):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash((self.k, self.labels.tobytes()))

    def __len__(self):
        return self.n


def partition_from_labels(labels: Iterable[int]) -> Partitioning:
    """Compact arbitrary integer labels to ``0..k-1`` in first-occurrence order.

    >>> partition_from_labels([2, 0, 2]).labels.tolist()
    [0, 1, 0]
    """
    raw = np.asarray(list(labels) if not isinstance(labels, np.ndarray) else labels)
    raw = raw.ravel()
    if raw.size == 0:
        raise ValidationError("empty label vector")
    _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
    # rank unique values by where they first appear
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return Partitioning(rank[inverse.ravel()], first.size)


def partition_from_clusters(clusters: Sequence[Iterable[int]], n: Optional[int] = None) -> Partitioning:
    """Build a partitioning from explicit member sets (handy in tests)."""
    members = [list(c) for c in clusters]
    if n is None:
        n = sum(len(c) for c in members)
    labels = np.full(n, -1, dtype=np.int64)
    for idx, c in enumerate(members):
        if np.any(labels[c] >= 0):
            raise ValidationError("clusters overlap")
        labels[c] = idx
    if np.any(labels < 0):
        raise ValidationError("clusters do not cover all items")
    return partition_from_labels(labels)


@dataclass(frozen=True)
class ClusterEnsemble:
    partitionings: tuple[Partitioning, ...]

    def __post_init__(self):
        parts = tuple(self.partitionings)
        if len(parts) < 1:
            raise ValidationError("an ensemble needs p >= 1 partitionings")
        sizes = {pi.n for pi in parts}
        if len(sizes) != 1:
            raise ValidationError(f"inconsistent item counts across partitionings: {sorted(sizes)}")
        object.__setattr__(self, "partitionings", parts)

    @property
    def p(self) -> int:
        return len(self.partitionings)

    @property
    def n(self) -> int:
        return self.partitionings[0].n

    @property
    def d(self) -> int:
        return sum(pi.k for pi in self.partitionings)

    @property
    def offsets(self) -> np.ndarray:
        """First column of each partitioning's block in the incidence matrix."""
        ks = [pi.k for pi in self.partitionings]
        return np.concatenate([[0], np.cumsum(ks)[:-1]]).astype(np.int64)

    def __len__(self):
        return self.p

    def __iter__(self):
        return iter(self.partitionings)

    def __getitem__(self, i):
        return self.partitionings[i]

    @classmethod
    def from_labels(cls, label_vectors: Iterable[Iterable[int]]) -> "ClusterEnsemble":
        return cls(tuple(partition_from_labels(lv) for lv in label_vectors))


@dataclass(frozen=True, eq=False)
class IncidenceMatrix:
    """Binary item-by-cluster matrix stored sparsely.

    ``row_cols[i, a]`` is the column holding item ``i``'s cluster in
    partitioning ``a``; every row has exactly ``p`` ones.  Column member lists
    are available through :meth:`members`.
    """

    row_cols: np.ndarray
    column_owner: np.ndarray
    d: int

    @property
    def n(self) -> int:
        return self.row_cols.shape[0]

    @property
    def p(self) -> int:
        return self.row_cols.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.d)

    @cached_property
    def column_sums(self) -> np.ndarray:
        return _readonly(np.bincount(self.row_cols.ravel(), minlength=self.d))

    @cached_property
    def _column_index(self) -> tuple[np.ndarray, np.ndarray]:
        flat = self.row_cols.ravel()
        order = np.argsort(flat, kind="stable")
        items = order // self.p
        starts = np.concatenate([[0], np.cumsum(self.column_sums)])
        return items, starts

    def members(self, column: int) -> np.ndarray:
        """Sorted item indices with a one in ``column``."""
        items, starts = self._column_index
        return items[starts[column]:starts[column + 1]]

    def to_sparse(self) -> sp.csr_matrix:
        n, p = self.row_cols.shape
        indptr = np.arange(0, n * p + 1, p)
        data = np.ones(n * p, dtype=np.float64)
        return sp.csr_matrix((data, self.row_cols.ravel().copy(), indptr), shape=(n, self.d))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.d), dtype=np.float64)
        np.put_along_axis(out, self.row_cols, 1.0, axis=1)
        return out

    def block(self, a: int) -> np.ndarray:
        """Labels of partitioning ``a`` recovered from its column block."""
        start = np.searchsorted(self.column_owner, a)
        return self.row_cols[:, a] - start


def build_incidence(ensemble: ClusterEnsemble) -> IncidenceMatrix:
    """One-hot encode every partitioning and concatenate the blocks.

    Columns are ordered by partitioning index, then cluster index.
    """
    if not isinstance(ensemble, ClusterEnsemble):
        ensemble = ClusterEnsemble(tuple(ensemble))
    offsets = ensemble.offsets
    row_cols = np.stack([pi.labels + off for pi, off in zip(ensemble, offsets)], axis=1)
    owner = np.repeat(np.arange(ensemble.p), [pi.k for pi in ensemble])
    return IncidenceMatrix(_readonly(row_cols.astype(np.int64)), _readonly(owner), ensemble.d)


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    name: str
    ground_truth: Optional[Partitioning] = None
    k0: int = 2
    columns: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise ValidationError("features must be a 2-d matrix")
        if X.shape[0] < 2 or X.shape[1] < 1:
            raise ValidationError(f"dataset {self.name!r} needs n >= 2 and f >= 1, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValidationError(f"dataset {self.name!r} has missing or non-finite values")
        if self.ground_truth is not None and self.ground_truth.n != X.shape[0]:
            raise ValidationError("ground truth length does not match item count")
        object.__setattr__(self, "features", _readonly(X))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def f(self) -> int:
        return self.features.shape[1]


# --- text serialization -----------------------------------------------------

def write_labels(path, pi: Partitioning | Sequence[int]) -> None:
    labels = pi.labels if isinstance(pi, Partitioning) else np.asarray(pi)
    Path(path).write_text("".join(f"{int(x)}\n" for x in labels))


def read_labels(path) -> Partitioning:
    tokens = Path(path).read_text().split()
    try:
        return partition_from_labels([int(t) for t in tokens])
    except ValueError as exc:
        raise ValidationError(f"{path}: labels must be integers ({exc})") from None


MANIFEST = "manifest.json"


def write_ensemble(directory, ensemble: ClusterEnsemble) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, pi in enumerate(ensemble):
        name = f"partition_{i:03d}.txt"
        write_labels(directory / name, pi)
        files.append(name)
    manifest = {"n": ensemble.n, "partitionings": files}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return directory


def read_ensemble(directory) -> ClusterEnsemble:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    parts = tuple(read_labels(directory / name) for name in manifest["partitionings"])
    ensemble = ClusterEnsemble(parts)
    if ensemble.n != int(manifest["n"]):
        raise ValidationError(f"manifest says n={manifest['n']} but files hold {ensemble.n} items")
    return ensemble
