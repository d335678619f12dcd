"""Cluster weights and densities over the co-association structure.

Two routes are provided.  The *oracle* route materializes the n x n
co-association matrix and sums blocks of it; it is quadratic and guarded by a
size cap.  The *fast* route never builds the matrix: for a cluster C it counts,
for every ensemble column f, how many members of C carry a one there
(``alpha[f]``), and uses

    W(C) = sum_f alpha[f]**2 / p - |C|

which costs O(p |C|).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ClusterEnsemble, IncidenceMatrix, Partitioning, ValidationError, build_incidence

DEFAULT_ORACLE_CAP = 5000


class OracleCapError(ValidationError):
    """The quadratic co-association route was asked to handle too many items."""


def _check_cap(n: int, cap: Optional[int]) -> None:
    cap = DEFAULT_ORACLE_CAP if cap is None else cap
    if n > cap:
        raise OracleCapError(
            f"oracle path only: n={n} exceeds the co-association cap of {cap} items"
        )


@dataclass(frozen=True, eq=False)
class CoAssocMatrix:
    values: np.ndarray
    p: int

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def _values(A) -> np.ndarray:
    return A.values if isinstance(A, CoAssocMatrix) else np.asarray(A, dtype=np.float64)


def _as_incidence(H) -> IncidenceMatrix:
    if isinstance(H, IncidenceMatrix):
        return H
    if isinstance(H, ClusterEnsemble):
        return build_incidence(H)
    raise TypeError(f"expected an IncidenceMatrix, got {type(H).__name__}")


def _members(C, n: int) -> np.ndarray:
    idx = np.unique(np.asarray(list(C) if not isinstance(C, np.ndarray) else C, dtype=np.int64))
    if idx.size == 0:
        raise ValidationError("cluster must be non-empty")
    if idx[0] < 0 or idx[-1] >= n:
        raise ValidationError(f"cluster members must lie in [0, {n})")
    return idx


def coassociation(H: IncidenceMatrix, p: Optional[int] = None, cap: Optional[int] = None) -> CoAssocMatrix:
    """Co-clustering frequency matrix ``A = H H^T / p`` (quadratic, capped)."""
    H = _as_incidence(H)
    p = H.p if p is None else p
    _check_cap(H.n, cap)
    counts = np.zeros((H.n, H.n), dtype=np.int32)
    for a in range(H.p):
        col = H.row_cols[:, a]
        counts += col[:, None] == col[None, :]
    values = counts / float(p)
    values.setflags(write=False)
    return CoAssocMatrix(values, p)


def cluster_weight_oracle(A, C) -> float:
    """Sum of co-association over ordered pairs of distinct members of ``C``."""
    values = _values(A)
    idx = _members(C, values.shape[0])
    if idx.size == 1:
        return 0.0
    block = values[np.ix_(idx, idx)]
    return float(np.sum(block) - np.sum(np.diagonal(block)))


def inter_weight_oracle(A, C0, C1) -> float:
    values = _values(A)
    i0 = _members(C0, values.shape[0])
    i1 = _members(C1, values.shape[0])
    if np.intersect1d(i0, i1).size:
        raise ValidationError("inter-cluster blocks need disjoint clusters")
    return float(np.sum(values[np.ix_(i0, i1)]))


def inter_density_oracle(A, C0, C1) -> float:
    """Mean co-association between two disjoint clusters."""
    values = _values(A)
    i0 = _members(C0, values.shape[0])
    i1 = _members(C1, values.shape[0])
    return inter_weight_oracle(values, i0, i1) / (i0.size * i1.size)


@dataclass(frozen=True)
class AlphaCounts:
    alpha: np.ndarray
    size: int

    @property
    def gamma(self) -> np.ndarray:
        """Centroid of the cluster in incidence space."""
        return self.alpha / self.size

    @property
    def sum_squares(self) -> int:
        return int(np.dot(self.alpha, self.alpha))


def alpha_counts(H: IncidenceMatrix, C) -> AlphaCounts:
    H = _as_incidence(H)
    idx = _members(C, H.n)
    alpha = np.bincount(H.row_cols[idx].ravel(), minlength=H.d)
    return AlphaCounts(alpha, int(idx.size))


def _weight_from_alpha(sum_sq: int, size: int, p: int) -> float:
    # exact integer numerator, single division
    return (sum_sq - p * size) / p


def cluster_weight_fast(H: IncidenceMatrix, C, p: Optional[int] = None) -> float:
    H = _as_incidence(H)
    p = H.p if p is None else p
    counts = alpha_counts(H, C)
    return _weight_from_alpha(counts.sum_squares, counts.size, p)


def cluster_density(weight: float, size: int) -> float:
    if size < 1:
        raise ValidationError("cluster size must be >= 1")
    if size == 1:
        return 0.0
    return weight / (size * (size - 1))


@dataclass(frozen=True)
class ClusterDensity:
    cluster: int
    size: int
    weight: float
    density: float


@dataclass(frozen=True)
class DensityReport:
    per_cluster: tuple[ClusterDensity, ...]
    score: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cluster", "size", "weight", "density"])
            for c in self.per_cluster:
                w.writerow([c.cluster, c.size, repr(c.weight), repr(c.density)])
            w.writerow(["score", repr(self.score)])


def cluster_sum_squares(H: IncidenceMatrix, pi: Partitioning) -> np.ndarray:
    """``sum_f alpha[f]**2`` for every cluster of ``pi`` (int64, exact)."""
    H = _as_incidence(H)
    if pi.n != H.n:
        raise ValidationError(f"partitioning covers {pi.n} items, incidence matrix has {H.n}")
    keys = (pi.labels[:, None] * H.d + H.row_cols).ravel()
    alpha = np.bincount(keys, minlength=pi.k * H.d).reshape(pi.k, H.d)
    return np.einsum("ij,ij->i", alpha, alpha)


def partition_score(H: IncidenceMatrix, pi: Partitioning, p: Optional[int] = None) -> DensityReport:
    """Size-weighted mean cluster density S(pi), via alpha counts."""
    H = _as_incidence(H)
    p = H.p if p is None else p
    sum_sq = cluster_sum_squares(H, pi)
    sizes = pi.sizes
    rows = []
    total = 0.0
    for c in range(pi.k):
        size = int(sizes[c])
        weight = _weight_from_alpha(int(sum_sq[c]), size, p)
        dens = cluster_density(weight, size)
        rows.append(ClusterDensity(c, size, weight, dens))
        total += size * dens
    return DensityReport(tuple(rows), total / pi.n)


def density_score(H: IncidenceMatrix, pi: Partitioning) -> float:
    """Just S(pi); vectorized shortcut of :func:`partition_score`."""
    H = _as_incidence(H)
    # |C| D(C) = (sum_sq - p|C|) / (p (|C| - 1)); singletons have sum_sq = p
    sizes = pi.sizes
    num = cluster_sum_squares(H, pi) - H.p * sizes
    return float(np.sum(num / (H.p * np.maximum(sizes - 1, 1))) / pi.n)


def split_delta(H: IncidenceMatrix, parent, partA, partB,
                p: Optional[int] = None, n: Optional[int] = None) -> float:
    """Change of S when ``parent`` is replaced by ``partA`` and ``partB``.

    Only the three clusters involved are touched.
    """
    H = _as_incidence(H)
    p = H.p if p is None else p
    n = H.n if n is None else n
    par = _members(parent, H.n)
    a = _members(partA, H.n)
    b = _members(partB, H.n)
    if np.intersect1d(a, b).size or a.size + b.size != par.size or not np.array_equal(np.union1d(a, b), par):
        raise ValidationError("split parts must be disjoint, non-empty and cover the parent")

    def dens(idx):
        return cluster_density(cluster_weight_fast(H, idx, p), idx.size)

    beta = a.size / par.size
    return (par.size / n) * (beta * dens(a) + (1 - beta) * dens(b) - dens(par))


def jaccard_matrix(H: IncidenceMatrix) -> np.ndarray:
    """Jaccard similarity between every pair of ensemble clusters (d x d)."""
    H = _as_incidence(H)
    S = H.to_sparse()
    inter = (S.T @ S).toarray()
    sizes = H.column_sums.astype(np.float64)
    union = sizes[:, None] + sizes[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        J = np.where(union > 0, inter / union, 0.0)
    return J


def cluster_link_similarity(H: IncidenceMatrix, decay: float = 0.9, method: str = "link") -> list[np.ndarray]:
    """Similarity between clusters of the same partitioning.

    Two clusters of one partitioning are disjoint, so their own Jaccard index
    is zero.  Their similarity is instead read off the Jaccard-weighted graph
    linking them to clusters of the *other* partitionings: the strength of the
    connected triples x - z - y, ``sum_z min(J[x, z], J[y, z])``, normalized by
    the largest such value over the ensemble and scaled by ``decay``.

    With ``method="jaccard"`` the plain Jaccard index of the two clusters is
    used instead, which is always zero and turns enhancement into a no-op.

    Returns one ``k_a x k_a`` matrix per partitioning with a zero diagonal.
    """
    H = _as_incidence(H)
    J = jaccard_matrix(H)
    owner = H.column_owner
    if method == "jaccard":
        blocks = []
        for a in range(H.p):
            cols = np.flatnonzero(owner == a)
            b = J[np.ix_(cols, cols)].copy()
            np.fill_diagonal(b, 0.0)
            blocks.append(b)
        return blocks
    if method != "link":
        raise ValidationError(f"unknown cluster similarity {method!r}")
    J[owner[:, None] == owner[None, :]] = 0.0
    blocks = []
    for a in range(H.p):
        cols = np.flatnonzero(owner == a)
        Jb = J[cols]
        wct = np.minimum(Jb[:, None, :], Jb[None, :, :]).sum(axis=-1)
        np.fill_diagonal(wct, 0.0)
        blocks.append(wct)
    top = max((float(b.max()) for b in blocks), default=0.0)
    if top <= 0:
        return [np.zeros_like(b) for b in blocks]
    return [decay * b / top for b in blocks]


def enhance_coassociation(A, ensemble: ClusterEnsemble, decay: float = 0.9,
                          cap: Optional[int] = None, method: str = "link") -> CoAssocMatrix:
    """Replace zero per-partitioning contributions by a cluster similarity.

    For each partitioning, a pair of items in different clusters contributes
    the link similarity of their two clusters instead of 0; pairs sharing a
    cluster still contribute 1.  Contributions are averaged over partitionings.
    """
    values = _values(A)
    if not isinstance(ensemble, ClusterEnsemble):
        ensemble = ClusterEnsemble(tuple(ensemble))
    if values.shape != (ensemble.n, ensemble.n):
        raise ValidationError("co-association matrix and ensemble disagree on n")
    _check_cap(ensemble.n, cap)
    H = build_incidence(ensemble)
    sims = cluster_link_similarity(H, decay=decay, method=method)
    extra = np.zeros_like(values)
    for pi, S in zip(ensemble, sims):
        extra += S[pi.labels[:, None], pi.labels[None, :]]
    out = values + extra / ensemble.p
    out.setflags(write=False)
    return CoAssocMatrix(out, ensemble.p)


def export_coassociation(A, path) -> None:
    np.savetxt(path, _values(A), delimiter=",", fmt="%.17g")


def weight_decomposition(A, pi: Partitioning) -> tuple[float, float, float]:
    """(intra weight, inter weight, total off-diagonal weight) for ``pi``.

    The first two add up to the third.
    """
    values = _values(A)
    clusters = pi.clusters()
    intra = float(np.sum([cluster_weight_oracle(values, c) for c in clusters]))
    inter = 0.0
    for i, ci in enumerate(clusters):
        for j, cj in enumerate(clusters):
            if i != j:
                inter += inter_weight_oracle(values, ci, cj)
    total = float(np.sum(values) - np.trace(values))
    return intra, inter, total
