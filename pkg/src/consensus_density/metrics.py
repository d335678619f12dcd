"""NMI between partitionings, ensemble NMI, and zero-effort baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ClusterEnsemble, Partitioning, ValidationError, build_incidence, partition_from_labels
from .density import density_score


def _as_partitioning(x) -> Partitioning:
    return x if isinstance(x, Partitioning) else partition_from_labels(x)


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    counts: np.ndarray
    n: int

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def contingency(a, b) -> ContingencyTable:
    a, b = _as_partitioning(a), _as_partitioning(b)
    if a.n != b.n:
        raise ValidationError(f"partitionings cover {a.n} and {b.n} items")
    counts = np.bincount(a.labels * b.k + b.labels, minlength=a.k * b.k).reshape(a.k, b.k)
    return ContingencyTable(counts, a.n)


def _entropy_bits(counts: np.ndarray, n: int) -> float:
    c = counts[counts > 0].astype(np.float64)
    return -math.fsum(c / n * np.log2(c / n))


def mutual_information(table: ContingencyTable) -> float:
    """Mutual information in bits; empty cells contribute nothing."""
    n = table.n
    rows, cols = np.nonzero(table.counts)
    nij = table.counts[rows, cols].astype(np.float64)
    ra = table.row_sums[rows].astype(np.float64)
    cb = table.col_sums[cols].astype(np.float64)
    # fsum keeps the result independent of cell order, so nmi is exactly symmetric
    return math.fsum(nij / n * np.log2(nij * n / (ra * cb)))


def nmi(a, b) -> float:
    """``2 I(a, b) / (H(a) + H(b))`` with base-2 logarithms.

    Two single-cluster partitionings score 1; if only one of them is a single
    cluster the score is 0.
    """
    table = contingency(a, b)
    ha = _entropy_bits(table.row_sums, table.n)
    hb = _entropy_bits(table.col_sums, table.n)
    if ha == 0 and hb == 0:
        return 1.0
    if ha == 0 or hb == 0:
        return 0.0
    nz = table.counts > 0
    if np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1):
        return 1.0  # same partitioning up to relabeling
    value = 2 * mutual_information(table) / (ha + hb)
    if value < 0 and value > -1e-12:
        value = 0.0
    # identical partitionings can land a hair above one
    return min(value, 1.0)


def ensemble_nmi(star, ensemble: ClusterEnsemble) -> float:
    star = _as_partitioning(star)
    if star.n != ensemble.n:
        raise ValidationError(f"consensus covers {star.n} items, ensemble {ensemble.n}")
    return float(np.mean([nmi(star, pi) for pi in ensemble]))


def pairwise_nmi(ensemble: ClusterEnsemble) -> np.ndarray:
    p = ensemble.p
    M = np.eye(p)
    for i in range(p):
        for j in range(i + 1, p):
            M[i, j] = M[j, i] = nmi(ensemble[i], ensemble[j])
    return M


def baselines(ensemble: ClusterEnsemble) -> tuple[float, float]:
    """(mean, best) ensemble NMI obtainable by picking a member as consensus."""
    p = ensemble.p
    if p < 2:
        raise ValidationError("baselines need at least two partitionings")
    M = pairwise_nmi(ensemble)
    off = M.sum(axis=1) - np.diag(M)
    row_means = off / (p - 1)
    mean = float(off.sum() / (p * (p - 1)))
    return mean, float(row_means.max())


def density_baselines(ensemble: ClusterEnsemble) -> tuple[float, float]:
    """(mean, best) density S of the members, scored against the whole ensemble."""
    H = build_incidence(ensemble)
    scores = [density_score(H, pi) for pi in ensemble]
    return float(np.mean(scores)), float(np.max(scores))
