"""Lloyd k-means with pluggable divergences, bisecting k-means, base ensembles."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .core import (
    ClusterEnsemble,
    Dataset,
    IncidenceMatrix,
    Partitioning,
    ValidationError,
    build_incidence,
    partition_from_labels,
)
from .density import cluster_sum_squares, split_delta


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    max_iters: int = 100
    tol: float = 1e-6
    seed: int = 0
    restarts: int = 5

    def __post_init__(self):
        # k = 1 is tolerated so the one-cluster loss can be read off the engine
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.max_iters < 1 or self.tol < 0 or self.restarts < 1:
            raise ValidationError("need max_iters >= 1, tol >= 0, restarts >= 1")

    def replace(self, **changes) -> "KMeansConfig":
        values = {f: getattr(self, f) for f in ("k", "max_iters", "tol", "seed", "restarts")}
        values.update(changes)
        return KMeansConfig(**values)


@dataclass(frozen=True)
class Split:
    parent: int
    left: int
    right: int
    sizes: tuple[int, int]
    delta: float


@dataclass(frozen=True, eq=False)
class FitResult:
    partitioning: Partitioning
    loss: float
    iterations: int
    converged: bool
    history: tuple[float, ...] = ()
    centroids: Optional[np.ndarray] = None
    tree: tuple[Split, ...] = ()
    seed: Optional[int] = None

    @property
    def labels(self) -> np.ndarray:
        return self.partitioning.labels

    def sidecar(self) -> dict:
        return {
            "loss": float(self.loss),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "seed": self.seed,
            "k": self.partitioning.k,
        }


# --- divergences --------------------------------------------------------------

def _row_sq_norms(X) -> np.ndarray:
    if sp.issparse(X):
        return np.asarray(X.multiply(X).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", X, X)


def _weighted_means(X, labels: np.ndarray, k: int, weights: np.ndarray) -> np.ndarray:
    n = labels.size
    M = sp.csr_matrix((weights, (labels, np.arange(n))), shape=(k, n))
    totals = np.asarray(M.sum(axis=1)).ravel()
    sums = M @ X
    if sp.issparse(sums):
        sums = sums.toarray()
    return np.asarray(sums) / totals[:, None]


class Euclidean:
    """Squared Euclidean distance, unit point weights."""

    name = "euclidean"

    def prepare(self, X):
        self.X = X.tocsr() if sp.issparse(X) else np.asarray(X, dtype=np.float64)
        self.sq = _row_sq_norms(self.X)
        self.weights = np.ones(self.X.shape[0])
        return self

    def cost(self, C: np.ndarray) -> np.ndarray:
        cross = self.X @ C.T
        out = self.sq[:, None] - 2 * np.asarray(cross) + np.einsum("ij,ij->i", C, C)[None, :]
        return np.maximum(out, 0.0)

    def point_cost(self, C: np.ndarray, labels: np.ndarray) -> np.ndarray:
        CL = C[labels]
        if sp.issparse(self.X):
            cross = np.asarray(self.X.multiply(CL).sum(axis=1)).ravel()
        else:
            cross = np.einsum("ij,ij->i", self.X, CL)
        return np.maximum(self.sq - 2 * cross + np.einsum("ij,ij->i", CL, CL), 0.0)

    def update(self, labels: np.ndarray, k: int) -> np.ndarray:
        return _weighted_means(self.X, labels, k, self.weights)

    def row(self, i: int) -> np.ndarray:
        r = self.X[i]
        return r.toarray().ravel() if sp.issparse(r) else np.array(r, dtype=np.float64)


class Weighted(Euclidean):
    """Squared Euclidean distance with positive per-point weights."""

    name = "weighted"

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.size == 0 or np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValidationError("weights must be positive reals")
        self._w = w

    def prepare(self, X):
        super().prepare(X)
        if self._w.size != self.X.shape[0]:
            raise ValidationError(f"expected {self.X.shape[0]} weights, got {self._w.size}")
        self.weights = self._w
        return self


class KL:
    """Kullback-Leibler divergence KL(x || c) between block-wise distributions.

    Rows are split into blocks (one per base partitioning when clustering an
    incidence matrix) that are each normalized to sum to one, then mixed with
    ``eps`` of uniform mass so every entry is strictly positive.  Centroids are
    means of smoothed rows and are therefore positive too.
    """

    name = "kl"

    def __init__(self, eps: float = 1e-6, blocks: Optional[np.ndarray] = None):
        if not 0 < eps < 1:
            raise ValidationError("eps must lie in (0, 1)")
        self.eps = eps
        self.blocks = None if blocks is None else np.asarray(blocks)

    def prepare(self, X):
        X = X.toarray() if sp.issparse(X) else np.array(X, dtype=np.float64)
        if np.any(X < 0):
            raise ValidationError("KL divergence needs non-negative rows")
        d = X.shape[1]
        blocks = np.zeros(d, dtype=np.int64) if self.blocks is None else self.blocks
        if blocks.size != d:
            raise ValidationError("block owner vector must have one entry per column")
        nb = int(blocks.max()) + 1
        block_width = np.bincount(blocks, minlength=nb).astype(np.float64)
        ind = sp.csr_matrix((np.ones(d), (np.arange(d), blocks)), shape=(d, nb))
        mass = np.asarray(X @ ind)
        uniform = 1.0 / block_width[blocks]
        with np.errstate(invalid="ignore", divide="ignore"):
            normed = np.where(mass[:, blocks] > 0, X / mass[:, blocks], uniform[None, :])
        self.X = (1 - self.eps) * normed + self.eps * uniform[None, :]
        self.entropy = np.einsum("ij,ij->i", self.X, np.log(self.X))
        self.weights = np.ones(X.shape[0])
        return self

    def cost(self, C: np.ndarray) -> np.ndarray:
        out = self.entropy[:, None] - self.X @ np.log(C).T
        return np.maximum(out, 0.0)

    def point_cost(self, C: np.ndarray, labels: np.ndarray) -> np.ndarray:
        out = self.entropy - np.einsum("ij,ij->i", self.X, np.log(C[labels]))
        return np.maximum(out, 0.0)

    def update(self, labels: np.ndarray, k: int) -> np.ndarray:
        return _weighted_means(self.X, labels, k, self.weights)

    def row(self, i: int) -> np.ndarray:
        return self.X[i].copy()


Divergence = Union[Euclidean, Weighted, KL]


def make_divergence(spec) -> Divergence:
    if spec is None or spec == "euclidean":
        return Euclidean()
    if isinstance(spec, (Euclidean, KL)):
        return spec
    if spec == "kl":
        return KL()
    raise ValidationError(f"unknown divergence {spec!r}")


# --- Lloyd iterations ---------------------------------------------------------

def _seed_centroids(div: Divergence, k: int, rng: np.random.Generator) -> np.ndarray:
    """Cost-weighted probabilistic seeding (greedy k-means++).

    Each new center is the best of ``2 + floor(ln k)`` cost-weighted draws,
    judged by the total cost it leaves behind.
    """
    n = div.X.shape[0]
    w = div.weights
    trials = 2 + int(math.log(k)) if k > 1 else 1
    first = rng.choice(n, p=w / w.sum())
    centers = [div.row(first)]
    closest = div.cost(np.array(centers))[:, 0]
    for _ in range(1, k):
        mass = w * closest
        total = mass.sum()
        if total > 0:
            cand = rng.choice(n, size=trials, p=mass / total)
        else:
            cand = rng.integers(n, size=trials)
        rows = np.array([div.row(int(i)) for i in cand])
        pooled = np.minimum(closest[:, None], div.cost(rows))
        best = int(np.argmin(w @ pooled))  # first candidate wins ties
        centers.append(rows[best])
        closest = pooled[:, best]
    return np.array(centers)


def _repair_empty(labels: np.ndarray, k: int, point_cost: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Give every empty cluster the point that sits farthest from its centroid."""
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k)
    contrib = weights * point_cost
    for j in np.flatnonzero(counts == 0):
        movable = counts[labels] > 1
        candidates = np.where(movable, contrib, -np.inf)
        i = int(np.argmax(candidates))
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] = 1
        contrib[i] = -np.inf
    return labels


def _lloyd(div: Divergence, cfg: KMeansConfig, rng: np.random.Generator):
    k = cfg.k
    C = _seed_centroids(div, k, rng)
    history = []
    prev = math.inf
    converged = False
    labels = None
    it = 0
    for it in range(1, cfg.max_iters + 1):
        cost = div.cost(C)
        new_labels = np.argmin(cost, axis=1)  # lowest index wins ties
        new_labels = _repair_empty(new_labels, k, cost[np.arange(cost.shape[0]), new_labels], div.weights)
        C = div.update(new_labels, k)
        loss = float(np.dot(div.weights, div.point_cost(C, new_labels)))
        history.append(loss)
        stable = labels is not None and np.array_equal(labels, new_labels)
        labels = new_labels
        if stable or loss == 0.0 or (math.isfinite(prev) and prev - loss <= cfg.tol * abs(prev)):
            converged = True
            break
        prev = loss
    return labels, C, history, it, converged


def kmeans_fit(X, cfg: KMeansConfig, divergence=None) -> FitResult:
    """Best-of-restarts Lloyd k-means.

    Parameters
    ----------
    X : ndarray, sparse matrix or IncidenceMatrix
        Rows to cluster.  An incidence matrix is clustered as its sparse 0/1
        matrix; with the KL divergence its partitioning blocks are honored.
    cfg : KMeansConfig
    divergence : Euclidean, Weighted, KL or their names, optional
        Defaults to squared Euclidean distance.

    Restart ``r`` draws from ``SeedSequence([cfg.seed, r])``; the winner is the
    lowest ``(loss, r)``, so the result does not depend on evaluation order.
    """
    div = copy.copy(make_divergence(divergence))
    if isinstance(X, IncidenceMatrix):
        if isinstance(div, KL) and div.blocks is None:
            div = KL(div.eps, X.column_owner)
        X = X.to_sparse()
    n = X.shape[0]
    if n < cfg.k:
        raise ValidationError(f"cannot form k={cfg.k} clusters from n={n} items")
    div.prepare(X)
    best = None
    for r in range(cfg.restarts):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, r]))
        labels, C, history, iters, conv = _lloyd(div, cfg, rng)
        key = (history[-1], r)
        if best is None or key < best[0]:
            best = (key, labels, C, history, iters, conv)
    (loss, _), labels, C, history, iters, conv = best
    pi = partition_from_labels(labels)
    # reorder centroids to the compacted label order
    order = np.empty(cfg.k, dtype=np.int64)
    order[pi.labels] = labels
    return FitResult(pi, loss, iters, conv, tuple(history), C[order], seed=cfg.seed)


def kmeans_loss(H: IncidenceMatrix, pi: Partitioning, p: Optional[int] = None) -> float:
    """Squared-distance loss of ``pi`` on ``H`` from alpha counts alone.

    ``p n - sum_C sum_f alpha_f(C)**2 / |C|``; linear time.
    """
    if not isinstance(H, IncidenceMatrix):
        H = build_incidence(H)
    p = H.p if p is None else p
    sum_sq = cluster_sum_squares(H, pi)
    return float(p * pi.n - np.sum(sum_sq / pi.sizes))


# --- bisecting ----------------------------------------------------------------

def _two_way(Hs: sp.csr_matrix, members: np.ndarray, cfg: KMeansConfig, uid: int):
    sub = Hs[members]
    two = cfg.replace(k=2, restarts=3, seed=int(np.random.SeedSequence([cfg.seed, uid]).generate_state(1)[0]))
    fit = kmeans_fit(sub, two)
    lab = fit.labels
    return members[lab == 0], members[lab == 1]


def bisecting_fit(H: IncidenceMatrix, k_target: int, cfg: KMeansConfig) -> FitResult:
    """Divisive k-means that stops as soon as ``k_target`` clusters exist.

    At each step every current leaf has a cached 2-means split; the split with
    the largest gain in weighted density is applied.
    """
    if not isinstance(H, IncidenceMatrix):
        H = build_incidence(H)
    if k_target < 2 or k_target > H.n:
        raise ValidationError(f"k_target must lie in [2, n={H.n}]")
    Hs = H.to_sparse()
    leaves: list[tuple[int, np.ndarray]] = [(0, np.arange(H.n))]
    next_uid = 1
    cache: dict[int, tuple[np.ndarray, np.ndarray, float]] = {}
    tree = []
    while len(leaves) < k_target:
        best = None
        for pos, (uid, members) in enumerate(leaves):
            if members.size < 2:
                continue
            if uid not in cache:
                a, b = _two_way(Hs, members, cfg, uid)
                cache[uid] = (a, b, split_delta(H, members, a, b))
            delta = cache[uid][2]
            if best is None or delta > best[1]:
                best = (pos, delta)
        if best is None:
            raise ValidationError("every cluster is a singleton before reaching k_target")
        pos, delta = best
        uid, members = leaves[pos]
        a, b = cache.pop(uid)[:2]
        left, right = next_uid, next_uid + 1
        next_uid += 2
        leaves[pos] = (left, a)
        leaves.append((right, b))
        tree.append(Split(uid, left, right, (int(a.size), int(b.size)), float(delta)))
    labels = np.empty(H.n, dtype=np.int64)
    for pos, (_, members) in enumerate(leaves):
        labels[members] = pos
    pi = partition_from_labels(labels)
    return FitResult(pi, kmeans_loss(H, pi), len(tree), True, tree=tuple(tree), seed=cfg.seed)


# --- base clusterings -----------------------------------------------------------

def base_k_range(n: int, k0: int) -> tuple[int, int]:
    upper = min(math.isqrt(n), 100)
    if k0 > upper:
        raise ValidationError(f"k0={k0} exceeds min(floor(sqrt(n)), 100) = {upper}")
    return k0, upper


def generate_base_clusterings(data: Dataset, p: int, seed: int,
                              cfg: Optional[KMeansConfig] = None) -> ClusterEnsemble:
    """Ensemble of ``p`` feature-space k-means runs with random cluster counts.

    Run ``i`` draws its ``k`` uniformly from ``[k0, min(floor(sqrt(n)), 100)]``
    and all its randomness from ``SeedSequence([seed, i])``.
    """
    if p < 1:
        raise ValidationError("p must be >= 1")
    lo, hi = base_k_range(data.n, data.k0)
    template = cfg or KMeansConfig(k=max(lo, 1))
    parts = []
    for i in range(p):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        k = int(rng.integers(lo, hi + 1))
        run_seed = int(rng.integers(2**31))
        fit = kmeans_fit(data.features, template.replace(k=k, seed=run_seed))
        parts.append(fit.partitioning)
    return ClusterEnsemble(tuple(parts))
