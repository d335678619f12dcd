"""Consensus algorithms behind a single request/dispatch interface."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ClusterEnsemble, IncidenceMatrix, ValidationError, build_incidence, partition_from_labels
from .density import _check_cap, _values, coassociation, enhance_coassociation, jaccard_matrix
from .graph import WeightedGraph, partition_graph
from .kmeans import KL, FitResult, KMeansConfig, Weighted, bisecting_fit, kmeans_fit, kmeans_loss

ALGORITHMS = ("eac_km", "h_km", "sec", "ecc", "mcla", "cspa", "hier")
LINKAGES = ("SL", "AL", "ML")
MATRICES = ("raw", "enhanced")


@dataclass(frozen=True)
class ConsensusRequest:
    """One consensus run.

    ``options`` keys by algorithm:

    * eac_km, h_km, sec, ecc: ``restarts``, ``max_iters``, ``tol``
    * ecc: ``eps`` (smoothing of the KL divergence)
    * mcla, cspa: ``balance_factor`` (default 1.1)
    * hier: ``linkage`` (SL, AL, ML), ``matrix`` (raw, enhanced), ``decay``,
      ``similarity`` (link or jaccard, for the enhanced matrix)
    * all quadratic methods: ``oracle_cap``
    """

    ensemble: ClusterEnsemble
    k_out: int
    algorithm: str
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.k_out < 2:
            raise ValidationError("k_out must be >= 2")
        if self.algorithm not in ALGORITHMS:
            raise ValidationError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.k_out > self.ensemble.n:
            raise ValidationError(f"k_out={self.k_out} exceeds n={self.ensemble.n}")
        if self.algorithm == "hier":
            if self.options.get("linkage", "AL") not in LINKAGES:
                raise ValidationError(f"hier.linkage must be one of {LINKAGES}")
            if self.options.get("matrix", "raw") not in MATRICES:
                raise ValidationError(f"hier.matrix must be one of {MATRICES}")


def _kmeans_cfg(req: ConsensusRequest) -> KMeansConfig:
    o = req.options
    return KMeansConfig(
        k=req.k_out,
        max_iters=int(o.get("max_iters", 100)),
        tol=float(o.get("tol", 1e-6)),
        seed=req.seed,
        restarts=int(o.get("restarts", 5)),
    )


def _finish(H: IncidenceMatrix, labels, iterations=0, converged=True, seed=None) -> FitResult:
    pi = partition_from_labels(labels)
    return FitResult(pi, kmeans_loss(H, pi), iterations, converged, seed=seed)


def run_consensus(req: ConsensusRequest) -> FitResult:
    H = build_incidence(req.ensemble)
    algo = req.algorithm
    o = req.options
    cap = o.get("oracle_cap")
    if algo == "eac_km":
        return kmeans_fit(H, _kmeans_cfg(req))
    if algo == "h_km":
        return bisecting_fit(H, req.k_out, _kmeans_cfg(req))
    if algo == "sec":
        return sec(H, _kmeans_cfg(req))
    if algo == "ecc":
        return ecc(H, _kmeans_cfg(req), eps=float(o.get("eps", 1e-6)))
    if algo == "mcla":
        return mcla(req.ensemble, req.k_out, req.seed, float(o.get("balance_factor", 1.1)))
    if algo == "cspa":
        return cspa(req.ensemble, req.k_out, req.seed, float(o.get("balance_factor", 1.1)), cap=cap)
    # hierarchical
    _check_cap(H.n, cap)
    A = coassociation(H, cap=cap)
    if o.get("matrix", "raw") == "enhanced":
        A = enhance_coassociation(A, req.ensemble, decay=float(o.get("decay", 0.9)), cap=cap,
                                  method=o.get("similarity", "link"))
    fit = hierarchical(A, o.get("linkage", "AL"), req.k_out, cap=cap)
    return FitResult(fit.partitioning, kmeans_loss(H, fit.partitioning), fit.iterations, True, seed=req.seed)


# --- spectral ensemble clustering (weighted k-means) ----------------------------

def sec_transform(H: IncidenceMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Rows of H scaled by their co-association mass, plus the weights.

    ``w_i = h_i . sum_j h_j`` is the sum of column sizes over item i's
    clusters, which takes O(n p) from the column-sum vector.
    """
    w = H.column_sums[H.row_cols].sum(axis=1).astype(np.float64)
    assert np.all(w >= H.p), "self-association keeps every weight >= p"
    Hs = H.to_sparse()
    scaled = Hs.multiply(1.0 / w[:, None]).tocsr()
    return scaled, w


def sec(H: IncidenceMatrix, cfg: KMeansConfig) -> FitResult:
    scaled, w = sec_transform(H)
    fit = kmeans_fit(scaled, cfg, Weighted(w))
    return FitResult(fit.partitioning, kmeans_loss(H, fit.partitioning), fit.iterations,
                     fit.converged, fit.history, seed=cfg.seed)


def ecc(H: IncidenceMatrix, cfg: KMeansConfig, eps: float = 1e-6) -> FitResult:
    """k-means on the incidence rows under block-wise KL divergence."""
    fit = kmeans_fit(H, cfg, KL(eps, H.column_owner))
    return FitResult(fit.partitioning, kmeans_loss(H, fit.partitioning), fit.iterations,
                     fit.converged, fit.history, seed=cfg.seed)


# --- hypergraph methods -----------------------------------------------------------

def mcla(ensemble: ClusterEnsemble, k_out: int, seed: int = 0, balance_factor: float = 1.1) -> FitResult:
    """Meta-clustering: partition the Jaccard graph of ensemble clusters.

    Items go to the meta-cluster they are most associated with (lowest index
    on ties).  Meta-clusters that win no item are dropped, so the result can
    have fewer than ``k_out`` clusters.
    """
    H = build_incidence(ensemble)
    if k_out < 2:
        raise ValidationError("k_out must be >= 2")
    if H.d < k_out:
        raise ValidationError(f"MCLA needs at least k_out={k_out} ensemble clusters, found {H.d}")
    J = jaccard_matrix(H)
    J[H.column_owner[:, None] == H.column_owner[None, :]] = 0.0
    meta = partition_graph(WeightedGraph.from_matrix(J), k_out, balance_factor, seed=seed).labels
    meta_size = np.bincount(meta, minlength=k_out).astype(np.float64)
    keys = np.arange(H.n)[:, None] * k_out + meta[H.row_cols]
    hits = np.bincount(keys.ravel(), minlength=H.n * k_out).reshape(H.n, k_out)
    with np.errstate(invalid="ignore", divide="ignore"):
        assoc = np.where(meta_size > 0, hits / meta_size, -1.0)
    labels = np.argmax(assoc, axis=1)
    return _finish(H, labels, seed=seed)


def cspa(ensemble: ClusterEnsemble, k_out: int, seed: int = 0, balance_factor: float = 1.1,
         cap: Optional[int] = None) -> FitResult:
    """Balanced graph partitioning of the co-association graph."""
    H = build_incidence(ensemble)
    if k_out < 2:
        raise ValidationError("k_out must be >= 2")
    A = coassociation(H, cap=cap)
    g = WeightedGraph.from_matrix(A.values)
    res = partition_graph(g, k_out, balance_factor, seed=seed)
    return _finish(H, res.labels, seed=seed)


# --- agglomerative ----------------------------------------------------------------

@dataclass
class LinkageState:
    """Active clusters, their similarity store and the merges done so far.

    ``S`` holds linkage similarities between active clusters (``-inf`` on the
    diagonal and for retired ids).  ``row_max``/``row_arg`` cache each active
    row's best partner, lowest id on ties, so choosing the next merge is a
    scan over rows instead of over pairs.
    """

    S: np.ndarray
    sizes: np.ndarray
    active: np.ndarray
    row_max: np.ndarray
    row_arg: np.ndarray
    merges: list = field(default_factory=list)

    @classmethod
    def start(cls, A: np.ndarray) -> "LinkageState":
        n = A.shape[0]
        S = np.array(A, dtype=np.float64, copy=True)
        np.fill_diagonal(S, -np.inf)
        arg = np.argmax(S, axis=1)
        return cls(S, np.ones(n, dtype=np.int64), np.ones(n, dtype=bool),
                   S[np.arange(n), arg], arg)

    @property
    def count(self) -> int:
        return int(self.active.sum())

    def next_pair(self) -> tuple[int, int, float]:
        best = np.where(self.active, self.row_max, -np.inf)
        r = int(np.argmax(best))  # smallest row holding the global maximum
        return r, int(self.row_arg[r]), float(best[r])

    def merge(self, r: int, c: int, linkage: str) -> None:
        """Fold cluster ``c`` into ``r`` (``r < c``) and refresh the caches."""
        S = self.S
        if linkage == "SL":
            new = np.maximum(S[r], S[c])
        elif linkage == "ML":
            new = np.minimum(S[r], S[c])
        else:
            nr, nc = self.sizes[r], self.sizes[c]
            new = (nr * S[r] + nc * S[c]) / (nr + nc)
        self.merges.append((r, c, float(S[r, c])))
        self.sizes[r] += self.sizes[c]
        self.active[c] = False
        new[r] = -np.inf
        new[~self.active] = -np.inf
        S[r, :] = new
        S[:, r] = new
        S[c, :] = -np.inf
        S[:, c] = -np.inf

        # rows whose cached partner was r or c need a fresh scan
        stale = self.active & ((self.row_arg == r) | (self.row_arg == c))
        stale[r] = True
        rows = np.flatnonzero(stale)
        if rows.size:
            arg = np.argmax(S[rows], axis=1)
            self.row_arg[rows] = arg
            self.row_max[rows] = S[rows, arg]
        # everyone else only has to compare against the new column r
        others = self.active & ~stale
        better = others & ((new > self.row_max) | ((new == self.row_max) & (r < self.row_arg)))
        self.row_max[better] = new[better]
        self.row_arg[better] = r


def hierarchical(A, linkage: str, k_out: int, cap: Optional[int] = None) -> FitResult:
    """Agglomerative clustering on a similarity matrix, stopped at ``k_out``.

    Repeatedly merges the active pair with the highest linkage similarity:
    single linkage takes the best pair between two clusters, average linkage
    the mean over pairs and complete linkage (ML) the worst pair.  Ties go to
    the lexicographically smallest pair of cluster ids; the merged cluster keeps
    the smaller id.
    """
    values = _values(A)
    n = values.shape[0]
    if linkage not in LINKAGES:
        raise ValidationError(f"linkage must be one of {LINKAGES}")
    if not 1 <= k_out <= n:
        raise ValidationError(f"k_out must lie in [1, n={n}]")
    _check_cap(n, cap)
    state = LinkageState.start(values)
    while state.count > k_out:
        r, c, _ = state.next_pair()
        state.merge(r, c, linkage)
    # resolve each item to its surviving root
    parent = np.arange(n)
    for r, c, _ in state.merges:
        parent[c] = r
    root = parent.copy()
    for _ in range(n):
        nxt = parent[root]
        if np.array_equal(nxt, root):
            break
        root = nxt
    pi = partition_from_labels(root)
    return FitResult(pi, float("nan"), len(state.merges), True)
