"""Consensus clustering with a linear-time co-association density."""

from .core import (
    ClusterEnsemble,
    Dataset,
    IncidenceMatrix,
    Partitioning,
    ValidationError,
    build_incidence,
    partition_from_clusters,
    partition_from_labels,
)
from .density import (
    OracleCapError,
    alpha_counts,
    cluster_density,
    cluster_weight_fast,
    cluster_weight_oracle,
    coassociation,
    density_score,
    enhance_coassociation,
    partition_score,
    split_delta,
)
from .kmeans import KMeansConfig, FitResult, bisecting_fit, generate_base_clusterings, kmeans_fit, kmeans_loss
from .consensus import ConsensusRequest, hierarchical, run_consensus
from .metrics import baselines, density_baselines, ensemble_nmi, nmi

__version__ = "0.1.0"

__all__ = [
    "ClusterEnsemble", "Dataset", "IncidenceMatrix", "Partitioning", "ValidationError",
    "build_incidence", "partition_from_clusters", "partition_from_labels",
    "OracleCapError", "alpha_counts", "cluster_density", "cluster_weight_fast", "cluster_weight_oracle",
    "coassociation", "density_score", "enhance_coassociation", "partition_score", "split_delta",
    "KMeansConfig", "FitResult", "bisecting_fit", "generate_base_clusterings", "kmeans_fit", "kmeans_loss",
    "ConsensusRequest", "hierarchical", "run_consensus",
    "baselines", "density_baselines", "ensemble_nmi", "nmi",
]
