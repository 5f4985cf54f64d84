"""Prediction metrics, clustering validation, statistics and the experiment protocol."""

from .metrics import aod, ari, auc_multiclass, davies_bouldin, dbcv, internal_cluster_metrics, precision_exact, silhouette
from .stats import PairedComparison, cohens_d, effect_label, paired_comparison, wilcoxon_signed_rank

__all__ = [
    "PairedComparison",
    "aod",
    "ari",
    "auc_multiclass",
    "cohens_d",
    "davies_bouldin",
    "dbcv",
    "effect_label",
    "internal_cluster_metrics",
    "paired_comparison",
    "precision_exact",
    "silhouette",
    "wilcoxon_signed_rank",
]
