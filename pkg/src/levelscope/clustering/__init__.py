"""Density clustering, Leiden community detection and partition artifacts."""

from .community import (
    DEFAULT_RESOLUTIONS,
    MIN_COMMUNITY_SIZE,
    MultiplexGraph,
    TuneResult,
    build_layer,
    leiden,
    multiplex_leiden,
    rescale_weights,
    tune_resolution,
)
from .density import BootstrapSummary, GridResult, bootstrap_stability, grid_cells, hdbscan, hdbscan_grid_search
from .leiden import leiden_labels, leiden_multiplex_labels, modularity, multiplex_modularity
from .partition import MODES, NOISE, Partition, PartitionQuality

__all__ = [
    "DEFAULT_RESOLUTIONS",
    "MIN_COMMUNITY_SIZE",
    "MODES",
    "NOISE",
    "BootstrapSummary",
    "GridResult",
    "MultiplexGraph",
    "Partition",
    "PartitionQuality",
    "TuneResult",
    "bootstrap_stability",
    "build_layer",
    "grid_cells",
    "hdbscan",
    "hdbscan_grid_search",
    "leiden",
    "leiden_labels",
    "leiden_multiplex_labels",
    "modularity",
    "multiplex_leiden",
    "multiplex_modularity",
    "rescale_weights",
    "tune_resolution",
]
