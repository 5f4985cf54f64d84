"""HDBSCAN partitions, hyperparameter grid search, bootstrap stability."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..evaluation.metrics import ari, davies_bouldin, dbcv, silhouette
from .hdbscan import hdbscan_labels
from .partition import NOISE, Partition, PartitionQuality

log = logging.getLogger(__name__)

MID_RANGE_MCS = (25, 40, 50, 75, 100)


def _round(x: float) -> int:
    return int(math.floor(x + 0.5))


def grid_cells(n_files: int, dedup: bool = True) -> list[tuple[int, int]]:
    """(min_cluster_size, min_samples) pairs for a project of ``n_files``.

    Cluster sizes: N/300, N/150, the mid-range set and N/10. Sample counts:
    half and a quarter of each cluster size.
    """
    raw = [n_files / 300, n_files / 150, *MID_RANGE_MCS, n_files / 10]
    mcs_values = [max(2, _round(v)) for v in raw]
    if dedup:
        mcs_values = sorted(set(mcs_values))
    cells = []
    for mcs in mcs_values:
        for frac in (0.5, 0.25):
            cells.append((mcs, min(mcs, max(1, _round(frac * mcs)))))
    if dedup:
        cells = sorted(set(cells))
    return cells


def hdbscan(points, min_cluster_size: int, min_samples: int, files: Sequence[str] | None = None) -> Partition:
    x = np.asarray(points, dtype=float)
    labels = hdbscan_labels(x, min_cluster_size, min_samples)
    files = list(files) if files is not None else [str(i) for i in range(len(x))]
    q = PartitionQuality(silhouette=silhouette(x, labels), dbi=davies_bouldin(x, labels))
    return Partition(files, labels, "semantic", q, {"min_cluster_size": min_cluster_size, "min_samples": min_samples})


@dataclass
class GridResult:
    best_params: dict
    partition: Partition
    report: list[dict] = field(default_factory=list)
    degenerate: bool = False


def _score(x: np.ndarray, labels: np.ndarray) -> tuple[float, float, int]:
    n_clusters = len(np.unique(labels[labels != NOISE]))
    if n_clusters < 2:
        return -1.0, math.inf, n_clusters
    sil = silhouette(x, labels)
    dbi = davies_bouldin(x, labels)
    return (-1.0 if sil is None else sil), (math.inf if dbi is None else dbi), n_clusters


def hdbscan_grid_search(points, n_files: int | None = None, files: Sequence[str] | None = None) -> GridResult:
    """Evaluate every grid cell; pick max silhouette, then min DBI, then
    larger coverage, then smaller min_cluster_size."""
    x = np.asarray(points, dtype=float)
    n = len(x) if n_files is None else n_files
    rows = []
    best_key = None
    best = None
    for mcs, ms in grid_cells(n):
        if mcs > len(x):
            labels = np.full(len(x), NOISE, dtype=np.int64)
        else:
            labels = hdbscan_labels(x, mcs, ms)
        sil, dbi, k = _score(x, labels)
        cov = float((labels != NOISE).mean()) if len(labels) else 0.0
        rows.append({"min_cluster_size": mcs, "min_samples": ms, "n_clusters": k,
                     "silhouette": sil, "dbi": None if math.isinf(dbi) else dbi, "coverage": cov})
        key = (-sil, dbi, -cov, mcs, ms)
        if best_key is None or key < best_key:
            best_key, best = key, (mcs, ms, labels, sil, dbi)
    mcs, ms, labels, sil, dbi = best
    degenerate = all(r["n_clusters"] < 2 for r in rows)
    if degenerate:
        log.warning("every grid cell produced fewer than two clusters")
    files = list(files) if files is not None else [str(i) for i in range(len(x))]
    quality = PartitionQuality(
        silhouette=None if degenerate else sil,
        dbi=None if degenerate else dbi,
        dbcv=None if degenerate else dbcv(x, labels),
    )
    params = {"min_cluster_size": mcs, "min_samples": ms, "degenerate": degenerate}
    part = Partition(files, labels, "semantic", quality, params)
    return GridResult({"min_cluster_size": mcs, "min_samples": ms}, part, rows, degenerate)


@dataclass
class BootstrapSummary:
    mean: float
    std: float
    values: list[float]


def bootstrap_stability(points, params: dict, iterations: int = 30, seed: int = 0) -> BootstrapSummary:
    """ARI between the reference clustering and clusterings of bootstrap resamples.

    Each resample draws N indices with replacement and HDBSCAN runs on the
    full resample, duplicates included, so cluster sizes stay comparable with
    ``min_cluster_size``. Each drawn point takes the label of its first copy
    and the comparison is restricted to the unique drawn points.
    """
    x = np.asarray(points, dtype=float)
    mcs, ms = int(params["min_cluster_size"]), int(params["min_samples"])
    ref = hdbscan_labels(x, mcs, ms)
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(iterations):
        idx = rng.integers(0, len(x), len(x))
        lab = hdbscan_labels(x[idx], mcs, ms)
        uniq, first = np.unique(idx, return_index=True)
        lab = lab[first]
        if np.all(lab == NOISE) or np.all(ref[uniq] == NOISE):
            values.append(0.0)
        else:
            values.append(ari(lab, ref[uniq]))
    arr = np.array(values)
    return BootstrapSummary(float(arr.mean()), float(arr.std()), values)
