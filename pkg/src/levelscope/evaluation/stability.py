"""Temporal stability of ownership partitions over consecutive commit windows."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..corpus.model import CommitRecord
from ..ownership import DecayConfig, SECONDS_PER_DAY, build_ownership_matrix, knn_graph
from .metrics import ari

log = logging.getLogger(__name__)

DAYS_PER_MONTH = 365.25 / 12


@dataclass
class StabilityReport:
    median_ari: float | None
    aris: list[float] = field(default_factory=list)
    windows: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"median_ari": self.median_ari, "aris": self.aris, "windows": self.windows}


def window_bounds(end: float, window_months: float, windows: int) -> list[tuple[float, float]]:
    """``windows`` consecutive half-open intervals ending at ``end``, oldest first."""
    length = window_months * DAYS_PER_MONTH * SECONDS_PER_DAY
    return [(end - (windows - i) * length, end - (windows - i - 1) * length) for i in range(windows)]


def window_partition(
    commits: Sequence[CommitRecord],
    files: Sequence[str],
    reference_time: float,
    k: int = 20,
    resolution: float = 1.0,
    seed: int = 0,
    min_community_size: int = 1,
    decay: DecayConfig | None = None,
) -> tuple[list[str], np.ndarray]:
    """Ownership Leiden partition restricted to files touched by ``commits``."""
    # local import: clustering imports evaluation.metrics
    from ..clustering.community import drop_small, isolated_nodes
    from ..clustering.leiden import leiden_multiplex_labels
    from ..clustering.partition import NOISE

    touched = sorted({f for c in commits for f in c.touched_files} & set(files))
    if not touched:
        return touched, np.zeros(0, dtype=np.int64)
    m = build_ownership_matrix(commits, touched, decay, reference_time)
    g = knn_graph(m.weights, touched, k)
    labels = leiden_multiplex_labels([g], [1.0], resolution, seed)
    labels = labels.copy()
    labels[isolated_nodes([g])] = NOISE
    return touched, drop_small(labels, min_community_size)


def temporal_stability(
    commits: Sequence[CommitRecord],
    files: Sequence[str],
    window_months: float = 2,
    windows: int = 15,
    end: float | None = None,
    k: int = 20,
    resolution: float = 1.0,
    seed: int = 0,
    min_community_size: int = 1,
) -> StabilityReport:
    """Median ARI between ownership partitions of consecutive windows.

    Each window uses only its own commits with the decay reference at the
    window end. ARI is computed on files present in both windows. Windows without
    commits are skipped.
    """
    if not commits:
        return StabilityReport(None)
    end = max(c.timestamp for c in commits) + 1 if end is None else end
    bounds = window_bounds(end, window_months, windows)
    if min(c.timestamp for c in commits) >= bounds[0][1]:
        log.warning("history is shorter than %d windows of %s months", windows, window_months)
    report = StabilityReport(None)
    prev: dict[str, int] | None = None
    for lo, hi in bounds:
        in_window = [c for c in commits if lo <= c.timestamp < hi]
        info = {"start": lo, "end": hi, "commits": len(in_window)}
        if not in_window:
            info["skipped"] = True
            report.windows.append(info)
            continue
        touched, labels = window_partition(in_window, files, hi, k, resolution, seed, min_community_size)
        cur = dict(zip(touched, labels.tolist()))
        info["files"] = len(touched)
        if prev is not None:
            shared = sorted(set(prev) & set(cur))
            info["shared_files"] = len(shared)
            if len(shared) >= 2:
                value = ari([prev[f] for f in shared], [cur[f] for f in shared])
                info["ari"] = value
                report.aris.append(value)
        report.windows.append(info)
        prev = cur
    if report.aris:
        report.median_ari = float(np.median(report.aris))
    return report
