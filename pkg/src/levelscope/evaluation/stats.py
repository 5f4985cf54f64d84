"""Paired comparison statistics: Wilcoxon signed-rank and Cohen's d."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm, rankdata

EXACT_MAX_N = 25


@dataclass(frozen=True)
class PairedComparison:
    p_value: float
    cohens_d: float
    effect_label: str
    statistic: float
    n: int
    method: str


def signed_ranks(diff: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pratt ranking: rank |d| including zeros, then drop the zero entries.

    Returns (ranks, signs) of the nonzero differences.
    """
    ranks = rankdata(np.abs(diff))
    nz = diff != 0
    return ranks[nz], np.sign(diff[nz])


def _exact_two_sided(ranks: np.ndarray, t_plus: float) -> float:
    """Exact null distribution of T+ by dynamic programming over doubled ranks."""
    doubled = np.rint(ranks * 2).astype(np.int64)
    total = int(doubled.sum())
    dist = np.zeros(total + 1)
    dist[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[: total + 1 - r]
        dist = dist + shifted
    dist /= dist.sum()
    t = int(round(t_plus * 2))
    lower = dist[: t + 1].sum()
    upper = dist[t:].sum()
    return float(min(1.0, 2.0 * min(lower, upper)))


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> tuple[float, float, str]:
    """Two-sided Wilcoxon signed-rank test with Pratt zero handling.

    Exact null distribution when at most ``EXACT_MAX_N`` differences are
    nonzero, tie-corrected normal approximation otherwise.
    Returns (T+, p_value, method).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    diff = a - b
    ranks, signs = signed_ranks(diff)
    if len(ranks) == 0:
        return 0.0, 1.0, "degenerate"
    t_plus = float(ranks[signs > 0].sum())
    if len(ranks) <= EXACT_MAX_N:
        return t_plus, _exact_two_sided(ranks, t_plus), "exact"

    n = len(diff)
    n_zero = n - len(ranks)
    mean = (n * (n + 1) - n_zero * (n_zero + 1)) / 4.0
    var = (n * (n + 1) * (2 * n + 1) - n_zero * (n_zero + 1) * (2 * n_zero + 1)) / 24.0
    _, tie_counts = np.unique(np.abs(diff[diff != 0]), return_counts=True)
    var -= float(((tie_counts**3 - tie_counts)).sum()) / 48.0
    if var <= 0:
        return t_plus, 1.0, "normal"
    z = (t_plus - mean) / math.sqrt(var)
    return t_plus, float(min(1.0, 2.0 * norm.sf(abs(z)))), "normal"


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """Paired effect size ``mean(a-b) / sd(a-b)``; +/-inf when sd is zero."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if len(diff) == 0:
        return 0.0
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1)) if len(diff) > 1 else 0.0
    if sd == 0.0:
        if mean == 0.0:
            return 0.0
        return math.copysign(math.inf, mean)
    return mean / sd


def effect_label(d: float) -> str:
    m = abs(d)
    if m >= 0.8:
        return "large"
    if m >= 0.5:
        return "medium"
    if m >= 0.2:
        return "small"
    return "negligible"


def paired_comparison(a: Sequence[float], b: Sequence[float]) -> PairedComparison:
    t, p, method = wilcoxon_signed_rank(a, b)
    d = cohens_d(a, b)
    return PairedComparison(p, d, effect_label(d), t, len(a), method)
