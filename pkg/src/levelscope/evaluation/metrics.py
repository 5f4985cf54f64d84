"""Prediction and clustering quality metrics."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import rankdata

from .._geometry import pairwise_distances, prim_mst
from ..levels import LevelScale

NOISE = -1


# -- prediction metrics ------------------------------------------------------


def precision_exact(pred: Sequence[str], true: Sequence[str]) -> float:
    if len(pred) != len(true):
        raise ValueError("length mismatch")
    if not true:
        raise ValueError("no records")
    return float(np.mean([p == t for p, t in zip(pred, true)]))


def aod_contributions(pred: Sequence[str], true: Sequence[str], scale: LevelScale) -> np.ndarray:
    out = np.empty(len(true))
    for i, (p, t) in enumerate(zip(pred, true)):
        dist = abs(scale.ordinal(p) - scale.ordinal(t))
        maxd = scale.max_distance(t)
        out[i] = 1.0 - dist / maxd if maxd > 0 else 1.0
    return out


def aod(pred: Sequence[str], true: Sequence[str], scale: LevelScale) -> float:
    """Mean of ``1 - |ord(pred) - ord(true)| / maxdist(true)``."""
    if len(pred) != len(true):
        raise ValueError("length mismatch")
    if not true:
        raise ValueError("no records")
    return float(aod_contributions(pred, true, scale).mean())


def binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Mann-Whitney AUC with ties counted as one half."""
    pos = positive.astype(bool)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_multiclass(scores: np.ndarray, true: Sequence[str], scale: LevelScale) -> float | None:
    """One-vs-rest AUC macro-averaged over the levels present in ``true``.

    ``scores`` has one column per scale level. Returns None when fewer than two
    classes are present.
    """
    scores = np.asarray(scores, dtype=float)
    y = np.array([scale.ordinal(t) for t in true])
    present = sorted(set(y.tolist()))
    if len(present) < 2:
        return None
    return float(np.mean([binary_auc(scores[:, c], y == c) for c in present]))


# -- partition agreement -----------------------------------------------------


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2.0


def ari(a: Sequence[int], b: Sequence[int]) -> float:
    """Adjusted Rand index by pair counting."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("label arrays differ in length")
    n = len(a)
    if n < 2:
        return 1.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    cont = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(cont, (ai, bi), 1)
    index = _comb2(cont).sum()
    sa = _comb2(cont.sum(axis=1)).sum()
    sb = _comb2(cont.sum(axis=0)).sum()
    expected = sa * sb / _comb2(n)
    max_index = (sa + sb) / 2.0
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


# -- internal validity -------------------------------------------------------


def _clustered(points: np.ndarray, labels: np.ndarray):
    mask = labels != NOISE
    return points[mask], labels[mask]


def silhouette(points, labels) -> float | None:
    """Mean Euclidean silhouette over non-noise points (singletons score 0)."""
    x, y = _clustered(np.asarray(points, dtype=float), np.asarray(labels))
    ids = np.unique(y)
    if len(ids) < 2 or len(ids) >= len(y):
        return None
    d = pairwise_distances(x)
    onehot = (y[:, None] == ids[None, :]).astype(float)
    counts = onehot.sum(axis=0)
    sums = d @ onehot
    own = np.searchsorted(ids, y)
    own_count = counts[own]
    a = np.where(own_count > 1, sums[np.arange(len(y)), own] / np.maximum(own_count - 1, 1), 0.0)
    mean_other = sums / counts[None, :]
    mean_other[np.arange(len(y)), own] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own_count > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def davies_bouldin(points, labels) -> float | None:
    x, y = _clustered(np.asarray(points, dtype=float), np.asarray(labels))
    ids = np.unique(y)
    if len(ids) < 2:
        return None
    cents = np.stack([x[y == c].mean(axis=0) for c in ids])
    scatter = np.array([np.linalg.norm(x[y == c] - cents[k], axis=1).mean() for k, c in enumerate(ids)])
    cd = pairwise_distances(cents)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (scatter[:, None] + scatter[None, :]) / cd
    np.fill_diagonal(r, -np.inf)
    r[~np.isfinite(r) & (r != -np.inf)] = 0.0
    return float(r.max(axis=1).mean())


def _all_points_core(d: np.ndarray, dim: int) -> np.ndarray:
    """All-points core distance inside one cluster, computed in log space."""
    n = d.shape[0]
    if n < 2:
        return np.zeros(n)
    floor = np.finfo(float).tiny ** (1.0 / max(dim, 1))
    logs = -dim * np.log(np.maximum(d, floor))
    np.fill_diagonal(logs, -np.inf)
    agg = logsumexp(logs, axis=1) - np.log(n - 1)
    return np.exp(-agg / dim)


def dbcv(points, labels) -> float | None:
    """Density-based clustering validation; noise counts in the denominator."""
    x = np.asarray(points, dtype=float)
    y = np.asarray(labels)
    ids = [c for c in np.unique(y) if c != NOISE]
    if len(ids) < 2:
        return None
    dim = x.shape[1]
    members = {c: np.nonzero(y == c)[0] for c in ids}
    core = np.zeros(len(y))
    internal: dict[int, np.ndarray] = {}
    sparseness: dict[int, float] = {}
    for c in ids:
        idx = members[c]
        d = pairwise_distances(x[idx])
        cd = _all_points_core(d, dim)
        core[idx] = cd
        if len(idx) < 2:
            internal[c] = idx
            sparseness[c] = 0.0
            continue
        mr = np.maximum(np.maximum(d, cd[:, None]), cd[None, :])
        eu, ev, ew = prim_mst(mr)
        deg = np.bincount(np.r_[eu, ev], minlength=len(idx))
        inner = deg > 1
        inner_edges = inner[eu] & inner[ev]
        if inner.any() and inner_edges.any():
            internal[c] = idx[inner]
            sparseness[c] = float(ew[inner_edges].max())
        else:
            internal[c] = idx
            sparseness[c] = float(ew.max())
    score = 0.0
    for c in ids:
        sep = np.inf
        for o in ids:
            if o == c:
                continue
            a, b = internal[c], internal[o]
            d = pairwise_distances(np.vstack([x[a], x[b]]))[: len(a), len(a) :]
            mr = np.maximum(np.maximum(d, core[a][:, None]), core[b][None, :])
            sep = min(sep, float(mr.min()))
        dsc = sparseness[c]
        denom = max(sep, dsc)
        v = (sep - dsc) / denom if denom > 0 else 0.0
        score += len(members[c]) / len(y) * v
    return float(score)


def internal_cluster_metrics(points, labels) -> dict[str, float | None]:
    return {
        "silhouette": silhouette(points, labels),
        "dbi": davies_bouldin(points, labels),
        "dbcv": dbcv(points, labels),
    }
