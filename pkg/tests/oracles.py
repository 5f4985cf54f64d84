"""Brute-force reference implementations used to check the optimized metrics."""

from __future__ import annotations

import itertools
import math

import numpy as np


def auc_pairs(scores, positive) -> float:
    pos = [s for s, p in zip(scores, positive) if p]
    neg = [s for s, p in zip(scores, positive) if not p]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def auc_macro(scores, true_idx) -> float:
    classes = sorted(set(true_idx))
    return sum(auc_pairs([row[c] for row in scores], [t == c for t in true_idx]) for c in classes) / len(classes)


def precision(pred, true) -> float:
    return sum(p == t for p, t in zip(pred, true)) / len(true)


def aod(pred, true, names) -> float:
    total = 0.0
    for p, t in zip(pred, true):
        o = names.index(t)
        maxd = max(o, len(names) - 1 - o)
        total += 1.0 - abs(names.index(p) - o) / maxd
    return total / len(true)


def ari(a, b) -> float:
    """Adjusted Rand index from the four pair counts."""
    n = len(a)
    same_both = same_a = same_b = 0
    for i, j in itertools.combinations(range(n), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        same_both += sa and sb
        same_a += sa
        same_b += sb
    pairs = n * (n - 1) / 2
    expected = same_a * same_b / pairs
    maximum = (same_a + same_b) / 2
    if maximum == expected:
        return 1.0
    return (same_both - expected) / (maximum - expected)


def _dist(p, q) -> float:
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(p, q)))


def silhouette(points, labels) -> float:
    vals = []
    for i, p in enumerate(points):
        own = [j for j in range(len(points)) if labels[j] == labels[i] and j != i]
        if not own:
            vals.append(0.0)
            continue
        a = sum(_dist(p, points[j]) for j in own) / len(own)
        b = min(
            sum(_dist(p, points[j]) for j in range(len(points)) if labels[j] == c)
            / sum(1 for j in range(len(points)) if labels[j] == c)
            for c in set(labels) if c != labels[i]
        )
        vals.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return sum(vals) / len(vals)


def davies_bouldin(points, labels) -> float:
    ids = sorted(set(labels))
    cents, scat = {}, {}
    for c in ids:
        mem = [points[i] for i in range(len(points)) if labels[i] == c]
        cents[c] = [sum(col) / len(mem) for col in zip(*mem)]
        scat[c] = sum(_dist(m, cents[c]) for m in mem) / len(mem)
    total = 0.0
    for c in ids:
        total += max((scat[c] + scat[o]) / _dist(cents[c], cents[o]) for o in ids if o != c)
    return total / len(ids)


def wilcoxon_p(a, b) -> float:
    """Two-sided p by enumerating every sign assignment of the Pratt ranks."""
    diff = [x - y for x, y in zip(a, b)]
    absd = [abs(d) for d in diff]
    # average ranks over all |d|, zeros included
    order = sorted(range(len(absd)), key=lambda i: absd[i])
    ranks = [0.0] * len(absd)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and absd[order[j + 1]] == absd[order[i]]:
            j += 1
        for m in range(i, j + 1):
            ranks[order[m]] = (i + j) / 2 + 1
        i = j + 1
    nz = [k for k, d in enumerate(diff) if d != 0]
    if not nz:
        return 1.0
    r = [ranks[k] for k in nz]
    t_obs = sum(ranks[k] for k in nz if diff[k] > 0)
    stats = [sum(x for x, s in zip(r, signs) if s) for signs in itertools.product((0, 1), repeat=len(r))]
    lo = sum(1 for t in stats if t <= t_obs + 1e-12) / len(stats)
    hi = sum(1 for t in stats if t >= t_obs - 1e-12) / len(stats)
    return min(1.0, 2 * min(lo, hi))


def cohens_d(a, b) -> float:
    diff = [x - y for x, y in zip(a, b)]
    n = len(diff)
    mean = sum(diff) / n
    var = sum((d - mean) ** 2 for d in diff) / (n - 1)
    return mean / math.sqrt(var)


def cosine(u, v) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))
