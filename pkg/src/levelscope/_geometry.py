"""Dense distance helpers shared by clustering and validation metrics."""

from __future__ import annotations

import numpy as np


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def prim_mst(mr: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimum spanning tree of a dense symmetric matrix as (u, v, w) edges."""
    n = mr.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    src = np.zeros(n, dtype=np.int64)
    eu = np.empty(n - 1, dtype=np.int64)
    ev = np.empty(n - 1, dtype=np.int64)
    ew = np.empty(n - 1)
    cur = 0
    in_tree[0] = True
    for step in range(n - 1):
        row = mr[cur]
        better = (row < best) & ~in_tree
        best[better] = row[better]
        src[better] = cur
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))
        eu[step], ev[step], ew[step] = src[nxt], nxt, best[nxt]
        in_tree[nxt] = True
        cur = nxt
    return eu, ev, ew
