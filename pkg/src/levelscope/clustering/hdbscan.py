"""HDBSCAN on dense Euclidean data.

Core distances count the point itself among its ``min_samples`` neighbours.
All ties (Prim's MST, edge sorting, cluster selection) resolve towards the
lower point index so repeated runs are bit-identical.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .._geometry import pairwise_distances, prim_mst
from .partition import NOISE


@dataclass
class CondensedTree:
    parent: np.ndarray
    child: np.ndarray
    lambda_val: np.ndarray
    child_size: np.ndarray
    n_points: int


def core_distances(dist: np.ndarray, min_samples: int) -> np.ndarray:
    k = min(max(min_samples, 1), dist.shape[0]) - 1
    if k == 0:
        return np.zeros(dist.shape[0])
    return np.partition(dist, k, axis=1)[:, k]


def mutual_reachability(dist: np.ndarray, core: np.ndarray) -> np.ndarray:
    mr = np.maximum(dist, core[:, None])
    np.maximum(mr, core[None, :], out=mr)
    return mr


def single_linkage(n: int, eu, ev, ew) -> np.ndarray:
    """Scipy-style linkage rows (left, right, distance, size) from MST edges."""
    order = np.argsort(ew, kind="stable")
    parent = np.arange(2 * n - 1)
    size = np.ones(2 * n - 1, dtype=np.int64)

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    out = np.empty((n - 1, 4))
    nxt = n
    for row, e in enumerate(order):
        a, b = find(int(eu[e])), find(int(ev[e]))
        out[row] = (a, b, ew[e], size[a] + size[b])
        parent[a] = parent[b] = nxt
        size[nxt] = size[a] + size[b]
        nxt += 1
    return out


def _lambda(d: float, floor: float) -> float:
    return 1.0 / max(d, floor)


def condense_tree(linkage: np.ndarray, min_cluster_size: int) -> CondensedTree:
    n = linkage.shape[0] + 1
    root = 2 * n - 2
    sizes = np.ones(2 * n - 1, dtype=np.int64)
    sizes[n:] = linkage[:, 3].astype(np.int64)
    positive = linkage[:, 2][linkage[:, 2] > 0]
    floor = positive.min() * 1e-6 if positive.size else 1e-12

    def children(node: int) -> tuple[int, int]:
        r = linkage[node - n]
        return int(r[0]), int(r[1])

    def leaves(node: int):
        stack = [node]
        while stack:
            x = stack.pop()
            if x < n:
                yield x
            else:
                stack.extend(children(x))

    relabel = {root: n}
    next_label = n + 1
    rows: list[tuple[int, int, float, int]] = []
    queue = deque([root])
    while queue:
        node = queue.popleft()
        if node < n:
            continue
        left, right = children(node)
        lam = _lambda(float(linkage[node - n, 2]), floor)
        ls, rs = int(sizes[left]), int(sizes[right])
        parent_label = relabel[node]
        if ls >= min_cluster_size and rs >= min_cluster_size:
            for ch, sz in ((left, ls), (right, rs)):
                relabel[ch] = next_label
                rows.append((parent_label, next_label, lam, sz))
                next_label += 1
                queue.append(ch)
        elif ls < min_cluster_size and rs < min_cluster_size:
            for ch in (left, right):
                for p in leaves(ch):
                    rows.append((parent_label, p, lam, 1))
        else:
            small, big = (left, right) if ls < min_cluster_size else (right, left)
            for p in leaves(small):
                rows.append((parent_label, p, lam, 1))
            relabel[big] = parent_label
            queue.append(big)
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return CondensedTree(
        arr[:, 0].astype(np.int64),
        arr[:, 1].astype(np.int64),
        arr[:, 2],
        arr[:, 3].astype(np.int64),
        n,
    )


def stabilities(tree: CondensedTree) -> dict[int, float]:
    n = tree.n_points
    births = {n: 0.0}
    for c, lam in zip(tree.child, tree.lambda_val):
        if c >= n:
            births[int(c)] = float(lam)
    stab = {c: 0.0 for c in births}
    for p, lam, sz in zip(tree.parent, tree.lambda_val, tree.child_size):
        p = int(p)
        stab[p] += (float(lam) - births[p]) * int(sz)
    return stab


def select_clusters(tree: CondensedTree, allow_single_cluster: bool = False) -> list[int]:
    """Excess-of-mass selection; returns selected cluster labels ascending."""
    n = tree.n_points
    stab = stabilities(tree)
    kids: dict[int, list[int]] = {c: [] for c in stab}
    for p, c in zip(tree.parent, tree.child):
        if c >= n:
            kids[int(p)].append(int(c))
    nodes = sorted(stab, reverse=True)
    if not allow_single_cluster:
        nodes = [c for c in nodes if c != n]
    selected = {c: True for c in nodes}
    for c in nodes:
        sub = sum(stab[k] for k in kids[c])
        if sub > stab[c]:
            selected[c] = False
            stab[c] = sub
        else:
            stack = list(kids[c])
            while stack:
                d = stack.pop()
                if d in selected:
                    selected[d] = False
                stack.extend(kids[d])
    return sorted(c for c, s in selected.items() if s)


def label_points(tree: CondensedTree, selected: list[int]) -> np.ndarray:
    n = tree.n_points
    up = {int(c): int(p) for p, c in zip(tree.parent, tree.child)}
    chosen = set(selected)
    cluster_id = {c: i for i, c in enumerate(selected)}
    labels = np.full(n, NOISE, dtype=np.int64)
    memo: dict[int, int] = {}
    for i in range(n):
        node = up.get(i)
        path = []
        found = NOISE
        while node is not None:
            if node in memo:
                found = memo[node]
                break
            path.append(node)
            if node in chosen:
                found = cluster_id[node]
                break
            node = up.get(node)
        for p in path:
            memo[p] = found
        labels[i] = found
    return labels


def hdbscan_labels(
    points: np.ndarray,
    min_cluster_size: int,
    min_samples: int | None = None,
    allow_single_cluster: bool = False,
) -> np.ndarray:
    """Cluster labels per point, NOISE (-1) for outliers."""
    x = np.asarray(points, dtype=float)
    n = x.shape[0]
    min_samples = min_cluster_size if min_samples is None else min_samples
    if min_cluster_size < 2:
        raise ValueError("min_cluster_size must be >= 2")
    if min_samples < 1:
        raise ValueError("min_samples must be >= 1")
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if n == 1 or np.all(x == x[0]):
        return np.zeros(n, dtype=np.int64)
    if n < min_cluster_size:
        return np.full(n, NOISE, dtype=np.int64)
    dist = pairwise_distances(x)
    mr = mutual_reachability(dist, core_distances(dist, min_samples))
    del dist
    linkage = single_linkage(n, *prim_mst(mr))
    tree = condense_tree(linkage, min_cluster_size)
    return label_points(tree, select_clusters(tree, allow_single_cluster))
