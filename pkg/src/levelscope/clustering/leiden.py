"""Leiden community detection for single and multiplex weighted graphs.

The optimised quality is the layer-weighted mean of per-layer Newman-Girvan
modularities with resolution ``gamma`` on the null term::

    Q = sum_l lam_l / Lam * Q_l,   Q_l = sum_c [ L_c / m_l - gamma * (K_c / 2 m_l) ** 2 ]

Internally every move gain is expressed in edge-weight units (``Q`` scaled by
the mean layer weight total) so the refinement temperature behaves the same
for small and large graphs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ..ownership import WeightedGraph

THETA = 0.01


def _adjacency(g: WeightedGraph) -> sp.csr_matrix:
    keep = g.weight > 0
    s, d, w = g.src[keep], g.dst[keep], g.weight[keep]
    a = sp.coo_matrix((np.r_[w, w], (np.r_[s, d], np.r_[d, s])), shape=(g.n, g.n))
    return a.tocsr()


@dataclass
class _Level:
    """One (possibly aggregated) graph level for the optimiser."""

    adj: sp.csr_matrix  # combined, layer-scaled weights; no self loops
    strength: np.ndarray  # (n_layers, n) node strengths per layer
    null: np.ndarray  # (n_layers,) null-model coefficient per layer

    @property
    def n(self) -> int:
        return self.adj.shape[0]


def _prepare(graphs: Sequence[WeightedGraph], layer_weights: Sequence[float], gamma: float) -> _Level | None:
    n = graphs[0].n
    active = []
    for g, lam in zip(graphs, layer_weights):
        if g.n != n:
            raise ValueError("layers must share one node set")
        a = _adjacency(g)
        m = a.sum() / 2.0
        if lam > 0 and m > 0:
            active.append((a, float(lam), float(m)))
    if not active:
        return None
    lam_total = sum(lam for _, lam, _ in active)
    m_ref = float(np.mean([m for _, _, m in active]))
    combined = sp.csr_matrix((n, n))
    strengths, nulls = [], []
    for a, lam, m in active:
        scale = (lam / lam_total) * (m_ref / m)
        combined = combined + a * scale
        strengths.append(np.asarray(a.sum(axis=1)).ravel())
        nulls.append(gamma * (lam / lam_total) * m_ref / (2.0 * m * m))
    combined = combined.tocsr()
    combined.sort_indices()
    return _Level(combined, np.vstack(strengths), np.array(nulls))


def _neighbor_weights(level: _Level, v: int, membership: np.ndarray) -> dict[int, float]:
    adj = level.adj
    lo, hi = adj.indptr[v], adj.indptr[v + 1]
    out: dict[int, float] = {}
    for u, w in zip(adj.indices[lo:hi], adj.data[lo:hi]):
        c = int(membership[u])
        out[c] = out.get(c, 0.0) + float(w)
    return out


def _move_nodes_fast(level: _Level, membership: np.ndarray, rng: np.random.Generator) -> bool:
    """Queue-based local moving. Mutates ``membership``; returns True if any node moved."""
    n = level.n
    n_layers = level.strength.shape[0]
    totals = np.zeros((n_layers, n))
    for l in range(n_layers):
        np.add.at(totals[l], membership, level.strength[l])
    counts = np.bincount(membership, minlength=n)
    empty = [c for c in range(n - 1, -1, -1) if counts[c] == 0]

    order = rng.permutation(n)
    queue = deque(int(v) for v in order)
    queued = np.ones(n, dtype=bool)
    moved = False
    adj = level.adj
    while queue:
        v = queue.popleft()
        queued[v] = False
        cur = int(membership[v])
        sv = level.strength[:, v]
        totals[:, cur] -= sv
        counts[cur] -= 1
        nw = _neighbor_weights(level, v, membership)
        penalty = level.null * sv
        best = cur
        best_gain = nw.get(cur, 0.0) - float(penalty @ totals[:, cur])
        for c in sorted(nw):
            if c == cur:
                continue
            gain = nw[c] - float(penalty @ totals[:, c])
            if gain > best_gain:
                best, best_gain = c, gain
        if best_gain < 0.0:
            if counts[cur] == 0:
                best = cur
            else:
                best = empty.pop()
        if counts[cur] == 0 and best != cur:
            empty.append(cur)
        membership[v] = best
        totals[:, best] += sv
        counts[best] += 1
        if best != cur:
            moved = True
            lo, hi = adj.indptr[v], adj.indptr[v + 1]
            for u in adj.indices[lo:hi]:
                u = int(u)
                if not queued[u] and membership[u] != best:
                    queued[u] = True
                    queue.append(u)
    return moved


def _refine(level: _Level, membership: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Merge singletons within each community into well-connected sub-communities."""
    n = level.n
    adj = level.adj
    refined = np.arange(n)
    ref_tot = level.strength.copy()  # per refined community, per layer
    ref_size = np.ones(n, dtype=np.int64)
    comm_tot = np.zeros((level.strength.shape[0], n))
    for l in range(level.strength.shape[0]):
        np.add.at(comm_tot[l], membership, level.strength[l])

    # ext[r]: combined weight from refined community r to the rest of its community
    ext = np.zeros(n)
    for v in range(n):
        lo, hi = adj.indptr[v], adj.indptr[v + 1]
        nb = adj.indices[lo:hi]
        ext[v] = float(adj.data[lo:hi][membership[nb] == membership[v]].sum())

    def well_connected(r: int, c: int) -> bool:
        t = ref_tot[:, r]
        return ext[r] >= float(level.null @ (t * (comm_tot[:, c] - t))) - 1e-12

    for v in rng.permutation(n):
        v = int(v)
        c = int(membership[v])
        if ref_size[refined[v]] != 1 or not well_connected(v, c):
            continue
        lo, hi = adj.indptr[v], adj.indptr[v + 1]
        to_ref: dict[int, float] = {}
        for u, w in zip(adj.indices[lo:hi], adj.data[lo:hi]):
            if membership[u] == c and u != v:
                r = int(refined[u])
                to_ref[r] = to_ref.get(r, 0.0) + float(w)
        sv = level.strength[:, v]
        penalty = level.null * sv
        cands, gains = [], []
        for r in sorted(to_ref):
            if not well_connected(r, c):
                continue
            gain = to_ref[r] - float(penalty @ ref_tot[:, r])
            if gain >= 0:
                cands.append(r)
                gains.append(gain)
        if not cands:
            continue
        g = np.array(gains) / THETA
        p = np.exp(g - g.max())
        choice = cands[int(rng.choice(len(cands), p=p / p.sum()))]
        old = refined[v]
        refined[v] = choice
        ext[choice] = ext[choice] + ext[old] - 2.0 * to_ref[choice]
        ref_tot[:, choice] += ref_tot[:, old]
        ref_tot[:, old] = 0.0
        ref_size[choice] += 1
        ref_size[old] = 0
    return refined


def _compact(labels: np.ndarray) -> np.ndarray:
    _, inv = np.unique(labels, return_inverse=True)
    return inv.astype(np.int64)


def _aggregate(level: _Level, refined: np.ndarray) -> _Level:
    k = int(refined.max()) + 1
    p = sp.csr_matrix((np.ones(level.n), (np.arange(level.n), refined)), shape=(level.n, k))
    agg = (p.T @ level.adj @ p).tocsr()
    agg.setdiag(0.0)
    agg.eliminate_zeros()
    agg.sort_indices()
    strength = np.zeros((level.strength.shape[0], k))
    for l in range(level.strength.shape[0]):
        np.add.at(strength[l], refined, level.strength[l])
    return _Level(agg, strength, level.null)


def _leiden_pass(base: _Level, membership: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One full Leiden run starting from ``membership`` on the base level."""
    level = base
    part = membership.copy()
    # maps base nodes to nodes of the current level
    node_of = np.arange(base.n)
    while True:
        _move_nodes_fast(level, part, rng)
        part = _compact(part)
        if part.max() + 1 == level.n:
            break
        refined = _compact(_refine(level, part, rng))
        agg_part = np.zeros(int(refined.max()) + 1, dtype=np.int64)
        agg_part[refined] = part
        node_of = refined[node_of]
        level = _aggregate(level, refined)
        part = agg_part
    return _compact(part[node_of])


def split_disconnected(adj: sp.csr_matrix, labels: np.ndarray) -> np.ndarray:
    """Split every community into the connected components it induces."""
    out = labels.copy()
    next_id = int(labels.max()) + 1 if len(labels) else 0
    for c in np.unique(labels):
        members = np.nonzero(labels == c)[0]
        if len(members) < 2:
            continue
        sub = adj[members][:, members]
        k, comp = connected_components(sub, directed=False)
        if k > 1:
            for j in range(1, k):
                out[members[comp == j]] = next_id
                next_id += 1
    return _compact(out)


def leiden_multiplex_labels(
    graphs: Sequence[WeightedGraph],
    layer_weights: Sequence[float] | None = None,
    resolution: float = 1.0,
    seed: int = 0,
    max_iterations: int = 10,
) -> np.ndarray:
    """Community label per node maximising the layer-weighted modularity."""
    if not graphs:
        raise ValueError("at least one layer required")
    if resolution <= 0:
        raise ValueError("resolution must be > 0")
    n = graphs[0].n
    layer_weights = [1.0] * len(graphs) if layer_weights is None else list(layer_weights)
    if len(layer_weights) != len(graphs):
        raise ValueError("one weight per layer required")
    level = _prepare(graphs, layer_weights, resolution)
    if level is None:
        return np.arange(n, dtype=np.int64)
    rng = np.random.default_rng(seed)
    membership = np.arange(n, dtype=np.int64)
    for _ in range(max_iterations):
        new = _leiden_pass(level, membership, rng)
        same = np.array_equal(_canonical(new), _canonical(membership))
        membership = new
        if same:
            break
    return _canonical(split_disconnected(level.adj, membership))


def _canonical(labels: np.ndarray) -> np.ndarray:
    """Relabel by first appearance so equal partitions compare equal."""
    mapping: dict[int, int] = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        out[i] = mapping.setdefault(int(lab), len(mapping))
    return out


def leiden_labels(g: WeightedGraph, resolution: float = 1.0, seed: int = 0) -> np.ndarray:
    return leiden_multiplex_labels([g], [1.0], resolution, seed)


def modularity(g: WeightedGraph, labels: Sequence[int], resolution: float = 1.0) -> float:
    """Weighted Newman-Girvan modularity; negative labels count as singletons."""
    labels = np.asarray(labels, dtype=np.int64).copy()
    noise = labels < 0
    if noise.any():
        labels[noise] = labels.max(initial=-1) + 1 + np.arange(int(noise.sum()))
    keep = g.weight > 0
    s, d, w = g.src[keep], g.dst[keep], g.weight[keep]
    m = float(w.sum())
    if m == 0:
        return 0.0
    k = np.zeros(g.n)
    np.add.at(k, s, w)
    np.add.at(k, d, w)
    same = labels[s] == labels[d]
    internal = np.bincount(labels[s[same]], weights=w[same], minlength=labels.max() + 1)
    tot = np.bincount(labels, weights=k, minlength=labels.max() + 1)
    return float((internal / m).sum() - resolution * ((tot / (2 * m)) ** 2).sum())


def multiplex_modularity(
    graphs: Sequence[WeightedGraph],
    labels: Sequence[int],
    layer_weights: Sequence[float] | None = None,
    resolution: float = 1.0,
) -> float:
    layer_weights = [1.0] * len(graphs) if layer_weights is None else list(layer_weights)
    pairs = [(g, lam) for g, lam in zip(graphs, layer_weights) if lam > 0 and g.weight[g.weight > 0].size]
    if not pairs:
        return 0.0
    total = sum(lam for _, lam in pairs)
    return float(sum(lam * modularity(g, labels, resolution) for g, lam in pairs) / total)
