"""Decayed author-file ownership and cosine kNN graphs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus.model import CommitRecord

SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class DecayConfig:
    half_life_days: float = 365.0

    def __post_init__(self) -> None:
        if not self.half_life_days > 0:
            raise ValueError("half_life_days must be positive")


@dataclass
class OwnershipMatrix:
    files: list[str]
    authors: list[str]
    weights: np.ndarray  # (n_files, n_authors)
    reference_time: float
    ignored_touches: int = 0
    corpus_hash: str | None = None

    def row(self, path: str) -> np.ndarray:
        return self.weights[self.files.index(path)]

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, f in enumerate(self.files):
                nz = np.nonzero(self.weights[i])[0]
                rec = {"file": f, "weights": {self.authors[j]: float(self.weights[i, j]) for j in nz}}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path, reference_time: float = 0.0) -> "OwnershipMatrix":
        rows = [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line]
        files = [r["file"] for r in rows]
        authors = sorted({a for r in rows for a in r["weights"]})
        col = {a: j for j, a in enumerate(authors)}
        w = np.zeros((len(files), len(authors)))
        for i, r in enumerate(rows):
            for a, v in r["weights"].items():
                w[i, col[a]] = v
        return cls(files, authors, w, reference_time)


def build_ownership_matrix(
    commits: Sequence[CommitRecord],
    files: Sequence[str],
    decay: DecayConfig | None = None,
    reference_time: float | None = None,
) -> OwnershipMatrix:
    """Sum ``0.5 ** (age_days / half_life)`` per (file, author) over commits."""
    decay = decay or DecayConfig()
    if reference_time is None:
        reference_time = max((c.timestamp for c in commits), default=0)
    latest = max((c.timestamp for c in commits), default=reference_time)
    if latest > reference_time:
        raise ValueError("reference_time precedes a commit timestamp")

    file_idx = {f: i for i, f in enumerate(files)}
    authors = sorted({c.author_id for c in commits})
    author_idx = {a: j for j, a in enumerate(authors)}
    w = np.zeros((len(files), len(authors)))
    ignored = 0
    for c in commits:
        age_days = (reference_time - c.timestamp) / SECONDS_PER_DAY
        contrib = 0.5 ** (age_days / decay.half_life_days)
        j = author_idx[c.author_id]
        for path in c.touched_files:
            i = file_idx.get(path)
            if i is None:
                ignored += 1
                continue
            w[i, j] += contrib
    return OwnershipMatrix(list(files), authors, w, float(reference_time), ignored)


def cosine_similarity(u, v) -> float:
    """Cosine of two vectors; 0.0 if either is the zero vector."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def normalize_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


@dataclass
class WeightedGraph:
    """Undirected weighted graph; edges stored once with ``src < dst``."""

    nodes: list[str]
    src: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    dst: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    weight: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def edge_dict(self) -> dict[tuple[int, int], float]:
        return {(int(a), int(b)): float(w) for a, b, w in zip(self.src, self.dst, self.weight)}

    @classmethod
    def from_edges(cls, nodes: Sequence[str], edges) -> "WeightedGraph":
        """Build from ``(i, j, w)`` triples; duplicate pairs keep the last weight."""
        d: dict[tuple[int, int], float] = {}
        for i, j, w in edges:
            if i == j:
                continue
            a, b = (i, j) if i < j else (j, i)
            d[(a, b)] = float(w)
        keys = sorted(d)
        return cls(
            list(nodes),
            np.array([k[0] for k in keys], dtype=np.int64),
            np.array([k[1] for k in keys], dtype=np.int64),
            np.array([d[k] for k in keys], dtype=float),
        )


def top_k_neighbors(vectors: np.ndarray, k: int, block: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    """Per-row top-k cosine neighbours (self excluded), ties by lower index.

    Returns ``(indices, sims)`` each of shape (n, min(k, n-1)).
    """
    x = normalize_rows(vectors)
    n = x.shape[0]
    kk = min(k, n - 1)
    if kk <= 0:
        return np.zeros((n, 0), dtype=np.int64), np.zeros((n, 0))
    idx_out = np.empty((n, kk), dtype=np.int64)
    sim_out = np.empty((n, kk))
    for start in range(0, n, block):
        stop = min(n, start + block)
        sims = x[start:stop] @ x.T
        sims = np.clip(sims, -1.0, 1.0)
        rows = np.arange(stop - start)
        sims[rows, np.arange(start, stop)] = -np.inf
        # stable sort on -sim keeps the lower index first among ties
        order = np.argsort(-sims, axis=1, kind="stable")[:, :kk]
        idx_out[start:stop] = order
        sim_out[start:stop] = np.take_along_axis(sims, order, axis=1)
    return idx_out, sim_out


def knn_graph(vectors: np.ndarray, nodes: Sequence[str], k: int = 20) -> WeightedGraph:
    """Union-symmetrized cosine kNN graph; non-positive edges are dropped."""
    if k < 1:
        raise ValueError("k must be >= 1")
    vectors = np.asarray(vectors, dtype=float)
    if vectors.shape[0] != len(nodes):
        raise ValueError("one vector per node required")
    if len(nodes) < 2:
        return WeightedGraph(list(nodes))
    idx, sims = top_k_neighbors(vectors, k)
    n = len(nodes)
    rows = np.repeat(np.arange(n), idx.shape[1])
    cols = idx.ravel()
    w = sims.ravel()
    keep = w > 0
    rows, cols, w = rows[keep], cols[keep], w[keep]
    a = np.minimum(rows, cols)
    b = np.maximum(rows, cols)
    key = a * n + b
    _, first = np.unique(key, return_index=True)
    return WeightedGraph(list(nodes), a[first], b[first], w[first])


def ownership_knn_graph(matrix: OwnershipMatrix, k: int = 20) -> WeightedGraph:
    return knn_graph(matrix.weights, matrix.files, k)
