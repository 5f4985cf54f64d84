"""Cluster-aligned example retrieval with combined scoring and random fallback."""

from __future__ import annotations

import hashlib
import json
import math
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .clustering.partition import NOISE, Partition
from .corpus.model import UNKNOWN_COMPONENT, Corpus, LoggingStatement
from .ownership import OwnershipMatrix, normalize_rows
from .semantic import EmbeddingSet

CLUSTER_MODES = ("semantic", "ownership", "multiplex")
BASELINE_MODES = ("zero_shot", "global_random", "doc_component")
RETRIEVAL_MODES = BASELINE_MODES + CLUSTER_MODES
INDEX_FILE = "index.json"


class IndexBuildError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreWeights:
    w_sem: float = 0.7
    w_own: float = 0.3

    def __post_init__(self) -> None:
        if self.w_sem < 0 or self.w_own < 0:
            raise ValueError("score weights must be non-negative")
        if abs(self.w_sem + self.w_own - 1.0) > 1e-9:
            raise ValueError(f"score weights must sum to 1, got {self.w_sem + self.w_own}")


def combined_score(cos_sem, cos_own, weights: ScoreWeights | None = None):
    """``w_sem * cos_sem + w_own * cos_own``; scalars or arrays."""
    w = weights or ScoreWeights()
    return w.w_sem * cos_sem + w.w_own * cos_own


@dataclass
class RetrievalResult:
    examples: list[tuple[LoggingStatement, float]]
    mode: str
    fallback_used: bool
    cluster_id: int | None
    latency_ms: float = 0.0
    unknown_file: bool = False
    partial: bool = False

    @property
    def ids(self) -> list[str]:
        return [s.id for s, _ in self.examples]


@dataclass
class _IVF:
    """Inverted-file cells over one cluster's files (spherical k-means)."""

    centroids: np.ndarray
    cells: list[np.ndarray]  # cluster-local file positions per cell

    def probe_order(self, q: np.ndarray) -> np.ndarray:
        return np.argsort(-(self.centroids @ q), kind="stable")


def _kmeans(x: np.ndarray, n_cells: int, rng: np.random.Generator, iterations: int = 10) -> _IVF:
    n = len(x)
    cent = x[rng.choice(n, size=n_cells, replace=False)].copy()
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iterations):
        assign = np.argmax(x @ cent.T, axis=1)
        for c in range(n_cells):
            members = x[assign == c]
            if len(members):
                cent[c] = members.sum(axis=0)
        cent = normalize_rows(cent)
    assign = np.argmax(x @ cent.T, axis=1)
    return _IVF(cent, [np.nonzero(assign == c)[0] for c in range(n_cells)])


def _top_k(neg: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest values; equal values keep index order."""
    if k <= 0:
        return np.zeros(0, dtype=np.int64)
    if len(neg) > k:
        kth = np.partition(neg, k - 1)[k - 1]
        cand = np.nonzero(neg <= kth)[0]  # every tie at the cut survives
    else:
        cand = np.arange(len(neg))
    return cand[np.argsort(neg[cand], kind="stable")][:k]


@dataclass
class _ClusterList:
    files: np.ndarray  # corpus file indices of the cluster's members
    stmts: np.ndarray  # pool statement indices, ascending id rank
    stmt_local: np.ndarray  # position in ``files`` of each statement's file
    ivf: _IVF | None = None
    sem: np.ndarray | None = None  # contiguous rows of the members, so scoring skips a gather
    own: np.ndarray | None = None


def _mode_vectors(sem: np.ndarray, own: np.ndarray, mode: str, w: ScoreWeights) -> np.ndarray:
    if mode == "semantic":
        return sem
    if mode == "ownership":
        return own
    # inner products on this concatenation equal the combined score
    return np.hstack([math.sqrt(w.w_sem) * sem, math.sqrt(w.w_own) * own])


def _align(files: Sequence[str], rows_files: Sequence[str], rows: np.ndarray) -> np.ndarray:
    pos = {f: i for i, f in enumerate(rows_files)}
    out = np.zeros((len(files), rows.shape[1] if rows.ndim == 2 else 0))
    for i, f in enumerate(files):
        j = pos.get(f)
        if j is not None:
            out[i] = rows[j]
    return out


def _sha(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


class RetrievalIndex:
    """Read-only lookup structure; build with :func:`build_index`."""

    def __init__(
        self,
        corpus: Corpus,
        partitions: Mapping[str, Partition],
        sem: np.ndarray,
        own: np.ndarray,
        pool: Sequence[int],
        seed: int,
        weights: ScoreWeights,
        search: str,
        nprobe: int,
        ivf_min_files: int,
        bindings: dict,
        partial_fill: bool,
    ):
        self.corpus = corpus
        self.partitions = dict(partitions)
        self.seed = seed
        self.weights = weights
        self.search = search
        self.nprobe = nprobe
        self.ivf_min_files = ivf_min_files
        self.partial_fill = partial_fill
        self.bindings = bindings
        self._file_idx = {f.path: i for i, f in enumerate(corpus.files)}
        self._sem = sem
        self._own = own
        stmts = corpus.statements
        self.pool = np.array(sorted(pool, key=lambda i: stmts[i].id), dtype=np.int64)
        self.pool_statements = [stmts[i] for i in self.pool]
        # pool-local arrays; pool order is ascending statement id
        self._pool_file = np.array([self._file_idx[s.file] for s in self.pool_statements], dtype=np.int64)
        self._mode_vecs = {m: _mode_vectors(sem, own, m, weights) for m in CLUSTER_MODES}
        self._labels: dict[str, np.ndarray] = {}
        self._clusters: dict[str, dict[int, _ClusterList]] = {}
        rng = np.random.default_rng(seed)
        for mode, part in self.partitions.items():
            labels = np.array([part.label_of(f.path) for f in corpus.files], dtype=np.int64)
            self._add_mode(mode, labels, rng, ivf_min_files)
        if corpus.has_components():
            names = sorted({f.component_label for f in corpus.files} - {UNKNOWN_COMPONENT})
            cid = {c: i for i, c in enumerate(names)}
            labels = np.array([cid.get(f.component_label, NOISE) for f in corpus.files], dtype=np.int64)
            self._add_mode("doc_component", labels, None, ivf_min_files)

    def _add_mode(self, mode: str, labels: np.ndarray, rng, ivf_min_files: int) -> None:
        self._labels[mode] = labels
        clusters: dict[int, _ClusterList] = {}
        stmt_labels = labels[self._pool_file] if len(self._pool_file) else np.zeros(0, dtype=np.int64)
        for c in np.unique(labels[labels != NOISE]):
            files = np.nonzero(labels == c)[0]
            local = {int(f): i for i, f in enumerate(files)}
            members = np.nonzero(stmt_labels == c)[0]
            stmt_local = np.array([local[int(self._pool_file[p])] for p in members], dtype=np.int64)
            cl = _ClusterList(files, members, stmt_local)
            if mode in ("semantic", "multiplex"):
                cl.sem = np.ascontiguousarray(self._sem[files])
            if mode in ("ownership", "multiplex"):
                cl.own = np.ascontiguousarray(self._own[files])
            if rng is not None and self.search == "ivf" and len(files) >= ivf_min_files:
                x = normalize_rows(self._mode_vecs[mode][files])
                cl.ivf = _kmeans(x, max(1, int(round(math.sqrt(len(files))))), rng)
            clusters[int(c)] = cl
        self._clusters[mode] = clusters

    # -- inspection -------------------------------------------------------
    @property
    def modes(self) -> list[str]:
        return ["zero_shot", "global_random"] + list(self._clusters)

    def cluster_of(self, path: str, mode: str) -> int:
        i = self._file_idx.get(path)
        if i is None or mode not in self._labels:
            return NOISE
        return int(self._labels[mode][i])

    def cluster_lists(self, mode: str) -> dict[int, list[str]]:
        return {c: [self.pool_statements[p].id for p in cl.stmts] for c, cl in self._clusters[mode].items()}

    def fallback_pool_ids(self) -> list[str]:
        return [s.id for s in self.pool_statements]

    # -- retrieval --------------------------------------------------------
    def _rng(self, target: LoggingStatement) -> np.random.Generator:
        # not keyed on mode: a fallback draws the same sample as global_random
        return np.random.default_rng([self.seed, zlib.crc32(target.id.encode())])

    def _random(self, target: LoggingStatement, k: int, within: np.ndarray | None = None,
                exclude: np.ndarray | None = None) -> list[tuple[int, float]]:
        """Uniform sample without replacement, seeded by (index seed, target id)."""
        cand = np.arange(len(self.pool)) if within is None else within
        cand = cand[self._pool_file[cand] != self._file_idx.get(target.file, -1)]
        if exclude is not None and len(exclude):
            cand = np.setdiff1d(cand, exclude, assume_unique=True)
        take = min(k, len(cand))
        if take == 0:
            return []
        picked = self._rng(target).choice(cand, size=take, replace=False)
        return [(int(p), 0.0) for p in picked]

    def _rank(self, mode: str, cl: _ClusterList, fi: int, k: int, approximate: bool) -> list[tuple[int, float]]:
        keep = self._pool_file[cl.stmts] != fi
        stmts, local = cl.stmts[keep], cl.stmt_local[keep]
        if approximate and cl.ivf is not None:
            probed = self._probe(cl, fi, mode, stmts, local, k)
            stmts, local = stmts[probed], local[probed]
        if mode == "semantic":
            fs = cl.sem @ self._sem[fi]
        elif mode == "ownership":
            fs = cl.own @ self._own[fi]
        else:
            fs = combined_score(cl.sem @ self._sem[fi], cl.own @ self._own[fi], self.weights)
        neg = -fs[local]
        return [(int(stmts[o]), float(-neg[o])) for o in _top_k(neg, k)]

    def _probe(self, cl: _ClusterList, fi: int, mode: str, stmts, local, k: int) -> np.ndarray:
        q = self._mode_vecs[mode][fi]
        order = cl.ivf.probe_order(q)
        chosen = np.zeros(len(cl.files), dtype=bool)
        n_probe = min(self.nprobe, len(order))
        for c in order[:n_probe]:
            chosen[cl.ivf.cells[c]] = True
        mask = chosen[local]
        for c in order[n_probe:]:
            if mask.sum() >= k:
                break
            chosen[cl.ivf.cells[c]] = True
            mask = chosen[local]
        return np.nonzero(mask)[0]

    def retrieve(self, target: LoggingStatement, mode: str, k: int = 5, approximate: bool | None = None) -> RetrievalResult:
        if mode not in RETRIEVAL_MODES:
            raise ValueError(f"unknown retrieval mode {mode!r}")
        if k < 0:
            raise ValueError("k must be non-negative")
        t0 = time.perf_counter()
        approximate = self.search == "ivf" if approximate is None else approximate
        fi = self._file_idx.get(target.file)
        unknown = fi is None
        result = RetrievalResult([], mode, False, None, unknown_file=unknown)
        if mode == "global_random":
            result.examples = self._materialize(self._random(target, k))
        elif mode != "zero_shot":
            if mode not in self._clusters:
                raise ValueError(f"mode {mode!r} unavailable in this index")
            c = NOISE if unknown else int(self._labels[mode][fi])
            result.cluster_id = c
            cl = self._clusters[mode].get(c)
            n_cand = 0 if cl is None else int((self._pool_file[cl.stmts] != fi).sum())
            if cl is None or n_cand < k:
                result.fallback_used = True
                if cl is not None and n_cand and self.partial_fill:
                    ranked = self._cluster_examples(mode, cl, fi, n_cand, False, target)
                    taken = np.array([p for p, _ in ranked], dtype=np.int64)
                    fill = self._random(target, k - n_cand, exclude=taken)
                    result.examples = self._materialize(ranked) + self._materialize(fill)
                    result.partial = True
                else:
                    result.examples = self._materialize(self._random(target, k))
            else:
                result.examples = self._materialize(self._cluster_examples(mode, cl, fi, k, approximate, target))
        result.latency_ms = (time.perf_counter() - t0) * 1000.0
        return result

    def _materialize(self, ranked: list[tuple[int, float]]) -> list[tuple[LoggingStatement, float]]:
        return [(self.pool_statements[p], s) for p, s in ranked]

    def _cluster_examples(self, mode, cl, fi, k, approximate, target) -> list[tuple[int, float]]:
        if mode == "doc_component":
            return self._random(target, k, within=cl.stmts)
        return self._rank(mode, cl, fi, k, approximate)

    # -- persistence ------------------------------------------------------
    def save(self, directory: str | Path) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        meta = {
            "bindings": self.bindings,
            "seed": self.seed,
            "weights": {"w_sem": self.weights.w_sem, "w_own": self.weights.w_own},
            "search": self.search,
            "nprobe": self.nprobe,
            "ivf_min_files": self.ivf_min_files,
            "partial_fill": self.partial_fill,
            "pool": self.fallback_pool_ids(),
            "cluster_sizes": {m: {str(c): len(cl.stmts) for c, cl in cls.items()} for m, cls in self._clusters.items()},
        }
        path = d / INDEX_FILE
        path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return path


def artifact_bindings(
    corpus: Corpus,
    partitions: Mapping[str, Partition],
    embeddings: EmbeddingSet | None,
    ownership: OwnershipMatrix | None,
) -> dict:
    return {
        "corpus_hash": corpus.hash,
        "partitions": {m: _sha(p.to_json()) for m, p in sorted(partitions.items())},
        "embeddings": None if embeddings is None else embeddings.provider_id,
        "ownership_authors": None if ownership is None else len(ownership.authors),
    }


def _check_artifacts(corpus, partitions, embeddings, ownership) -> None:
    paths = set(corpus.paths)
    chash = corpus.hash if corpus.files else None
    for mode, part in partitions.items():
        if mode not in CLUSTER_MODES:
            raise IndexBuildError(f"unknown partition mode {mode!r}")
        if part.corpus_hash is not None and chash is not None and part.corpus_hash != chash:
            raise IndexBuildError(f"partition.{mode} was built over a different corpus")
        if set(part.files) != paths:
            raise IndexBuildError(f"partition.{mode} does not cover the corpus files")
    for name, art in (("embeddings", embeddings), ("ownership", ownership)):
        if art is None:
            continue
        h = getattr(art, "corpus_hash", None)
        if h is not None and chash is not None and h != chash:
            raise IndexBuildError(f"{name} were built over a different corpus")
        if not set(art.files) <= paths or (corpus.files and not set(art.files)):
            raise IndexBuildError(f"{name} files do not match the corpus")


def build_index(
    corpus: Corpus,
    partitions: Mapping[str, Partition],
    embeddings: EmbeddingSet | None = None,
    ownership: OwnershipMatrix | None = None,
    seed: int = 0,
    pool_ids: Sequence[str] | None = None,
    weights: ScoreWeights | None = None,
    search: str = "exact",
    nprobe: int = 8,
    ivf_min_files: int = 256,
    partial_fill: bool = False,
) -> RetrievalIndex:
    """Materialize per-mode cluster candidate lists over the retrieval pool.

    ``pool_ids`` restricts candidates (and the fallback pool) to a subset of
    statements, e.g. the retrieval side of a train/test split.
    """
    if search not in {"exact", "ivf"}:
        raise ValueError("search must be 'exact' or 'ivf'")
    _check_artifacts(corpus, partitions, embeddings, ownership)
    paths = corpus.paths
    sem = np.zeros((len(paths), 0))
    own = np.zeros((len(paths), 0))
    if embeddings is not None:
        sem = normalize_rows(_align(paths, embeddings.files, np.asarray(embeddings.vectors, dtype=float)))
    if ownership is not None:
        own = normalize_rows(_align(paths, ownership.files, np.asarray(ownership.weights, dtype=float)))
    if pool_ids is None:
        pool = range(len(corpus.statements))
    else:
        wanted = set(pool_ids)
        pool = [i for i, s in enumerate(corpus.statements) if s.id in wanted]
    return RetrievalIndex(
        corpus, partitions, sem, own, list(pool), seed, weights or ScoreWeights(), search, nprobe,
        ivf_min_files, artifact_bindings(corpus, partitions, embeddings, ownership), partial_fill,
    )


def load_index(
    directory: str | Path,
    corpus: Corpus,
    partitions: Mapping[str, Partition],
    embeddings: EmbeddingSet | None = None,
    ownership: OwnershipMatrix | None = None,
) -> RetrievalIndex:
    """Rebuild a saved index, refusing if any bound artifact changed."""
    path = Path(directory) / INDEX_FILE
    if not path.exists():
        raise FileNotFoundError(f"no index at {path}; run `levelscope index` first")
    meta = json.loads(path.read_text(encoding="utf-8"))
    current = artifact_bindings(corpus, partitions, embeddings, ownership)
    if current != meta["bindings"]:
        stale = sorted(k for k in current if current[k] != meta["bindings"].get(k))
        raise IndexBuildError(f"index is stale ({', '.join(stale)} changed); rerun `levelscope index`")
    return build_index(
        corpus, partitions, embeddings, ownership, seed=meta["seed"], pool_ids=meta["pool"],
        weights=ScoreWeights(**meta["weights"]), search=meta["search"], nprobe=meta["nprobe"],
        ivf_min_files=meta.get("ivf_min_files", 256), partial_fill=meta.get("partial_fill", False),
    )


@dataclass
class AnnCheckReport:
    n: int
    mismatches: int
    per_mode: dict[str, float] = field(default_factory=dict)

    @property
    def mismatch_rate(self) -> float:
        return self.mismatches / self.n if self.n else 0.0


def exact_vs_ann_check(index: RetrievalIndex, sample: Sequence[LoggingStatement], k: int = 5,
                       modes: Sequence[str] = CLUSTER_MODES) -> AnnCheckReport:
    """Compare top-k id sets of exhaustive and inverted-file search."""
    total = bad = 0
    per_mode = {}
    for mode in modes:
        if mode not in index._clusters:
            continue
        m_bad = 0
        for t in sample:
            exact = set(index.retrieve(t, mode, k, approximate=False).ids)
            approx = set(index.retrieve(t, mode, k, approximate=True).ids)
            m_bad += exact != approx
        per_mode[mode] = m_bad / len(sample) if sample else 0.0
        total += len(sample)
        bad += m_bad
    return AnnCheckReport(total, bad, per_mode)
