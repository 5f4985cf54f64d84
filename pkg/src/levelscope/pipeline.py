"""Artifact steps over a corpus directory, shared by the CLI and the service.

Layout of a corpus directory::

    manifest.json, *.jsonl     corpus records (``ingest``)
    config.json                configuration used at ingest
    ownership.jsonl            decayed ownership rows (``cluster``)
    embeddings.npz             full and reduced file embeddings (``cluster``)
    partition.<mode>.json      one per clustering mode (``cluster``)
    index/index.json           retrieval index bindings (``index``)
    eval/report.json           evaluation report (``evaluate``)
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .clustering.community import build_layer, tune_resolution
from .clustering.density import bootstrap_stability, hdbscan_grid_search
from .clustering.partition import MODES, NOISE, Partition, PartitionQuality
from .config import Config, dump_config, load_config
from .corpus.extract import mask_snippet
from .corpus.model import MASK, Corpus, LoggingStatement
from .corpus.scan import scan_repo
from .corpus.store import load_corpus, read_manifest, store_corpus
from .evaluation.experiment import ExperimentPlan, majority_level, run_experiment, write_report
from .evaluation.stability import StabilityReport, temporal_stability
from .ownership import OwnershipMatrix, build_ownership_matrix, ownership_knn_graph
from .predictor import LLMClient, build_prompt, make_client, predict_level
from .retrieval import RetrievalIndex, build_index, load_index
from .semantic import EmbeddingCache, EmbeddingSet, embed_sources, make_provider, reduce

log = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
OWNERSHIP_FILE = "ownership.jsonl"
EMBEDDINGS_FILE = "embeddings.npz"
INDEX_DIR = "index"
EVAL_DIR = "eval"


class MissingArtifact(FileNotFoundError):
    """A prerequisite artifact is absent; the message names the command that builds it."""


class UnknownFile(LookupError):
    pass


class BadRequest(ValueError):
    pass


def partition_path(d: Path, mode: str) -> Path:
    return d / f"partition.{mode}.json"


def corpus_config(d: str | Path, override: str | Path | None = None) -> Config:
    """An explicit config file wins; otherwise the one saved at ingest."""
    if override is not None:
        return load_config(override)
    saved = Path(d) / CONFIG_FILE
    return load_config(saved if saved.exists() else None)


def _load_corpus(d: Path) -> Corpus:
    if not (d / "manifest.json").exists():
        raise MissingArtifact(f"no corpus at {d}; run `levelscope ingest --repo <repo> --out {d}` first")
    corpus = load_corpus(d)
    corpus._hash = read_manifest(d)["corpus_hash"]
    return corpus


def ingest(repo: str | Path, out: str | Path, cfg: Config | None = None) -> dict:
    cfg = cfg or load_config()
    corpus = scan_repo(repo, cfg.corpus.build())
    d = Path(out)
    h = store_corpus(corpus, d)
    dump_config(cfg, d / CONFIG_FILE)
    return {
        "corpus_hash": h,
        "files": len(corpus.files),
        "statements": len(corpus.statements),
        "commits": len(corpus.commits),
        "unreadable": len(corpus.report.unreadable),
    }


# -- feature artifacts -------------------------------------------------------


def ownership_matrix(corpus: Corpus, cfg: Config) -> OwnershipMatrix:
    m = build_ownership_matrix(corpus.commits, corpus.paths, cfg.ownership.decay())
    m.corpus_hash = corpus.hash
    return m


def embeddings(corpus: Corpus, cfg: Config, cache_dir: Path | None = None) -> EmbeddingSet:
    provider = make_provider(cfg.embedding.build())
    cache = EmbeddingCache(cache_dir) if cache_dir is not None else None
    hashes = {f.path: f.content_hash for f in corpus.files}
    emb = embed_sources(corpus.paths, corpus.sources, provider, content_hashes=hashes, cache=cache,
                        max_in_flight=cfg.embedding.max_in_flight)
    emb.corpus_hash = corpus.hash
    target = min(cfg.reducer.target_dim, len(corpus.files) - 1, emb.dim - 1)
    if target >= 1:
        emb = reduce(emb, target, cfg.reducer.build(cfg.seed))
    return emb


def _load_ownership(d: Path, corpus: Corpus) -> OwnershipMatrix | None:
    path = d / OWNERSHIP_FILE
    if not path.exists():
        return None
    m = OwnershipMatrix.from_jsonl(path)
    m.corpus_hash = corpus.hash
    return m


def _load_embeddings(d: Path) -> EmbeddingSet | None:
    path = d / EMBEDDINGS_FILE
    return EmbeddingSet.load(path) if path.exists() else None


# -- clustering --------------------------------------------------------------


def cluster_semantic(corpus: Corpus, emb: EmbeddingSet, cfg: Config) -> Partition:
    """Grid-searched HDBSCAN over reduced embeddings; failed embeddings are NOISE."""
    files = corpus.paths
    failed = set(emb.failed)
    keep = np.array([f not in failed for f in emb.files], dtype=bool)
    points = emb.reduced if emb.reduced is not None else emb.vectors
    labels = np.full(len(files), NOISE, dtype=np.int64)
    params: dict = {"failed_embeddings": len(failed)}
    quality = PartitionQuality()
    if keep.sum() >= 2:
        grid = hdbscan_grid_search(points[keep], int(keep.sum()))
        labels[keep] = grid.partition.labels
        quality = grid.partition.quality
        params.update(grid.partition.params)
        iters = cfg.clustering.bootstrap_iterations
        if iters and not grid.degenerate:
            boot = bootstrap_stability(points[keep], grid.best_params, iters, cfg.seed)
            params["bootstrap_ari_mean"] = boot.mean
            params["bootstrap_ari_std"] = boot.std
    return Partition(files, labels, "semantic", quality, params, cfg.seed, corpus.hash)


def cluster_ownership(corpus: Corpus, own: OwnershipMatrix, cfg: Config) -> Partition:
    c = cfg.clustering
    graph = ownership_knn_graph(own, cfg.ownership.k)
    res = tune_resolution(graph, c.resolutions, c.target_modularity, cfg.seed,
                          min_community_size=c.min_community_size, mode="ownership")
    res.partition.corpus_hash = corpus.hash
    return res.partition


def cluster_multiplex(corpus: Corpus, emb: EmbeddingSet, own: OwnershipMatrix, cfg: Config) -> Partition:
    c = cfg.clustering
    files = corpus.paths
    sem_layer = build_layer(emb.vectors, files, c.semantic_k)
    own_layer = build_layer(own.weights, files, cfg.ownership.k)
    res = tune_resolution([sem_layer, own_layer], c.resolutions, c.target_modularity, cfg.seed,
                          layer_weights=c.layer_weights, min_community_size=c.min_community_size,
                          mode="multiplex")
    res.partition.corpus_hash = corpus.hash
    return res.partition


def cluster(d: str | Path, mode: str = "all", cfg: Config | None = None) -> dict[str, Partition]:
    d = Path(d)
    cfg = cfg or corpus_config(d)
    modes = list(MODES) if mode == "all" else [mode]
    if any(m not in MODES for m in modes):
        raise BadRequest(f"unknown mode {mode!r}; expected one of {', '.join(MODES)} or all")
    corpus = _load_corpus(d)
    own = emb = None
    if {"ownership", "multiplex"} & set(modes):
        own = ownership_matrix(corpus, cfg)
        own.to_jsonl(d / OWNERSHIP_FILE)
    if {"semantic", "multiplex"} & set(modes):
        emb = embeddings(corpus, cfg, d / "cache" / "embeddings")
        emb.save(d / EMBEDDINGS_FILE)
    out = {}
    for m in modes:
        if m == "semantic":
            part = cluster_semantic(corpus, emb, cfg)
        elif m == "ownership":
            part = cluster_ownership(corpus, own, cfg)
        else:
            part = cluster_multiplex(corpus, emb, own, cfg)
        part.save(partition_path(d, m))
        out[m] = part
    return out


def load_partitions(d: Path, corpus: Corpus) -> dict[str, Partition]:
    parts = {}
    for m in MODES:
        p = partition_path(d, m)
        if p.exists():
            parts[m] = Partition.load(p)
    if not parts:
        raise MissingArtifact(f"no partitions in {d}; run `levelscope cluster --corpus {d} --mode all` first")
    return parts


# -- index -------------------------------------------------------------------


def _artifacts(d: Path):
    corpus = _load_corpus(d)
    parts = load_partitions(d, corpus)
    return corpus, parts, _load_embeddings(d), _load_ownership(d, corpus)


def index(d: str | Path, cfg: Config | None = None) -> RetrievalIndex:
    d = Path(d)
    cfg = cfg or corpus_config(d)
    corpus, parts, emb, own = _artifacts(d)
    r = cfg.retrieval
    idx = build_index(corpus, parts, emb, own, cfg.seed, weights=r.weights(), search=r.search,
                      nprobe=r.nprobe, partial_fill=r.partial_fill)
    idx.save(d / INDEX_DIR)
    return idx


# -- prediction --------------------------------------------------------------


def _cluster_json(c: int | None):
    if c is None:
        return None
    return "NOISE" if c == NOISE else int(c)


class Engine:
    """Loaded artifacts plus a client; one prediction code path for CLI and HTTP."""

    def __init__(self, corpus: Corpus, idx: RetrievalIndex, client: LLMClient, cfg: Config):
        self.corpus = corpus
        self.index = idx
        self.client = client
        self.cfg = cfg
        self.scale = corpus.scale
        self.fallback_level = majority_level([s.level for s in corpus.statements], self.scale)
        self._by_location = {(s.file, s.line): s for s in corpus.statements}
        self._known = set(corpus.paths)

    @classmethod
    def load(cls, d: str | Path, cfg: Config | None = None, client: LLMClient | None = None) -> "Engine":
        d = Path(d)
        cfg = cfg or corpus_config(d)
        corpus, parts, emb, own = _artifacts(d)
        if not (d / INDEX_DIR / "index.json").exists():
            raise MissingArtifact(f"no index in {d}; run `levelscope index --corpus {d}` first")
        idx = load_index(d / INDEX_DIR, corpus, parts, emb, own)
        truth = {s.id: s.level for s in corpus.statements}
        return cls(corpus, idx, client or make_client(cfg.llm.build(), truth), cfg)

    @property
    def corpus_hash(self) -> str:
        return self.corpus.hash

    def default_mode(self) -> str:
        for m in ("multiplex", "semantic", "ownership"):
            if m in self.index.partitions:
                return m
        return "global_random"

    def target(self, file: str, line: int | None = None, message: str | None = None,
               context: str | None = None) -> LoggingStatement:
        if line is not None and (file, line) in self._by_location and context is None:
            return self._by_location[(file, line)]
        if file in self._known and line is not None and message is None and context is None:
            raise BadRequest(f"no logging statement at {file}:{line}")
        if context is not None:
            masked = mask_snippet(context, self.scale, self.cfg.corpus.logger_pattern)
        elif message is not None:
            masked = f'LOG.{MASK}("{message}");'
        else:
            masked = ""
        sid = f"{file}#L{line}" if line is not None else f"{file}#new"
        return LoggingStatement(sid, file, line or 0, self.fallback_level, message or "", (0, 0), masked)

    def predict(self, file: str, line: int | None = None, message: str | None = None,
                context: str | None = None, mode: str | None = None, k: int | None = None,
                allow_fallback: bool = True) -> dict:
        mode = mode or self.default_mode()
        if mode not in self.index.modes:
            raise BadRequest(f"mode {mode!r} unavailable; available: {', '.join(self.index.modes)}")
        k = self.cfg.retrieval.k if k is None else k
        if k < 0:
            raise BadRequest("k must be non-negative")
        if file not in self._known and not allow_fallback:
            raise UnknownFile(f"file {file!r} is not in the corpus")
        t = self.target(file, line, message, context)
        res = self.index.retrieve(t, mode, k)
        prompt = build_prompt(t.context_window, res, self.scale, target_id=t.id)
        rec = predict_level(prompt, self.client, self.scale, self.fallback_level,
                            self.cfg.llm.max_retries, res)
        return {
            "statement_id": t.id,
            "mode": mode,
            "level": rec.predicted,
            "class_scores": dict(zip(self.scale.names, rec.class_scores)),
            "score_source": rec.score_source,
            "invalid": rec.invalid,
            "examples": [
                {"id": s.id, "file": s.file, "line": s.line, "level": s.level, "score": score}
                for s, score in res.examples
            ],
            "fallback": res.fallback_used,
            "cluster_id": _cluster_json(res.cluster_id),
            "unknown_file": res.unknown_file,
            "latency_ms": res.latency_ms,
        }

    def cluster_summary(self, mode: str) -> dict:
        part = self.index.partitions.get(mode)
        if part is None:
            raise UnknownFile(f"no partition for mode {mode!r}")
        sizes = part.cluster_sizes()
        return {
            "mode": mode,
            "n_clusters": part.n_clusters,
            "noise_files": int((part.labels == NOISE).sum()),
            "coverage": part.quality.coverage,
            "sizes": {str(c): n for c, n in sizes.items()},
            "quality": {k: getattr(part.quality, k) for k in ("silhouette", "dbi", "dbcv", "modularity")},
            "params": {k: part.params[k] for k in sorted(part.params)},
        }


# -- evaluation --------------------------------------------------------------


def evaluate(d: str | Path, plan: ExperimentPlan, cfg: Config | None = None, out: str | Path | None = None,
             client: LLMClient | None = None) -> Path:
    d = Path(d)
    cfg = cfg or corpus_config(d)
    corpus, parts, emb, own = _artifacts(d)
    truth = {s.id: s.level for s in corpus.statements}
    client = client or make_client(cfg.llm.build(), truth)
    report = run_experiment(plan, corpus, parts, emb, own, client, cfg.retrieval.weights())
    return write_report(report, out or d / EVAL_DIR)


def stability(d: str | Path, cfg: Config | None = None, window_months: float = 2, windows: int = 15) -> StabilityReport:
    d = Path(d)
    cfg = cfg or corpus_config(d)
    corpus = _load_corpus(d)
    return temporal_stability(corpus.commits, corpus.paths, window_months, windows, k=cfg.ownership.k,
                              seed=cfg.seed, min_community_size=1)

