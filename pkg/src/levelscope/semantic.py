"""File embeddings: providers, oversize-file chunking, dimensionality reduction."""

from __future__ import annotations

import hashlib
import logging
import re
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import httpx
import numpy as np

from .corpus.extract import method_spans
from .corpus.lexer import tokenize

log = logging.getLogger(__name__)

_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|[0-9]+")
_TOKEN = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    kind: str = "local_hash"  # local_hash | remote_http
    endpoint: str | None = None
    model_name: str = "local-hash"
    max_tokens: int = 32768
    dim: int = 256
    api_key: str | None = None
    max_in_flight: int = 4
    timeout_s: float = 60.0

    def __post_init__(self) -> None:
        if self.kind not in {"local_hash", "remote_http"}:
            raise ValueError(f"unknown embedding provider kind {self.kind!r}")
        if self.kind == "remote_http" and not self.endpoint:
            raise ValueError("remote_http provider requires an endpoint")


@dataclass
class EmbeddingSet:
    files: list[str]
    vectors: np.ndarray
    provider_id: str
    reduced: np.ndarray | None = None
    failed: list[str] = field(default_factory=list)
    corpus_hash: str | None = None

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def reduced_dim(self) -> int | None:
        return None if self.reduced is None else int(self.reduced.shape[1])

    def save(self, path: str | Path) -> None:
        arrays = {"vectors": self.vectors}
        if self.reduced is not None:
            arrays["reduced"] = self.reduced
        np.savez(
            path,
            files=np.array(self.files, dtype=object),
            provider_id=np.array(self.provider_id),
            failed=np.array(self.failed, dtype=object),
            corpus_hash=np.array(self.corpus_hash or ""),
            **arrays,
        )

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingSet":
        with np.load(path, allow_pickle=True) as z:
            return cls(
                files=[str(f) for f in z["files"]],
                vectors=z["vectors"],
                provider_id=str(z["provider_id"]),
                reduced=z["reduced"] if "reduced" in z.files else None,
                failed=[str(f) for f in z["failed"]],
                corpus_hash=str(z["corpus_hash"]) or None,
            )


def count_tokens(text: str) -> int:
    """Approximate model tokens as identifier/punctuation tokens."""
    return len(_TOKEN.findall(text))


def local_hash_embedder(source: str, dim: int = 256) -> np.ndarray:
    """Hashed term-frequency vector, L2-normalized.

    Tokens are lowercased identifiers and digit runs; each is assigned a bucket
    from the first 8 bytes of its BLAKE2b digest.
    """
    if dim < 8:
        raise ValueError("dim must be >= 8")
    v = np.zeros(dim)
    for tok in _WORD.findall(source):
        h = hashlib.blake2b(tok.lower().encode("utf-8"), digest_size=8).digest()
        v[int.from_bytes(h, "little") % dim] += 1.0
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int
    max_tokens: int

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray: ...


class LocalHashProvider:
    def __init__(self, dim: int = 256, max_tokens: int = 32768):
        self.dim = dim
        self.max_tokens = max_tokens
        self.provider_id = f"local_hash:{dim}"

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim))
        return np.stack([local_hash_embedder(t, self.dim) for t in texts])


class EmbeddingRequestError(RuntimeError):
    pass


class RemoteHTTPProvider:
    """OpenAI-compatible ``/embeddings`` client.

    Request ``{model, input: [...]}``, response ``{data: [{embedding: [...]}, ...]}``.
    """

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        dim: int,
        max_tokens: int = 32768,
        api_key: str | None = None,
        attempts: int = 3,
        backoff_s: float = 0.5,
        timeout_s: float = 60.0,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.model_name = model_name
        self.dim = dim
        self.max_tokens = max_tokens
        self.attempts = attempts
        self.backoff_s = backoff_s
        self.provider_id = f"remote:{model_name}"
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout_s, headers=headers)

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim))
        payload = {"model": self.model_name, "input": list(texts)}
        last: Exception | None = None
        for attempt in range(self.attempts):
            try:
                resp = self._client.post(self.endpoint, json=payload)
                resp.raise_for_status()
                data = resp.json()["data"]
                if len(data) != len(texts):
                    raise EmbeddingRequestError(f"expected {len(texts)} embeddings, got {len(data)}")
                out = np.array([d["embedding"] for d in data], dtype=float)
                if out.shape[1] != self.dim:
                    raise EmbeddingRequestError(f"expected dim {self.dim}, got {out.shape[1]}")
                return out
            except (httpx.HTTPError, KeyError, ValueError, EmbeddingRequestError) as exc:
                last = exc
                if attempt + 1 < self.attempts:
                    time.sleep(self.backoff_s * 2**attempt)
        raise EmbeddingRequestError(f"embedding request failed after {self.attempts} attempts: {last}")


def make_provider(cfg: EmbeddingProviderConfig, client: httpx.Client | None = None) -> EmbeddingProvider:
    if cfg.kind == "local_hash":
        return LocalHashProvider(cfg.dim, cfg.max_tokens)
    return RemoteHTTPProvider(
        cfg.endpoint, cfg.model_name, cfg.dim, cfg.max_tokens, cfg.api_key,
        timeout_s=cfg.timeout_s, client=client,
    )


def _split_lines_by_budget(lines: list[str], max_tokens: int) -> list[str]:
    chunks, cur, used = [], [], 0
    for line in lines:
        n = count_tokens(line)
        if cur and used + n > max_tokens:
            chunks.append("\n".join(cur))
            cur, used = [], 0
        cur.append(line)
        used += n
    if cur:
        chunks.append("\n".join(cur))
    return chunks


def chunk_source(source: str, max_tokens: int) -> list[str]:
    """Split at top-level method boundaries; line blocks when no methods exist.

    A method that alone exceeds the budget is split further into line blocks.
    """
    if count_tokens(source) <= max_tokens:
        return [source]
    lines = source.split("\n")
    spans = method_spans(list(tokenize(source)), len(lines))
    top: list[tuple[int, int]] = []
    for start, end, _o, _c in spans:  # sorted by opening token
        if top and start >= top[-1][0] and end <= top[-1][1]:
            continue
        top.append((start, end))
    if not top:
        return _split_lines_by_budget(lines, max_tokens)
    chunks = []
    for start, end in top:
        body = "\n".join(lines[start - 1 : end])
        if count_tokens(body) <= max_tokens:
            chunks.append(body)
        else:
            chunks.extend(_split_lines_by_budget(lines[start - 1 : end], max_tokens))
    return chunks


def mean_pool(vectors: np.ndarray) -> np.ndarray:
    return np.asarray(vectors, dtype=float).mean(axis=0)


def embed_file(source: str, provider: EmbeddingProvider) -> np.ndarray:
    chunks = chunk_source(source, provider.max_tokens)
    vecs = provider.embed_batch(chunks)
    if len(chunks) == 1:
        return vecs[0]
    return mean_pool(vecs)


class EmbeddingCache:
    """On-disk vectors keyed by (provider id, content hash)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, provider_id: str, content_hash: str) -> Path:
        safe = re.sub(r"[^A-Za-z0-9_.-]", "_", provider_id)
        return self.root / safe / f"{content_hash}.npy"

    def get(self, provider_id: str, content_hash: str) -> np.ndarray | None:
        p = self._path(provider_id, content_hash)
        return np.load(p) if p.exists() else None

    def put(self, provider_id: str, content_hash: str, vec: np.ndarray) -> None:
        p = self._path(provider_id, content_hash)
        p.parent.mkdir(parents=True, exist_ok=True)
        np.save(p, vec)


def embed_sources(
    files: Sequence[str],
    sources: dict[str, str],
    provider: EmbeddingProvider,
    *,
    content_hashes: dict[str, str] | None = None,
    cache: EmbeddingCache | None = None,
    max_in_flight: int = 1,
) -> EmbeddingSet:
    """Embed every file. Files whose embedding fails get a zero vector and are
    listed in ``failed`` so downstream layers can exclude them."""
    hashes = content_hashes or {
        f: hashlib.sha256(sources[f].encode("utf-8")).hexdigest() for f in files
    }

    def one(path: str) -> np.ndarray | None:
        if cache is not None:
            hit = cache.get(provider.provider_id, hashes[path])
            if hit is not None:
                return hit
        try:
            vec = embed_file(sources[path], provider)
        except EmbeddingRequestError as exc:
            log.warning("embedding failed for %s: %s", path, exc)
            return None
        if cache is not None:
            cache.put(provider.provider_id, hashes[path], vec)
        return vec

    if max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            results = list(pool.map(one, files))
    else:
        results = [one(f) for f in files]

    vectors = np.zeros((len(files), provider.dim))
    failed = []
    for i, (path, vec) in enumerate(zip(files, results)):
        if vec is None:
            failed.append(path)
        else:
            vectors[i] = vec
    return EmbeddingSet(list(files), vectors, provider.provider_id, failed=failed)


@dataclass(frozen=True)
class ReducerConfig:
    kind: str = "pca"  # pca | umap
    seed: int = 0
    n_neighbors: int = 15
    min_dist: float = 0.1


def pca_reduce(x: np.ndarray, target_dim: int) -> np.ndarray:
    """Project centered rows onto the top principal axes.

    Axis signs are fixed so each axis's largest-magnitude loading is positive.
    Components beyond the numerical rank are returned as zeros.
    """
    x = np.asarray(x, dtype=float)
    xc = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    tol = s.max(initial=0.0) * max(xc.shape) * np.finfo(float).eps
    rank = int((s > tol).sum())
    k = min(target_dim, vt.shape[0])
    axes = vt[:k].copy()
    for r in range(k):
        j = int(np.argmax(np.abs(axes[r])))
        if axes[r, j] < 0:
            axes[r] = -axes[r]
    out = np.zeros((x.shape[0], target_dim))
    out[:, :k] = xc @ axes.T
    if rank < target_dim:
        warnings.warn(f"rank {rank} < target_dim {target_dim}; padding with zero components")
        out[:, rank:] = 0.0
    return out


def _umap_reduce(x: np.ndarray, target_dim: int, cfg: ReducerConfig) -> np.ndarray:
    try:
        import umap  # type: ignore[import-not-found]
    except ImportError as exc:
        raise RuntimeError("the umap reducer needs the optional `umap-learn` package") from exc
    model = umap.UMAP(
        n_components=target_dim,
        n_neighbors=cfg.n_neighbors,
        min_dist=cfg.min_dist,
        metric="cosine",
        random_state=cfg.seed,
    )
    return model.fit_transform(x)


def reduce(
    embeddings: EmbeddingSet, target_dim: int = 50, reducer: ReducerConfig | None = None
) -> EmbeddingSet:
    reducer = reducer or ReducerConfig()
    n, dim = embeddings.vectors.shape
    if target_dim >= dim:
        raise ValueError(f"target_dim {target_dim} must be < embedding dim {dim}")
    if n < target_dim + 1:
        raise ValueError(f"need at least {target_dim + 1} files to reduce to {target_dim} dims, have {n}")
    if reducer.kind == "pca":
        red = pca_reduce(embeddings.vectors, target_dim)
    elif reducer.kind == "umap":
        red = _umap_reduce(embeddings.vectors, target_dim, reducer)
    else:
        raise ValueError(f"unknown reducer {reducer.kind!r}")
    return EmbeddingSet(
        embeddings.files, embeddings.vectors, embeddings.provider_id, red,
        list(embeddings.failed), embeddings.corpus_hash,
    )
