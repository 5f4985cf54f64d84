"""Configuration tree: YAML or JSON file, defaults for every key, env overrides.

Environment variables override endpoint and credential keys:

- ``LEVELSCOPE_EMBEDDING_ENDPOINT``, ``LEVELSCOPE_EMBEDDING_API_KEY``
- ``LEVELSCOPE_LLM_ENDPOINT``, ``LEVELSCOPE_LLM_API_KEY``
- ``LEVELSCOPE_API_KEY`` (fallback credential for both clients)
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Literal, Mapping

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .corpus.model import DEFAULT_LOGGER_PATTERN, CorpusConfig
from .levels import DEFAULT_LEVELS, LevelScale
from .ownership import DecayConfig
from .predictor import LLMClientConfig
from .retrieval import ScoreWeights
from .semantic import EmbeddingProviderConfig, ReducerConfig


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CorpusSection(_Section):
    extensions: list[str] = [".java"]
    logger_pattern: str = DEFAULT_LOGGER_PATTERN
    context_lines: int = Field(10, ge=0)
    levels: list[str] = list(DEFAULT_LEVELS)
    components: dict[str, str] = {}

    def build(self) -> CorpusConfig:
        return CorpusConfig(tuple(self.extensions), self.logger_pattern, self.context_lines,
                            LevelScale(tuple(self.levels)), dict(self.components))


class EmbeddingSection(_Section):
    kind: Literal["local_hash", "remote_http"] = "local_hash"
    endpoint: str | None = None
    model_name: str = "local-hash"
    max_tokens: int = Field(32768, gt=0)
    dim: int = Field(256, ge=8)
    api_key: str | None = None
    max_in_flight: int = Field(4, ge=1)
    timeout_s: float = Field(60.0, gt=0)

    def build(self) -> EmbeddingProviderConfig:
        return EmbeddingProviderConfig(**self.model_dump())


class ReducerSection(_Section):
    kind: Literal["pca", "umap"] = "pca"
    target_dim: int = Field(50, ge=1)
    n_neighbors: int = 15
    min_dist: float = 0.1

    def build(self, seed: int) -> ReducerConfig:
        return ReducerConfig(self.kind, seed, self.n_neighbors, self.min_dist)


class OwnershipSection(_Section):
    half_life_days: float = Field(365.0, gt=0)
    k: int = Field(20, ge=1)

    def decay(self) -> DecayConfig:
        return DecayConfig(self.half_life_days)


class ClusteringSection(_Section):
    semantic_k: int = Field(20, ge=1)
    resolutions: list[float] = [0.5, 0.8, 1.0, 1.2, 1.5, 2.0]
    target_modularity: float = 0.7
    min_community_size: int = Field(10, ge=1)
    layer_weights: tuple[float, float] = (1.0, 1.0)
    bootstrap_iterations: int = Field(30, ge=0)

    @model_validator(mode="after")
    def _check(self):
        if not self.resolutions or min(self.resolutions) <= 0:
            raise ValueError("resolutions must be a nonempty list of positive numbers")
        return self


class RetrievalSection(_Section):
    w_sem: float = 0.7
    w_own: float = 0.3
    k: int = Field(5, ge=0)
    search: Literal["exact", "ivf"] = "exact"
    nprobe: int = Field(8, ge=1)
    partial_fill: bool = False

    @model_validator(mode="after")
    def _check(self):
        ScoreWeights(self.w_sem, self.w_own)
        return self

    def weights(self) -> ScoreWeights:
        return ScoreWeights(self.w_sem, self.w_own)


class LLMSection(_Section):
    kind: Literal["remote_chat", "mock_majority", "mock_oracle", "mock_noisy"] = "mock_majority"
    endpoint: str | None = None
    model_name: str = "codellama-7b-instruct"
    temperature: float = 0.0
    max_retries: int = Field(2, ge=0)
    api_key: str | None = None
    request_logprobs: bool = False
    noise: float = Field(0.3, ge=0, le=1)
    max_in_flight: int = Field(4, ge=1)

    def build(self) -> LLMClientConfig:
        return LLMClientConfig(**self.model_dump())


class ServiceSection(_Section):
    host: str = "127.0.0.1"
    port: int = 8765


class Config(_Section):
    seed: int = 0
    corpus: CorpusSection = CorpusSection()
    embedding: EmbeddingSection = EmbeddingSection()
    reducer: ReducerSection = ReducerSection()
    ownership: OwnershipSection = OwnershipSection()
    clustering: ClusteringSection = ClusteringSection()
    retrieval: RetrievalSection = RetrievalSection()
    llm: LLMSection = LLMSection()
    service: ServiceSection = ServiceSection()

    @model_validator(mode="after")
    def _check(self):
        if self.embedding.kind == "remote_http" and not self.embedding.endpoint:
            raise ValueError("embedding.endpoint is required for remote_http")
        if self.llm.kind == "remote_chat" and not self.llm.endpoint:
            raise ValueError("llm.endpoint is required for remote_chat")
        return self


ENV_OVERRIDES = {
    "LEVELSCOPE_EMBEDDING_ENDPOINT": ("embedding", "endpoint"),
    "LEVELSCOPE_EMBEDDING_API_KEY": ("embedding", "api_key"),
    "LEVELSCOPE_LLM_ENDPOINT": ("llm", "endpoint"),
    "LEVELSCOPE_LLM_API_KEY": ("llm", "api_key"),
}


def apply_env(data: dict, env: Mapping[str, str]) -> dict:
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    shared = env.get("LEVELSCOPE_API_KEY")
    if shared:
        for section in ("embedding", "llm"):
            data.setdefault(section, {}).setdefault("api_key", shared)
    for var, (section, key) in ENV_OVERRIDES.items():
        if env.get(var):
            data.setdefault(section, {})[key] = env[var]
    return data


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None) -> Config:
    data: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        data = json.loads(text) if str(path).endswith(".json") else (yaml.safe_load(text) or {})
        if not isinstance(data, dict):
            raise ValueError(f"config {path} must be a mapping at top level")
    return Config.model_validate(apply_env(data, os.environ if env is None else env))


def dump_config(cfg: Config, path: str | Path) -> None:
    """Write the config without credentials."""
    data = cfg.model_dump(mode="json")
    for section in ("embedding", "llm"):
        data[section]["api_key"] = None
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")
