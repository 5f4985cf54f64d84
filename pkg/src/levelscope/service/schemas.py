from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class PredictRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    file: str = Field(min_length=1)
    line: int | None = Field(None, ge=1)
    message: str | None = None
    context: str | None = None
    mode: str | None = None
    k: int | None = Field(None, ge=0, le=100)


class Example(BaseModel):
    id: str
    file: str
    line: int
    level: str
    score: float


class PredictResponse(BaseModel):
    statement_id: str
    mode: str
    level: str
    class_scores: dict[str, float]
    score_source: str
    invalid: bool
    examples: list[Example]
    fallback: bool
    cluster_id: int | str | None
    unknown_file: bool
    latency_ms: float


class ClusterSummary(BaseModel):
    mode: str
    n_clusters: int
    noise_files: int
    coverage: float
    sizes: dict[str, int]
    quality: dict[str, float | None]
    params: dict


class Health(BaseModel):
    status: str
    corpus_hash: str | None = None


class ErrorBody(BaseModel):
    error: str
    detail: str
