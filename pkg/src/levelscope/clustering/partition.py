from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

NOISE = -1
MODES = ("semantic", "ownership", "multiplex")


@dataclass
class PartitionQuality:
    silhouette: float | None = None
    dbi: float | None = None
    dbcv: float | None = None
    modularity: float | None = None
    coverage: float = 0.0


def relabel(labels: Sequence[int]) -> np.ndarray:
    """Contiguous cluster ids in order of first appearance; NOISE kept."""
    out = np.full(len(labels), NOISE, dtype=np.int64)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels):
        lab = int(lab)
        if lab == NOISE:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def coverage(labels: Sequence[int]) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        return 0.0
    return float((labels != NOISE).mean())


@dataclass
class Partition:
    files: list[str]
    labels: np.ndarray
    mode: str
    quality: PartitionQuality = field(default_factory=PartitionQuality)
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    corpus_hash: str | None = None

    def __post_init__(self) -> None:
        self.labels = relabel(self.labels)
        if len(self.labels) != len(self.files):
            raise ValueError("one label per file required")
        self.quality.coverage = coverage(self.labels)

    @property
    def assignment(self) -> dict[str, int]:
        return {f: int(lab) for f, lab in zip(self.files, self.labels)}

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max() + 1) if len(self.labels) and self.labels.max() >= 0 else 0

    def label_of(self, path: str) -> int:
        try:
            return int(self.labels[self.files.index(path)])
        except ValueError:
            return NOISE

    def cluster_sizes(self) -> dict[int, int]:
        ids, counts = np.unique(self.labels[self.labels != NOISE], return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "params": {k: self.params[k] for k in sorted(self.params)},
            "seed": self.seed,
            "corpus_hash": self.corpus_hash,
            "quality": asdict(self.quality),
            "assignment": {
                f: ("NOISE" if lab == NOISE else int(lab)) for f, lab in zip(self.files, self.labels)
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "Partition":
        files = list(data["assignment"])
        labels = [NOISE if v == "NOISE" else int(v) for v in data["assignment"].values()]
        q = PartitionQuality(**data.get("quality", {}))
        return cls(files, np.array(labels, dtype=np.int64), data["mode"], q, data.get("params", {}), data.get("seed", 0),
                   data.get("corpus_hash"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Partition":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
