"""Split, per-mode prediction runs, bootstrap scoring and the evaluation report."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..clustering.partition import NOISE, Partition
from ..corpus.model import Corpus, LoggingStatement
from ..levels import LevelScale
from ..ownership import OwnershipMatrix
from ..predictor import LLMClient, PredictionRecord, build_prompt, predict_level
from ..retrieval import RETRIEVAL_MODES, RetrievalIndex, ScoreWeights, build_index
from ..semantic import EmbeddingSet
from .metrics import aod, aod_contributions, auc_multiclass, precision_exact
from .stats import paired_comparison

log = logging.getLogger(__name__)

REPORT_FILE = "report.json"
SUMMARY_FILE = "report.md"
BASELINE = "global_random"


@dataclass(frozen=True)
class ExperimentPlan:
    modes: tuple[str, ...] = RETRIEVAL_MODES
    k_examples: int = 5
    split_ratio: float = 0.7
    bootstraps: int = 5
    seed: int = 0
    max_retries: int = 2
    max_in_flight: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "modes", tuple(self.modes))
        unknown = set(self.modes) - set(RETRIEVAL_MODES)
        if unknown:
            raise ValueError(f"unknown modes {sorted(unknown)}")
        if not 0 < self.split_ratio < 1:
            raise ValueError("split_ratio must be in (0, 1)")
        if self.k_examples < 0 or self.bootstraps < 1:
            raise ValueError("k_examples must be >= 0 and bootstraps >= 1")

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentPlan":
        allowed = set(cls.__dataclass_fields__)
        extra = set(data) - allowed
        if extra:
            raise ValueError(f"unknown plan keys {sorted(extra)}")
        return cls(**data)


def _allocate(counts: dict[str, int], ratio: float) -> dict[str, int]:
    """Per-level pool sizes: largest-remainder rounding toward ``ratio * total``."""
    eligible = {lv: n for lv, n in counts.items() if n >= 2}
    quotas = {lv: ratio * n for lv, n in eligible.items()}
    alloc = {lv: int(math.floor(q)) for lv, q in quotas.items()}
    target = int(math.floor(ratio * sum(eligible.values()) + 0.5))
    spare = target - sum(alloc.values())
    for lv in sorted(quotas, key=lambda lv: -(quotas[lv] - alloc[lv]))[: max(0, spare)]:
        alloc[lv] += 1
    return {lv: min(max(a, 1), eligible[lv] - 1) for lv, a in alloc.items()}


def split_corpus(
    statements: Sequence[LoggingStatement], ratio: float = 0.7, seed: int = 0
) -> tuple[list[str], list[str]]:
    """Stratified-by-level statement split into (retrieval pool ids, test ids).

    A level with fewer than two statements goes wholly to the pool.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    by_level: dict[str, list[str]] = {}
    for s in sorted(statements, key=lambda s: s.id):
        by_level.setdefault(s.level, []).append(s.id)
    alloc = _allocate({lv: len(ids) for lv, ids in by_level.items()}, ratio)
    rng = np.random.default_rng(seed)
    pool: list[str] = []
    test: list[str] = []
    for lv in sorted(by_level):
        ids = by_level[lv]
        if lv not in alloc:
            log.warning("level %s has %d statement(s); all kept in the retrieval pool", lv, len(ids))
            pool.extend(ids)
            continue
        perm = rng.permutation(len(ids))
        pool.extend(ids[i] for i in perm[: alloc[lv]])
        test.extend(ids[i] for i in perm[alloc[lv]:])
    return sorted(pool), sorted(test)


def majority_level(levels: Sequence[str], scale: LevelScale) -> str:
    if not levels:
        return "info" if "info" in scale else scale.names[0]
    counts = Counter(levels)
    return max(scale.names, key=lambda lv: (counts.get(lv, 0), -scale.ordinal(lv)))


@dataclass
class ModeRun:
    mode: str
    records: list[PredictionRecord]
    truth: list[str]
    files: list[str]


def _predict_mode(index: RetrievalIndex, mode: str, test: Sequence[LoggingStatement], client: LLMClient,
                  plan: ExperimentPlan, scale: LevelScale, fallback_level: str) -> ModeRun:
    def one(t: LoggingStatement) -> PredictionRecord:
        res = index.retrieve(t, mode, plan.k_examples)
        prompt = build_prompt(t.context_window, res, scale, target_id=t.id)
        return predict_level(prompt, client, scale, fallback_level, plan.max_retries, res)

    if plan.max_in_flight > 1:
        with ThreadPoolExecutor(plan.max_in_flight) as pool:
            records = list(pool.map(one, test))
    else:
        records = [one(t) for t in test]
    return ModeRun(mode, records, [t.level for t in test], [t.file for t in test])


def _scores(run: ModeRun, idx: np.ndarray, scale: LevelScale) -> dict:
    pred = [run.records[i].predicted for i in idx]
    true = [run.truth[i] for i in idx]
    mat = np.array([run.records[i].class_scores for i in idx], dtype=float).reshape(len(idx), len(scale))
    return {
        "auc": auc_multiclass(mat, true, scale),
        "precision": precision_exact(pred, true),
        "aod": aod(pred, true, scale),
    }


def _mean_std(values: list[float | None]) -> dict:
    vals = [v for v in values if v is not None]
    if not vals:
        return {"mean": None, "std": None}
    arr = np.array(vals)
    return {"mean": float(arr.mean()), "std": float(arr.std(ddof=1)) if len(arr) > 1 else 0.0}


def file_concentration(error_files: Sequence[str], n_files: int) -> float | None:
    """Smallest fraction of files whose errors cover at least half of all errors."""
    if not error_files or n_files == 0:
        return None
    counts = sorted(Counter(error_files).values(), reverse=True)
    total = sum(counts)
    running = 0
    for i, c in enumerate(counts, 1):
        running += c
        if 2 * running >= total:
            return i / n_files
    return 1.0


def misprediction_analysis(run: ModeRun, scale: LevelScale, partition: Partition | None) -> dict:
    errors = [i for i, r in enumerate(run.records) if r.predicted != run.truth[i]]
    out = {"errors": len(errors), "adjacent_confusion": None, "noise_file": None, "file_concentration": None}
    if not errors:
        return out
    adjacent = sum(abs(scale.ordinal(run.records[i].predicted) - scale.ordinal(run.truth[i])) == 1 for i in errors)
    out["adjacent_confusion"] = adjacent / len(errors)
    if partition is not None:
        out["noise_file"] = sum(partition.label_of(run.files[i]) == NOISE for i in errors) / len(errors)
    out["file_concentration"] = file_concentration([run.files[i] for i in errors], len(set(run.files)))
    return out


def mode_available(mode: str, corpus: Corpus, partitions: Mapping[str, Partition]) -> str | None:
    """Reason the mode cannot run, or None."""
    if mode == "doc_component" and not corpus.has_components():
        return "no component labels in the corpus"
    if mode in ("semantic", "ownership", "multiplex") and mode not in partitions:
        return f"partition.{mode}.json missing; run `levelscope cluster --mode {mode}`"
    return None


def run_experiment(
    plan: ExperimentPlan,
    corpus: Corpus,
    partitions: Mapping[str, Partition],
    embeddings: EmbeddingSet | None,
    ownership: OwnershipMatrix | None,
    client: LLMClient,
    weights: ScoreWeights | None = None,
) -> dict:
    """Run every available mode over the test split and assemble the report."""
    scale = corpus.scale
    pool_ids, test_ids = split_corpus(corpus.statements, plan.split_ratio, plan.seed)
    by_id = {s.id: s for s in corpus.statements}
    test = [by_id[i] for i in test_ids]
    index = build_index(corpus, partitions, embeddings, ownership, plan.seed, pool_ids, weights)
    fallback_level = majority_level([by_id[i].level for i in pool_ids], scale)

    skipped = {}
    runs: dict[str, ModeRun] = {}
    for mode in plan.modes:
        reason = mode_available(mode, corpus, partitions)
        if reason:
            log.warning("skipping %s: %s", mode, reason)
            skipped[mode] = reason
            continue
        runs[mode] = _predict_mode(index, mode, test, client, plan, scale, fallback_level)

    n = len(test)
    rng = np.random.default_rng([plan.seed, 0xB007])
    resamples = [rng.integers(0, n, n) for _ in range(plan.bootstraps)] if n else []
    rows = []
    for mode, run in runs.items():
        for b, idx in enumerate(resamples):
            rows.append({"mode": mode, "bootstrap": b, **_scores(run, idx, scale)})

    summary = {}
    for mode, run in runs.items():
        mrows = [r for r in rows if r["mode"] == mode]
        cluster_mode = mode not in ("zero_shot", "global_random")
        records = run.records
        summary[mode] = {
            "auc": _mean_std([r["auc"] for r in mrows]),
            "precision": _mean_std([r["precision"] for r in mrows]),
            "aod": _mean_std([r["aod"] for r in mrows]),
            "fallback_rate": (sum(r.retrieval.fallback_used for r in records) / n) if cluster_mode and n else None,
            "parse_failures": sum(r.invalid for r in records),
            "score_source": dict(sorted(Counter(r.score_source for r in records).items())),
        }

    pairwise = {}
    if BASELINE in runs and n:
        base = runs[BASELINE]
        base_correct = [float(r.predicted == t) for r, t in zip(base.records, base.truth)]
        base_aod = aod_contributions([r.predicted for r in base.records], base.truth, scale)
        for mode, run in runs.items():
            if mode == BASELINE:
                continue
            correct = [float(r.predicted == t) for r, t in zip(run.records, run.truth)]
            aods = aod_contributions([r.predicted for r in run.records], run.truth, scale)
            pairwise[mode] = {
                "precision": _comparison_json(paired_comparison(correct, base_correct)),
                "aod": _comparison_json(paired_comparison(aods, base_aod)),
            }

    clustering = {}
    for mode, part in sorted(partitions.items()):
        q = part.quality
        clustering[mode] = {
            "n_clusters": part.n_clusters,
            "coverage": q.coverage,
            "silhouette": q.silhouette,
            "dbi": q.dbi,
            "dbcv": q.dbcv,
            "modularity": q.modularity,
            "params": {k: part.params[k] for k in sorted(part.params)},
        }

    report = {
        "plan": {
            "modes": list(plan.modes),
            "k_examples": plan.k_examples,
            "split_ratio": plan.split_ratio,
            "bootstraps": plan.bootstraps,
            "seed": plan.seed,
        },
        "corpus_hash": corpus.hash,
        "client": client.client_id,
        "split": {"pool": len(pool_ids), "test": n, "fallback_level": fallback_level},
        "skipped": skipped,
        "rows": rows,
        "summary": summary,
        "pairwise_vs_global_random": pairwise,
        "clustering": clustering,
        "mispredictions": {
            mode: misprediction_analysis(run, scale, partitions.get(mode)) for mode, run in runs.items()
        },
        "predictions": {
            mode: [
                {"id": r.statement_id, "predicted": r.predicted, "true": t,
                 "fallback": bool(r.retrieval and r.retrieval.fallback_used), "invalid": r.invalid}
                for r, t in zip(run.records, run.truth)
            ]
            for mode, run in runs.items()
        },
    }
    return report


def _comparison_json(c) -> dict:
    return {"p_value": c.p_value, "cohens_d": c.cohens_d, "effect": c.effect_label,
            "statistic": c.statistic, "n": c.n, "method": c.method}


def _jsonable(obj):
    """Non-finite floats become strings so the output stays strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("+inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def report_json(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=1, sort_keys=True, allow_nan=False) + "\n"


def _fmt(ms: dict) -> str:
    if ms["mean"] is None:
        return "n/a"
    return f"{ms['mean']:.3f} ± {ms['std']:.3f}"


def render_summary(report: dict) -> str:
    lines = [
        f"# Evaluation summary ({report['client']})",
        "",
        f"Test statements: {report['split']['test']}; retrieval pool: {report['split']['pool']}; "
        f"bootstraps: {report['plan']['bootstraps']}.",
        "",
        "| Mode | AUC | Precision | AOD | Fallback |",
        "|---|---|---|---|---|",
    ]
    for mode, s in report["summary"].items():
        fb = "" if s["fallback_rate"] is None else f"{100 * s['fallback_rate']:.1f}%"
        lines.append(f"| {mode} | {_fmt(s['auc'])} | {_fmt(s['precision'])} | {_fmt(s['aod'])} | {fb} |")
    if report["pairwise_vs_global_random"]:
        lines += ["", "| Mode vs global_random | metric | p | d | effect |", "|---|---|---|---|---|"]
        for mode, m in report["pairwise_vs_global_random"].items():
            for metric, c in m.items():
                d = c["cohens_d"]
                d = d if isinstance(d, str) else f"{d:.3f}"
                lines.append(f"| {mode} | {metric} | {c['p_value']:.3g} | {d} | {c['effect']} |")
    lines += ["", "| Mode | errors | adjacent confusion | noise files | files covering 50% |", "|---|---|---|---|---|"]
    for mode, m in report["mispredictions"].items():
        cells = ["" if m[k] is None else f"{100 * m[k]:.1f}%" for k in ("adjacent_confusion", "noise_file", "file_concentration")]
        lines.append(f"| {mode} | {m['errors']} | " + " | ".join(cells) + " |")
    if report["skipped"]:
        lines += ["", "Skipped modes:"] + [f"- {m}: {why}" for m, why in report["skipped"].items()]
    return "\n".join(lines) + "\n"


def write_report(report: dict, out_dir: str | Path) -> Path:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    path = d / REPORT_FILE
    path.write_text(report_json(report), encoding="utf-8")
    (d / SUMMARY_FILE).write_text(render_summary(report), encoding="utf-8")
    return path
