"""Newline-delimited JSON corpus storage with a checksummed manifest."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from ..levels import LevelScale
from .model import CommitRecord, Corpus, LoggingStatement, ScanReport, SourceFile

SCHEMA_VERSION = 1
RECORD_FILES = ("files.jsonl", "statements.jsonl", "commits.jsonl", "sources.jsonl")
MANIFEST = "manifest.json"


class CorpusError(Exception):
    pass


class SchemaVersionError(CorpusError):
    pass


class ChecksumError(CorpusError):
    def __init__(self, name: str, expected: str, actual: str):
        super().__init__(f"checksum mismatch for {name}: expected {expected[:12]}, got {actual[:12]}")
        self.name = name


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _jsonl(records) -> bytes:
    return "".join(dumps(r) + "\n" for r in records).encode("utf-8")


def _file_record(f: SourceFile) -> dict:
    return {
        "path": f.path,
        "content_hash": f.content_hash,
        "language": f.language,
        "component": f.component_label,
        "loc": f.loc,
    }


def _statement_record(s: LoggingStatement) -> dict:
    return {
        "id": s.id,
        "file": s.file,
        "line": s.line,
        "level": s.level,
        "message": s.message_template,
        "method_start": s.method_span[0],
        "method_end": s.method_span[1],
        "context": s.context_window,
        "component": s.component,
    }


def _commit_record(c: CommitRecord) -> dict:
    return {
        "commit_id": c.commit_id,
        "author_id": c.author_id,
        "timestamp": c.timestamp,
        "touched_files": list(c.touched_files),
    }


def corpus_hash(file_hashes: dict[str, str]) -> str:
    return sha256_bytes("".join(f"{k}:{file_hashes[k]}\n" for k in sorted(file_hashes)).encode())


def _blobs(corpus: Corpus) -> dict[str, bytes]:
    return {
        "files.jsonl": _jsonl(_file_record(f) for f in corpus.files),
        "statements.jsonl": _jsonl(_statement_record(s) for s in corpus.statements),
        "commits.jsonl": _jsonl(_commit_record(c) for c in corpus.commits),
        "sources.jsonl": _jsonl(
            {"path": p, "text": corpus.sources[p]} for p in sorted(corpus.sources)
        ),
    }


def content_hash(corpus: Corpus) -> str:
    return corpus_hash({name: sha256_bytes(data) for name, data in _blobs(corpus).items()})


def store_corpus(corpus: Corpus, directory: str | Path) -> str:
    """Write ``corpus`` under ``directory`` and return the corpus hash."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    blobs = _blobs(corpus)
    hashes = {}
    for name, data in blobs.items():
        (d / name).write_bytes(data)
        hashes[name] = sha256_bytes(data)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "level_scale": list(corpus.scale.names),
        "files": hashes,
        "corpus_hash": corpus_hash(hashes),
        "counts": {
            "files": len(corpus.files),
            "statements": len(corpus.statements),
            "commits": len(corpus.commits),
        },
        "report": {"unreadable": corpus.report.unreadable, "warnings": corpus.report.warnings},
    }
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest["corpus_hash"]


def read_manifest(directory: str | Path) -> dict:
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise CorpusError(f"no corpus manifest at {path}; run `levelscope ingest` first")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"corpus schema version {version} != supported {SCHEMA_VERSION}")
    return manifest


def load_corpus(directory: str | Path) -> Corpus:
    d = Path(directory)
    manifest = read_manifest(d)
    rows = {}
    for name in RECORD_FILES:
        data = (d / name).read_bytes()
        expected = manifest["files"][name]
        actual = sha256_bytes(data)
        if actual != expected:
            raise ChecksumError(name, expected, actual)
        rows[name] = [json.loads(line) for line in data.decode("utf-8").splitlines() if line]

    files = [
        SourceFile(r["path"], r["content_hash"], r["language"], r["component"], r["loc"])
        for r in rows["files.jsonl"]
    ]
    statements = [
        LoggingStatement(
            id=r["id"],
            file=r["file"],
            line=r["line"],
            level=r["level"],
            message_template=r["message"],
            method_span=(r["method_start"], r["method_end"]),
            context_window=r["context"],
            component=r["component"],
        )
        for r in rows["statements.jsonl"]
    ]
    commits = [
        CommitRecord(r["commit_id"], r["author_id"], r["timestamp"], tuple(r["touched_files"]))
        for r in rows["commits.jsonl"]
    ]
    sources = {r["path"]: r["text"] for r in rows["sources.jsonl"]}
    report = manifest.get("report", {})
    return Corpus(
        files=files,
        statements=statements,
        commits=commits,
        scale=LevelScale(tuple(manifest["level_scale"])),
        sources=sources,
        report=ScanReport(list(report.get("unreadable", [])), list(report.get("warnings", []))),
    )
