"""Repository ingestion: source files, logging statements, commit history."""

from .extract import extract_logging_statements
from .git import NotAGitRepo
from .model import (
    MASK,
    UNKNOWN_COMPONENT,
    CommitRecord,
    Corpus,
    CorpusConfig,
    LoggingStatement,
    ScanReport,
    SourceFile,
)
from .scan import scan_repo
from .store import ChecksumError, CorpusError, SchemaVersionError, load_corpus, read_manifest, store_corpus

__all__ = [
    "MASK",
    "UNKNOWN_COMPONENT",
    "ChecksumError",
    "CommitRecord",
    "Corpus",
    "CorpusConfig",
    "CorpusError",
    "LoggingStatement",
    "NotAGitRepo",
    "ScanReport",
    "SchemaVersionError",
    "SourceFile",
    "extract_logging_statements",
    "load_corpus",
    "read_manifest",
    "scan_repo",
    "store_corpus",
]
