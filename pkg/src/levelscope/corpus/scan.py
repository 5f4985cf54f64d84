from __future__ import annotations

import hashlib
import logging
from pathlib import Path

from .extract import extract_logging_statements
from .git import commit_history, ensure_repo, tracked_files
from .model import Corpus, CorpusConfig, ScanReport, SourceFile

log = logging.getLogger(__name__)


def _read_text(path: Path) -> str:
    data = path.read_bytes()
    return data.decode("utf-8")


def scan_repo(repo_path: str | Path, config: CorpusConfig | None = None) -> Corpus:
    """Scan the working tree of a git repository at its current ref.

    Only tracked files with a configured extension are considered. Files that
    cannot be read or decoded are skipped and listed in ``corpus.report``.
    """
    config = config or CorpusConfig()
    repo = Path(repo_path)
    ensure_repo(repo)
    report = ScanReport()
    exts = tuple(e.lower() for e in config.extensions)

    files: list[SourceFile] = []
    statements = []
    sources: dict[str, str] = {}
    for rel in tracked_files(repo):
        if not rel.lower().endswith(exts):
            continue
        try:
            text = _read_text(repo / rel)
        except (OSError, UnicodeDecodeError) as exc:
            log.warning("skipping unreadable file %s: %s", rel, exc)
            report.unreadable.append(rel)
            continue
        component = config.component_for(rel)
        files.append(
            SourceFile(
                path=rel,
                content_hash=hashlib.sha256(text.encode("utf-8")).hexdigest(),
                language="java" if rel.lower().endswith(".java") else "other",
                component_label=component,
                loc=text.count("\n") + (1 if text and not text.endswith("\n") else 0),
            )
        )
        sources[rel] = text
        statements.extend(
            extract_logging_statements(
                text,
                rel,
                scale=config.scale,
                logger_pattern=config.logger_pattern,
                context_lines=config.context_lines,
                component=component,
            )
        )

    commits = commit_history(repo)
    return Corpus(
        files=files,
        statements=statements,
        commits=commits,
        scale=config.scale,
        sources=sources,
        report=report,
    )
