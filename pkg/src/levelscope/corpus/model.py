from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..levels import LevelScale

MASK = "<MASKED_LEVEL>"
UNKNOWN_COMPONENT = "unknown"
DEFAULT_LOGGER_PATTERN = r"(?i)^\w*log(ger)?$"


@dataclass(frozen=True)
class SourceFile:
    path: str
    content_hash: str
    language: str  # "java" or "other"
    component_label: str = UNKNOWN_COMPONENT
    loc: int = 0

    def __post_init__(self) -> None:
        if not self.component_label:
            object.__setattr__(self, "component_label", UNKNOWN_COMPONENT)


@dataclass(frozen=True)
class LoggingStatement:
    id: str
    file: str
    line: int
    level: str
    message_template: str
    method_span: tuple[int, int]
    context_window: str
    component: str = UNKNOWN_COMPONENT


@dataclass(frozen=True)
class CommitRecord:
    commit_id: str
    author_id: str
    timestamp: int
    touched_files: tuple[str, ...]


@dataclass
class ScanReport:
    unreadable: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class CorpusConfig:
    extensions: tuple[str, ...] = (".java",)
    logger_pattern: str = DEFAULT_LOGGER_PATTERN
    context_lines: int = 10
    scale: LevelScale = field(default_factory=LevelScale)
    # path prefix -> documentation component label; longest prefix wins
    components: dict[str, str] = field(default_factory=dict)

    def logger_regex(self) -> re.Pattern[str]:
        return re.compile(self.logger_pattern)

    def component_for(self, path: str) -> str:
        best = ""
        label = UNKNOWN_COMPONENT
        for prefix, name in self.components.items():
            if path.startswith(prefix) and len(prefix) > len(best):
                best, label = prefix, name
        return label or UNKNOWN_COMPONENT


@dataclass
class Corpus:
    files: list[SourceFile]
    statements: list[LoggingStatement]
    commits: list[CommitRecord]
    scale: LevelScale = field(default_factory=LevelScale)
    sources: dict[str, str] = field(default_factory=dict)
    report: ScanReport = field(default_factory=ScanReport)
    _hash: str | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        paths = [f.path for f in self.files]
        if len(set(paths)) != len(paths):
            raise ValueError("duplicate file paths in corpus")

    @property
    def paths(self) -> list[str]:
        return [f.path for f in self.files]

    def file(self, path: str) -> SourceFile | None:
        for f in self.files:
            if f.path == path:
                return f
        return None

    def statement(self, sid: str) -> LoggingStatement | None:
        for s in self.statements:
            if s.id == sid:
                return s
        return None

    def statements_by_file(self) -> dict[str, list[LoggingStatement]]:
        out: dict[str, list[LoggingStatement]] = {f.path: [] for f in self.files}
        for s in self.statements:
            out.setdefault(s.file, []).append(s)
        return out

    @property
    def hash(self) -> str:
        """Content hash, equal to the manifest hash of the stored corpus."""
        if self._hash is None:
            from .store import content_hash

            self._hash = content_hash(self)
        return self._hash

    def has_components(self) -> bool:
        return any(f.component_label != UNKNOWN_COMPONENT for f in self.files)
