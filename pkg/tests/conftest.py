from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthetic import PlantedLayout, make_fixture_repo, make_planted_repo  # noqa: E402


@pytest.fixture
def fixture_repo(tmp_path):
    repo = tmp_path / "repo"
    expected = make_fixture_repo(repo)
    return repo, expected


@pytest.fixture(scope="session")
def planted_repo(tmp_path_factory):
    repo = tmp_path_factory.mktemp("planted") / "repo"
    files = make_planted_repo(repo, PlantedLayout())
    return repo, files


@pytest.fixture(scope="session")
def planted_corpus(planted_repo, tmp_path_factory):
    """Planted repository taken through ingest, all clusterings and the index."""
    from levelscope.pipeline import cluster, index, ingest

    repo, files = planted_repo
    out = tmp_path_factory.mktemp("planted_corpus") / "corpus"
    ingest(repo, out)
    cluster(out, "all")
    index(out)
    return out, files


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line; returns the boolean for a final assert."""

    def record(criterion: int, check: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {check} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
