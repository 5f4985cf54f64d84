"""Thin wrappers over the git command line."""

from __future__ import annotations

import subprocess
from pathlib import Path

from .model import CommitRecord


class NotAGitRepo(ValueError):
    pass


def _git(repo: Path, *args: str) -> str:
    proc = subprocess.run(
        ["git", "-C", str(repo), *args],
        capture_output=True,
        check=False,
    )
    if proc.returncode != 0:
        raise RuntimeError(f"git {' '.join(args)} failed: {proc.stderr.decode(errors='replace').strip()}")
    return proc.stdout.decode("utf-8", errors="replace")


def ensure_repo(repo: Path) -> None:
    if not repo.is_dir():
        raise NotAGitRepo(f"{repo} is not a directory")
    proc = subprocess.run(
        ["git", "-C", str(repo), "rev-parse", "--is-inside-work-tree"],
        capture_output=True,
        check=False,
    )
    if proc.returncode != 0 or proc.stdout.strip() != b"true":
        raise NotAGitRepo(f"{repo} is not a git working tree")


def tracked_files(repo: Path) -> list[str]:
    out = _git(repo, "ls-files", "-z")
    return sorted(p for p in out.split("\0") if p)


def has_commits(repo: Path) -> bool:
    proc = subprocess.run(
        ["git", "-C", str(repo), "rev-parse", "--verify", "-q", "HEAD"],
        capture_output=True,
        check=False,
    )
    return proc.returncode == 0


_RS = "\x1e"
_FS = "\x1f"


def commit_history(repo: Path) -> list[CommitRecord]:
    """Every commit reachable from HEAD, oldest first.

    Identity is the lowercased author email; the timestamp is the committer
    time. Paths are as git reports them (no rename following).
    """
    if not has_commits(repo):
        return []
    out = _git(
        repo,
        "log",
        "--no-color",
        "--name-only",
        f"--format={_RS}%H{_FS}%ae{_FS}%ct",
    )
    records = []
    for chunk in out.split(_RS):
        chunk = chunk.strip("\n")
        if not chunk:
            continue
        header, _, rest = chunk.partition("\n")
        sha, email, ts = header.split(_FS)
        touched = tuple(sorted({p for p in rest.splitlines() if p.strip()}))
        records.append(CommitRecord(sha, email.strip().lower(), int(ts), touched))
    # git log is newest first; stable reverse keeps topological order for equal timestamps
    records.reverse()
    return records
