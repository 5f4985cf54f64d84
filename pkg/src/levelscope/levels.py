"""Ordered log level scales."""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_LEVELS = ("trace", "debug", "info", "warn", "error", "fatal")

# Spellings some loggers use for a canonical level.
ALIASES = {"warning": "warn", "severe": "error", "critical": "fatal"}


@dataclass(frozen=True)
class LevelScale:
    """Level names ordered from most to least verbose."""

    names: tuple[str, ...] = DEFAULT_LEVELS

    def __post_init__(self) -> None:
        names = tuple(n.lower() for n in self.names)
        if not names:
            raise ValueError("level scale must not be empty")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate level names in {names}")
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: object) -> bool:
        return isinstance(name, str) and name.lower() in self.names

    def ordinal(self, name: str) -> int:
        try:
            return self.names.index(name.lower())
        except ValueError:
            raise KeyError(f"unknown level {name!r}; scale is {list(self.names)}") from None

    def canonical(self, token: str) -> str | None:
        """Map a raw token to a scale name, or None if it is not a level."""
        t = token.lower()
        if t in self.names:
            return t
        alias = ALIASES.get(t)
        if alias in self.names:
            return alias
        return None

    def max_distance(self, name: str) -> int:
        o = self.ordinal(name)
        return max(o, len(self.names) - 1 - o)
