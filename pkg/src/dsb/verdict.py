from __future__ import annotations

from dataclasses import dataclass

_POSITIVE = frozenset({"Ok", "Valid", "Active", "Accepted"})


@dataclass(frozen=True)
class Verdict:
    """A status name with an optional payload, e.g. ``BrokenLink(1)``."""

    status: str
    detail: str | None = None

    @property
    def ok(self) -> bool:
        return self.status in _POSITIVE

    def __str__(self) -> str:
        return f"{self.status}({self.detail})" if self.detail is not None else self.status


OK = Verdict("Ok")
