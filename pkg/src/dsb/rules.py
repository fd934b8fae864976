"""Onboarding validation rules.

A rule is a predicate over an :class:`Application` plus per-space
parameters. Rules raise :class:`MissingField` when the application lacks
the input they need, and return ``False`` when the input is present but
fails the check.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .errors import MissingField, SemanticError

_LEI_SHAPE = re.compile(r"^[0-9A-Z]{18}[0-9]{2}$")


@dataclass(frozen=True)
class Application:
    participant_id: str
    legal_name: str | None = None
    country: str | None = None
    lei: str | None = None
    secret: str | None = field(default=None, repr=False)
    public_key: bytes | None = None


@dataclass(frozen=True)
class ValidationReport:
    results: tuple[tuple[str, bool], ...]

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.results)

    @property
    def failed_rules(self) -> tuple[str, ...]:
        return tuple(rule for rule, ok in self.results if not ok)


def lei_is_valid(lei: str) -> bool:
    """ISO 17442 check: 18 alphanumerics + 2 check digits, MOD 97-10 == 1."""
    if not isinstance(lei, str) or not _LEI_SHAPE.match(lei):
        return False
    return int("".join(str(int(c, 36)) for c in lei)) % 97 == 1


def lei_with_check_digits(prefix18: str) -> str:
    """Complete an 18-character prefix with its ISO 7064 check digits."""
    prefix18 = prefix18.upper()
    if len(prefix18) != 18 or not prefix18.isalnum():
        raise ValueError("LEI prefix must be 18 alphanumeric characters")
    n = int("".join(str(int(c, 36)) for c in prefix18 + "00"))
    return f"{prefix18}{98 - n % 97:02d}"


def _require(app: Application, name: str, rule_id: str):
    value = getattr(app, name)
    if value is None:
        raise MissingField(rule_id)
    return value


def _nonempty_legal_name(app: Application, params: Mapping) -> bool:
    return bool(_require(app, "legal_name", "nonempty-legal-name").strip())


def _country_allowlist(app: Application, params: Mapping) -> bool:
    country = _require(app, "country", "country-allowlist")
    allowed = params.get("country_allowlist")
    if not allowed:
        return True
    return country.upper() in {c.upper() for c in allowed}


def _lei_check(app: Application, params: Mapping) -> bool:
    return lei_is_valid(_require(app, "lei", "lei-check"))


RULES: dict[str, Callable[[Application, Mapping], bool]] = {
    "nonempty-legal-name": _nonempty_legal_name,
    "country-allowlist": _country_allowlist,
    "lei-check": _lei_check,
}


def check_rule_ids(rule_ids, where: str) -> None:
    for rule_id in rule_ids:
        if rule_id not in RULES:
            raise SemanticError(f"{where}: unknown rule {rule_id!r}")


def run_rules(rule_ids, app: Application, params: Mapping | None = None) -> ValidationReport:
    """Evaluate rules in order; each rule id appears exactly once in the report."""
    params = params or {}
    seen: dict[str, bool] = {}
    for rule_id in rule_ids:
        if rule_id in seen:
            continue
        seen[rule_id] = bool(RULES[rule_id](app, params))
    return ValidationReport(tuple(seen.items()))
