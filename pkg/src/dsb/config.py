"""Simulation configuration: parsing, validation and scenario overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import ParseError, SemanticError
from .registry import SpaceDefinition, TrustModel
from .rules import check_rule_ids
from .semantics import DEFAULT_THRESHOLD, SemanticModel

DEFAULT_CONFIG_NAME = "default.json"


@dataclass(frozen=True)
class SpaceConfig:
    definition: SpaceDefinition
    token_ttl: int
    preload_models: tuple[SemanticModel, ...] = ()


@dataclass(frozen=True)
class ClearingHouseConfig:
    id: str
    rules: tuple[str, ...]
    country_allowlist: tuple[str, ...] = ()


@dataclass(frozen=True)
class SimulationConfig:
    spaces: tuple[SpaceConfig, ...]
    clearing_houses: tuple[ClearingHouseConfig, ...] = ()
    token_ttl: int = 3600
    ca_id: str = "sim-ca"
    ca_ttl: int = 31_536_000
    shared_ca: bool = True
    broker_id: str = "ext-broker"
    broker_available: bool = True
    index_threshold: float = DEFAULT_THRESHOLD
    clock_start: int = 0
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    def space(self, space_id: str) -> SpaceConfig:
        for s in self.spaces:
            if s.definition.space_id == space_id:
                return s
        raise KeyError(space_id)

    @property
    def space_ids(self) -> tuple[str, ...]:
        return tuple(s.definition.space_id for s in self.spaces)


def default_config_text() -> str:
    return resources.files("dsb.data").joinpath(DEFAULT_CONFIG_NAME).read_text(encoding="utf-8")


def load_config(path: str | Path | None = None) -> SimulationConfig:
    """Load a JSON config file, or the shipped default when ``path`` is None."""
    if path is None:
        text = default_config_text()
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_config(parse_json(text))


def parse_json(text: str) -> Any:
    if not text.strip():
        raise ParseError(1, "ParseError(line 1): empty configuration")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, f"ParseError(line {exc.lineno}): {exc.msg}") from None


def _get(obj: dict, key: str, kind, where: str, default=...):
    if key not in obj:
        if default is ...:
            raise SemanticError(f"{where}.{key}", f"SemanticError({where}.{key}): required")
        return default
    value = obj[key]
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise SemanticError(f"{where}.{key}", f"SemanticError({where}.{key}): expected {getattr(kind, '__name__', kind)}")
    return value


def _str_list(obj: dict, key: str, where: str) -> tuple[str, ...]:
    values = _get(obj, key, list, where, [])
    if not all(isinstance(v, str) for v in values):
        raise SemanticError(f"{where}.{key}", f"SemanticError({where}.{key}): expected list of strings")
    return tuple(values)


def _model(raw: dict, space_id: str, where: str) -> SemanticModel:
    attrs = _get(raw, "attributes", list, where, [])
    try:
        attributes = tuple((str(a[0]), str(a[1])) for a in attrs)
    except (TypeError, IndexError):
        raise SemanticError(f"{where}.attributes", f"SemanticError({where}.attributes): pairs expected") from None
    return SemanticModel(
        model_id=_get(raw, "model_id", str, where),
        space_id=space_id,
        name=_get(raw, "name", str, where),
        version=str(_get(raw, "version", (str, int), where, "1")),
        attributes=attributes,
    )


def parse_config(raw: Any) -> SimulationConfig:
    if not isinstance(raw, dict):
        raise SemanticError("<root>", "SemanticError(<root>): expected an object")
    token_ttl = _get(raw, "token_ttl", int, "<root>", 3600)
    if token_ttl <= 0:
        raise SemanticError("token_ttl", "SemanticError(token_ttl): must be positive")
    ca = _get(raw, "ca", dict, "<root>", {})
    broker = _get(raw, "broker", dict, "<root>", {})

    houses = []
    for i, ch in enumerate(_get(raw, "clearing_houses", list, "<root>", [])):
        where = f"clearing_houses[{i}]"
        rules = _str_list(ch, "rules", where)
        if not rules:
            raise SemanticError(f"{where}.rules", f"SemanticError({where}.rules): must be non-empty")
        try:
            check_rule_ids(rules, where)
        except SemanticError:
            raise SemanticError(f"{where}.rules") from None
        houses.append(ClearingHouseConfig(_get(ch, "id", str, where), rules, _str_list(ch, "country_allowlist", where)))
    house_ids = [h.id for h in houses]
    if len(set(house_ids)) != len(house_ids):
        raise SemanticError("clearing_houses.id", "SemanticError(clearing_houses.id): duplicate id")

    raw_spaces = _get(raw, "spaces", list, "<root>")
    if not raw_spaces:
        raise SemanticError("spaces", "SemanticError(spaces): at least one space required")
    spaces = []
    seen: set[str] = set()
    for i, s in enumerate(raw_spaces):
        where = f"spaces[{i}]"
        if not isinstance(s, dict):
            raise SemanticError(where)
        sid = _get(s, "space_id", str, where)
        if sid in seen:
            raise SemanticError(f"{where}.space_id", f"SemanticError({where}.space_id): duplicate space_id {sid!r}")
        seen.add(sid)
        try:
            trust = TrustModel(_get(s, "trust_model", str, where))
        except ValueError:
            raise SemanticError(f"{where}.trust_model", f"SemanticError({where}.trust_model): unknown") from None
        policy = _str_list(s, "validation_policy", where)
        try:
            check_rule_ids(policy, where)
        except SemanticError:
            raise SemanticError(f"{where}.validation_policy") from None
        chs = _str_list(s, "recognized_clearing_houses", where)
        for ch in chs:
            if ch not in house_ids:
                raise SemanticError(f"{where}.recognized_clearing_houses", f"SemanticError: unknown clearing house {ch!r}")
        caps = _get(s, "capabilities", dict, where, {})
        for key, value in caps.items():
            if not isinstance(value, bool):
                raise SemanticError(f"{where}.capabilities.{key}")
        unknown_caps = set(caps) - {"negotiation_api", "pms", "ddp", "catalog_signing", "contract_registry"}
        if unknown_caps:
            raise SemanticError(f"{where}.capabilities.{sorted(unknown_caps)[0]}")
        resolver_keys = _str_list(s, "resolver_keys", where) or ("participant-id", "connector-id")
        if set(resolver_keys) - {"participant-id", "connector-id"}:
            raise SemanticError(f"{where}.resolver_keys")
        definition = SpaceDefinition(
            space_id=sid,
            trust_model=trust,
            validation_policy=policy,
            recognized_clearing_houses=frozenset(chs),
            recognized_foreign_frameworks=frozenset(_str_list(s, "recognized_foreign_frameworks", where)),
            country_allowlist=_str_list(s, "country_allowlist", where),
            resolver_keys=resolver_keys,
            catalog_extensions=_str_list(s, "catalog_extensions", where),
            **{k: bool(v) for k, v in caps.items()},
        )
        models = tuple(
            _model(m, sid, f"{where}.preload_models[{j}]") for j, m in enumerate(_get(s, "preload_models", list, where, []))
        )
        ttl = _get(s, "token_ttl", int, where, token_ttl)
        if ttl <= 0:
            raise SemanticError(f"{where}.token_ttl")
        spaces.append(SpaceConfig(definition, ttl, models))
    for sc in spaces:
        for foreign in sc.definition.recognized_foreign_frameworks:
            if foreign not in seen or foreign == sc.definition.space_id:
                raise SemanticError(
                    f"{sc.definition.space_id}.recognized_foreign_frameworks",
                    f"SemanticError: cannot recognize {foreign!r}",
                )
    threshold = _get(raw, "index_threshold", (int, float), "<root>", DEFAULT_THRESHOLD)
    if not 0 <= threshold <= 1:
        raise SemanticError("index_threshold")
    return SimulationConfig(
        spaces=tuple(spaces),
        clearing_houses=tuple(houses),
        token_ttl=token_ttl,
        ca_id=_get(ca, "id", str, "ca", "sim-ca"),
        ca_ttl=_get(ca, "ttl", int, "ca", 31_536_000),
        shared_ca=_get(ca, "shared", bool, "ca", True),
        broker_id=_get(broker, "id", str, "broker", "ext-broker"),
        broker_available=_get(broker, "available", bool, "broker", True),
        index_threshold=float(threshold),
        clock_start=_get(raw, "clock_start", int, "<root>", 0),
        raw=copy.deepcopy(raw),
    )


def apply_overrides(raw: dict, overrides: dict | None) -> dict:
    """Merge scenario overrides into a raw config.

    ``overrides["spaces"]`` maps space ids to partial space objects; other
    keys merge recursively.
    """
    merged = copy.deepcopy(raw)
    if not overrides:
        return merged
    for key, value in overrides.items():
        if key == "spaces" and isinstance(value, dict):
            by_id = {s["space_id"]: s for s in merged.get("spaces", [])}
            for sid, patch in value.items():
                if sid not in by_id:
                    raise SemanticError(f"overrides.spaces.{sid}", f"SemanticError: no space {sid!r} to override")
                _deep_merge(by_id[sid], patch)
        elif isinstance(value, dict) and isinstance(merged.get(key), dict):
            _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _deep_merge(target: dict, patch: dict) -> None:
    for k, v in patch.items():
        if isinstance(v, dict) and isinstance(target.get(k), dict):
            _deep_merge(target[k], v)
        else:
            target[k] = copy.deepcopy(v)
