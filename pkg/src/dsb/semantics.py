"""Vocabulary repositories, DCAT-subset catalog records and the semantic index.

Catalog records keep seven principal properties common to both spaces;
everything else lives in a namespaced ``extensions`` map (``prefix:name``),
which a target space keeps only if it understands the prefix.
"""

from __future__ import annotations

import dataclasses
import enum
import re
import threading
from dataclasses import dataclass, field
from fractions import Fraction

from .encoding import canonical
from .errors import DuplicateModel, SameSpacePair, UnknownModel
from .trust import KeyPair, Signature, sign_record, verify_record
from .verdict import OK, Verdict

PRINCIPAL_PROPERTIES = ("title", "description", "publisher", "theme", "conforms_to", "distribution_endpoint", "issued")
SHARED_EXTENSION_PREFIX = "dsb"
ORIGIN_MODEL_KEY = "dsb:origin-model"
DEFAULT_THRESHOLD = 0.5

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


@canonical
@dataclass(frozen=True)
class SemanticModel:
    model_id: str
    space_id: str
    name: str
    version: str = "1"
    attributes: tuple[tuple[str, str], ...] = ()


@canonical
@dataclass(frozen=True)
class CatalogRecord:
    record_id: str
    title: str | None = None
    description: str | None = None
    publisher: str | None = None
    theme: tuple[str, ...] | None = None
    conforms_to: str | None = None
    distribution_endpoint: str | None = None
    issued: int | None = None
    extensions: dict = field(default_factory=dict)
    signature: Signature | None = None

    def principal(self) -> tuple:
        return tuple(getattr(self, name) for name in PRINCIPAL_PROPERTIES)


@canonical
class IndexOrigin(enum.Enum):
    MANUAL = "Manual"
    AUTO_SUGGESTED = "AutoSuggested"


@canonical
@dataclass(frozen=True)
class IndexEntry:
    model_a: tuple[str, str]
    model_b: tuple[str, str]
    confidence: float
    origin: IndexOrigin = IndexOrigin.MANUAL

    def __post_init__(self):
        object.__setattr__(self, "model_a", tuple(self.model_a))
        object.__setattr__(self, "model_b", tuple(self.model_b))
        if not 0.0 <= float(self.confidence) <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")

    @property
    def key(self) -> tuple[tuple[str, str], tuple[str, str]]:
        return tuple(sorted((self.model_a, self.model_b)))


@dataclass(frozen=True)
class ConversionWarning:
    kind: str
    subject: str

    def __str__(self) -> str:
        return f"{self.kind}({self.subject})"


class VocabularyRepository:
    """A space's repository of data models and vocabularies."""

    def __init__(self, space_id: str):
        self.space_id = space_id
        self.models: dict[tuple[str, str], SemanticModel] = {}
        self._lock = threading.RLock()

    def register(self, model: SemanticModel) -> str:
        if model.space_id != self.space_id:
            raise ValueError(f"model belongs to {model.space_id}, not {self.space_id}")
        with self._lock:
            key = (model.model_id, model.version)
            if key in self.models:
                raise DuplicateModel(f"{model.model_id}@{model.version}")
            self.models[key] = model
        return model.model_id

    def contains(self, model_id: str) -> bool:
        return any(mid == model_id for mid, _ in self.models)

    def get(self, model_id: str, version: str | None = None) -> SemanticModel:
        if version is not None:
            try:
                return self.models[(model_id, version)]
            except KeyError:
                raise UnknownModel(f"{model_id}@{version}") from None
        versions = [m for (mid, _), m in self.models.items() if mid == model_id]
        if not versions:
            raise UnknownModel(model_id)
        return max(versions, key=lambda m: _version_key(m.version))

    def list(self) -> list[SemanticModel]:
        return [self.models[k] for k in sorted(self.models)]

    def latest(self) -> list[SemanticModel]:
        return [self.get(mid) for mid in sorted({mid for mid, _ in self.models})]


def _version_key(version: str):
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in re.split(r"[.\-]", version))


def catalog_validate(record: CatalogRecord, repo: VocabularyRepository) -> Verdict:
    for name in PRINCIPAL_PROPERTIES:
        value = getattr(record, name)
        if value is None or (isinstance(value, str) and not value.strip()):
            return Verdict("MissingPrincipalProperty", name)
    if not repo.contains(record.conforms_to):
        return Verdict("UnknownModel", record.conforms_to)
    return OK


def understands(space, key: str) -> bool:
    prefix = key.split(":", 1)[0] if ":" in key else ""
    return prefix == SHARED_EXTENSION_PREFIX or prefix in tuple(space.catalog_extensions)


def catalog_convert(record: CatalogRecord, from_space, to_space, index: "SemanticIndex"):
    """Re-express ``record`` for ``to_space``; never fails.

    ``from_space``/``to_space`` are anything with ``space_id`` and
    ``catalog_extensions`` (normally a SpaceDefinition). Returns the new
    record and a list of :class:`ConversionWarning`.
    """
    warnings: list[ConversionWarning] = []
    extensions: dict[str, str] = {}
    conforms_to = record.conforms_to
    origin = record.extensions.get(ORIGIN_MODEL_KEY)
    origin_space, _, origin_model = (origin or "").partition("/")
    if origin and origin_space == to_space.space_id:
        conforms_to = origin_model
    else:
        matches = index.lookup(from_space.space_id, record.conforms_to, to_space.space_id) if conforms_to else []
        if matches:
            conforms_to = matches[0][0]
            extensions[ORIGIN_MODEL_KEY] = origin or f"{from_space.space_id}/{record.conforms_to}"
        else:
            warnings.append(ConversionWarning("PortabilityWarning", str(record.conforms_to)))
            if origin:
                extensions[ORIGIN_MODEL_KEY] = origin
    for key in sorted(record.extensions):
        if key == ORIGIN_MODEL_KEY:
            continue
        if understands(to_space, key):
            extensions[key] = record.extensions[key]
        else:
            warnings.append(ConversionWarning("DroppedExtension", key))
    converted = dataclasses.replace(record, conforms_to=conforms_to, extensions=extensions, signature=None)
    return converted, warnings


def sign_catalog_record(record: CatalogRecord, keypair: KeyPair) -> CatalogRecord:
    return sign_record(record, keypair)


def verify_catalog_record(record: CatalogRecord, publisher_key: bytes) -> bool:
    return verify_record(record, publisher_key)


def name_tokens(model: SemanticModel) -> frozenset[str]:
    """Lower-case alphanumeric tokens of the model name and attribute names."""
    text = " ".join([model.name, *(attr for attr, _ in model.attributes)])
    return frozenset(t for t in _TOKEN_SPLIT.split(text.lower()) if t)


def token_overlap(a: SemanticModel, b: SemanticModel) -> float:
    ta, tb = name_tokens(a), name_tokens(b)
    union = ta | tb
    if not union:
        return 0.0
    return float(Fraction(len(ta & tb), len(union)))


class SemanticIndex:
    """Cross-space correspondence between models of different repositories."""

    def __init__(self, repositories: dict[str, VocabularyRepository]):
        self.repositories = repositories
        self.entries: dict[tuple, IndexEntry] = {}
        self._lock = threading.RLock()

    def _check(self, ref: tuple[str, str]) -> None:
        space, model_id = ref
        repo = self.repositories.get(space)
        if repo is None or not repo.contains(model_id):
            raise UnknownModel(f"{space}/{model_id}")

    def add(self, entry: IndexEntry) -> IndexEntry:
        if entry.model_a[0] == entry.model_b[0]:
            raise SameSpacePair(entry.model_a[0])
        self._check(entry.model_a)
        self._check(entry.model_b)
        with self._lock:
            current = self.entries.get(entry.key)
            if current is not None and current.confidence > entry.confidence:
                return current
            self.entries[entry.key] = entry
            return entry

    def lookup(self, space_id: str, model_id: str, target_space: str) -> list[tuple[str, IndexEntry]]:
        """Target-space model ids mapped to ``(space_id, model_id)``, best first."""
        ref = (space_id, model_id)
        hits = []
        with self._lock:
            entries = list(self.entries.values())
        for e in entries:
            other = e.model_b if e.model_a == ref else e.model_a if e.model_b == ref else None
            if other is not None and other[0] == target_space:
                hits.append((other[1], e))
        hits.sort(key=lambda h: (-h[1].confidence, h[0]))
        return hits

    def all_entries(self) -> list[IndexEntry]:
        with self._lock:
            return [self.entries[k] for k in sorted(self.entries)]

    def suggest(self, repo_a: VocabularyRepository, repo_b: VocabularyRepository, threshold: float = DEFAULT_THRESHOLD):
        """Name-identification suggestions between two repositories (not stored)."""
        out = []
        for ma in repo_a.latest():
            for mb in repo_b.latest():
                conf = token_overlap(ma, mb)
                if conf > 0 and conf >= threshold:
                    out.append(
                        IndexEntry(
                            (repo_a.space_id, ma.model_id),
                            (repo_b.space_id, mb.model_id),
                            conf,
                            IndexOrigin.AUTO_SUGGESTED,
                        )
                    )
        out.sort(key=lambda e: (-e.confidence, e.model_a[1], e.model_b[1]))
        return out


@dataclass(frozen=True)
class CatalogQuery:
    theme: str | None = None
    publisher: str | None = None
    model_id: str | None = None

    def matches(self, record: CatalogRecord, also_models: tuple[str, ...] = ()) -> bool:
        if self.theme is not None and self.theme not in (record.theme or ()):
            return False
        if self.publisher is not None and record.publisher != self.publisher:
            return False
        if self.model_id is not None and self.model_id not in (record.conforms_to, *also_models):
            return False
        return True


class CatalogStore:
    """A space's published catalog records, keyed by (publisher, record id)."""

    def __init__(self, space_id: str):
        self.space_id = space_id
        self.records: dict[tuple[str, str], CatalogRecord] = {}
        self._lock = threading.RLock()

    def put(self, record: CatalogRecord) -> None:
        with self._lock:
            self.records[(record.publisher, record.record_id)] = record

    def get(self, publisher: str, record_id: str) -> CatalogRecord | None:
        return self.records.get((publisher, record_id))

    def search(self, query: CatalogQuery) -> list[CatalogRecord]:
        with self._lock:
            items = sorted(self.records.items())
        return [r for _, r in items if query.matches(r)]

    def all(self) -> list[CatalogRecord]:
        with self._lock:
            return [self.records[k] for k in sorted(self.records)]
