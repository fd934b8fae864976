"""Runtime wiring: one ``Network`` holds every space and shared service.

Key material is derived from ``(seed, name)``, so two networks built from
the same config and seed are bit-for-bit identical.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .config import SimulationConfig
from .errors import CapabilityUnavailable, UnknownActor, UnknownConnector, UnknownParticipant
from .exchange import Contract, ExternalBroker
from .identity import ClearingHouse, IdentityProvider, VerifiableDataRegistry
from .provenance import ProvenanceService
from .registry import CertificateAuthority, Participant, ParticipantRegistry, SpaceDefinition
from .semantics import CatalogStore, SemanticIndex, VocabularyRepository
from .trust import DidDocument, KeyPair, did_for_key, generate_keypair, record_digest

if TYPE_CHECKING:
    from .connector import Connector


class SimClock:
    """Integer simulation seconds owned by the harness."""

    def __init__(self, start: int = 0):
        self.now = start
        self._lock = threading.Lock()

    def tick(self, seconds: int = 1) -> int:
        with self._lock:
            self.now += seconds
            return self.now

    def advance(self, seconds: int) -> int:
        if seconds < 0:
            raise ValueError("the clock only moves forward")
        return self.tick(seconds)


@dataclass
class DataSpace:
    definition: SpaceDefinition
    issuer_keypair: KeyPair
    registry: ParticipantRegistry
    repository: VocabularyRepository
    catalog: CatalogStore
    pms: ProvenanceService | None = None
    attested_contracts: dict[str, str] = field(default_factory=dict)

    @property
    def space_id(self) -> str:
        return self.definition.space_id

    @property
    def idp(self) -> IdentityProvider | None:
        return self.registry.idp

    @property
    def vdr(self) -> VerifiableDataRegistry | None:
        return self.registry.vdr

    def attest_contract(self, contract: Contract) -> str:
        if not self.definition.contract_registry:
            raise CapabilityUnavailable(f"{self.space_id}:contract-registry")
        digest = record_digest(contract)
        self.attested_contracts[contract.contract_id] = digest
        return digest

    def verify_contract(self, contract: Contract) -> bool:
        if not self.definition.contract_registry:
            raise CapabilityUnavailable(f"{self.space_id}:contract-registry")
        return self.attested_contracts.get(contract.contract_id) == record_digest(contract)


class Network:
    def __init__(self, config: SimulationConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.clock = SimClock(config.clock_start)
        self.clearing_houses = {
            ch.id: ClearingHouse(
                ch.id,
                ch.rules,
                recognized_by={s.definition.space_id for s in config.spaces if ch.id in s.definition.recognized_clearing_houses},
                params={"country_allowlist": ch.country_allowlist},
            )
            for ch in config.clearing_houses
        }
        self.cas: dict[str, CertificateAuthority] = {}
        self.space_ca: dict[str, str] = {}
        if config.shared_ca:
            self.cas[config.ca_id] = CertificateAuthority(config.ca_id, self.derive_key(f"ca/{config.ca_id}"), config.ca_ttl)
        self.spaces: dict[str, DataSpace] = {}
        for sc in config.spaces:
            d = sc.definition
            issuer = self.derive_key(f"operator/{d.space_id}")
            if d.centralized:
                registry = ParticipantRegistry(
                    d, issuer, idp=IdentityProvider(d.space_id, issuer, sc.token_ttl), clearing_houses=self.clearing_houses
                )
            else:
                doc = DidDocument(did_for_key(issuer.public_key), issuer.public_key, d.space_id)
                registry = ParticipantRegistry(
                    d, issuer, vdr=VerifiableDataRegistry(d.space_id, doc), clearing_houses=self.clearing_houses
                )
            repo = VocabularyRepository(d.space_id)
            for model in sc.preload_models:
                repo.register(model)
            pms = ProvenanceService(self.key_of, f"pms/{d.space_id}") if d.pms else None
            self.spaces[d.space_id] = DataSpace(d, issuer, registry, repo, CatalogStore(d.space_id), pms)
            if config.shared_ca:
                self.space_ca[d.space_id] = config.ca_id
            else:
                ca_id = f"{d.space_id}-ca"
                self.cas[ca_id] = CertificateAuthority(ca_id, self.derive_key(f"ca/{ca_id}"), config.ca_ttl)
                self.space_ca[d.space_id] = ca_id
        self.index = SemanticIndex({sid: s.repository for sid, s in self.spaces.items()})
        self.broker = ExternalBroker(config.broker_id, config.broker_available)
        self.connectors: dict[str, "Connector"] = {}
        self.contracts: dict[str, Contract] = {}
        self.events: list[tuple[int, str, str]] = []
        self._counters: dict[str, int] = {}
        self._lock = threading.RLock()

    def derive_key(self, name: str) -> KeyPair:
        return generate_keypair(f"dsb/{self.seed}/{name}".encode("utf-8"))

    def next_id(self, prefix: str) -> str:
        with self._lock:
            n = self._counters.get(prefix, 0) + 1
            self._counters[prefix] = n
        return f"{prefix}-{n:04d}"

    def space(self, space_id: str) -> DataSpace:
        try:
            return self.spaces[space_id]
        except KeyError:
            raise UnknownParticipant(f"no space {space_id!r}") from None

    def ca_for(self, space_id: str) -> CertificateAuthority:
        return self.cas[self.space_ca[space_id]]

    def trusted_ca_keys(self, space_id: str) -> dict[str, bytes]:
        """CA keys a verifier acting in ``space_id`` accepts."""
        ca = self.ca_for(space_id)
        return {ca.ca_id: ca.public_key}

    def find_participant(self, participant_id: str) -> tuple[DataSpace, Participant]:
        for space in self.spaces.values():
            p = space.registry.participants.get(participant_id)
            if p is not None:
                return space, p
        raise UnknownParticipant(participant_id)

    def key_of(self, participant_id: str) -> bytes:
        """Registered signing key of a participant, via its owning space."""
        try:
            space, p = self.find_participant(participant_id)
        except UnknownParticipant:
            raise UnknownActor(participant_id) from None
        if p.public_key is None:
            raise UnknownActor(participant_id)
        return p.public_key

    def connector(self, name: str) -> "Connector":
        if name in self.connectors:
            return self.connectors[name]
        for c in self.connectors.values():
            if any(h.participant_id == name for h in c.wallet.holdings.values()):
                return c
        raise UnknownConnector(name)

    def record(self, event: str, outcome: str) -> None:
        self.events.append((self.clock.now, event, outcome))
