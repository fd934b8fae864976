"""Space definitions, participant onboarding, devices, endpoint resolver and CA."""

from __future__ import annotations

import dataclasses
import enum
import re
import threading
from dataclasses import dataclass, field

from .encoding import canonical
from .errors import (
    BadDomain,
    CertificateIssuanceFailed,
    DuplicateApplication,
    MissingField,
    OwnerNotActive,
    UnknownDevice,
    UnknownParticipant,
    ValidationFailed,
)
from .identity import ClearingHouse, IdentityProvider, VerifiableDataRegistry
from .rules import Application, ValidationReport, run_rules
from .trust import (
    DidDocument,
    EndpointCertificate,
    KeyPair,
    MembershipCredential,
    PasswordCredential,
    ValidationLevel,
    did_for_key,
    sign_record,
    verify_record,
)

_LABEL = re.compile(r"^[a-z0-9](?:[a-z0-9-]{0,61}[a-z0-9])?$")


class TrustModel(enum.Enum):
    CENTRALIZED = "Centralized"
    DECENTRALIZED = "Decentralized"


@dataclass(frozen=True)
class SpaceDefinition:
    """Static description of one data space and its capabilities."""

    space_id: str
    trust_model: TrustModel
    validation_policy: tuple[str, ...]
    recognized_clearing_houses: frozenset[str] = frozenset()
    recognized_foreign_frameworks: frozenset[str] = frozenset()
    country_allowlist: tuple[str, ...] = ()
    resolver_keys: tuple[str, ...] = ("participant-id", "connector-id")
    negotiation_api: bool = False
    pms: bool = False
    ddp: bool = False
    catalog_signing: bool = False
    contract_registry: bool = False
    catalog_extensions: tuple[str, ...] = ()

    @property
    def centralized(self) -> bool:
        return self.trust_model is TrustModel.CENTRALIZED


@canonical
class ParticipantStatus(enum.Enum):
    APPLIED = "Applied"
    VALIDATED = "Validated"
    ACTIVE = "Active"
    REJECTED = "Rejected"


_NEXT_STATUS = {
    ParticipantStatus.APPLIED: {ParticipantStatus.VALIDATED, ParticipantStatus.REJECTED},
    ParticipantStatus.VALIDATED: {ParticipantStatus.ACTIVE},
    ParticipantStatus.ACTIVE: set(),
    ParticipantStatus.REJECTED: set(),
}


@canonical
@dataclass(frozen=True)
class Participant:
    participant_id: str
    legal_name: str | None
    country: str | None
    lei: str | None
    space_id: str
    status: ParticipantStatus = ParticipantStatus.APPLIED
    credential_ref: str | None = None
    public_key: bytes | None = None
    did: str | None = None

    def advance(self, status: ParticipantStatus, **changes) -> "Participant":
        if status not in _NEXT_STATUS[self.status]:
            raise ValueError(f"illegal participant transition {self.status.value} -> {status.value}")
        moved = dataclasses.replace(self, status=status, **changes)
        if moved.status is ParticipantStatus.ACTIVE and not moved.credential_ref:
            raise ValueError("an Active participant must hold a credential")
        return moved


@canonical
@dataclass(frozen=True)
class Device:
    device_id: str
    owner: str
    endpoint_domain: str
    certificate: EndpointCertificate
    public_key: bytes
    resolver_registered: bool = True


@canonical
class EndpointStatus(enum.Enum):
    OK = "Ok"
    DOMAIN_MISMATCH = "DomainMismatch"
    KEY_MISMATCH = "KeyMismatch"
    EXPIRED_CERT = "ExpiredCert"
    BAD_CA_SIGNATURE = "BadCaSignature"


def check_domain(domain: str) -> str:
    if not isinstance(domain, str) or not domain:
        raise BadDomain(repr(domain))
    labels = domain.lower().split(".")
    if not all(_LABEL.match(label) for label in labels):
        raise BadDomain(domain)
    return domain.lower()


class CertificateAuthority:
    """External CA issuing endpoint certificates against common standards."""

    def __init__(self, ca_id: str, keypair: KeyPair, ttl: int = 31_536_000):
        self.ca_id = ca_id
        self.keypair = keypair
        self.ttl = ttl

    @property
    def public_key(self) -> bytes:
        return self.keypair.public_key

    def issue(
        self,
        domain: str,
        subject_public_key: bytes,
        level: ValidationLevel = ValidationLevel.EXTENDED_VALIDATION,
        now: int = 0,
    ) -> EndpointCertificate:
        cert = EndpointCertificate(
            domain=check_domain(domain),
            subject_public_key=bytes(subject_public_key),
            validation_level=level,
            issuer_ca=self.ca_id,
            not_after=now + self.ttl,
        )
        return sign_record(cert, self.keypair)


def verify_endpoint(
    certificate: EndpointCertificate,
    claimed_domain: str,
    presented_public_key: bytes,
    ca_public_key: bytes,
    now: int,
) -> EndpointStatus:
    """Checks domain, key, expiry, CA signature; first failure wins."""
    if not isinstance(certificate, EndpointCertificate):
        return EndpointStatus.BAD_CA_SIGNATURE
    if not isinstance(claimed_domain, str) or certificate.domain != claimed_domain.lower():
        return EndpointStatus.DOMAIN_MISMATCH
    if certificate.subject_public_key != presented_public_key:
        return EndpointStatus.KEY_MISMATCH
    if now >= certificate.not_after:
        return EndpointStatus.EXPIRED_CERT
    if not verify_record(certificate, ca_public_key):
        return EndpointStatus.BAD_CA_SIGNATURE
    return EndpointStatus.OK


class EndpointResolver:
    """Space-operated directory from search keys to validated endpoints."""

    def __init__(self, space_id: str, registry: "ParticipantRegistry", key_kinds=("participant-id", "connector-id")):
        self.space_id = space_id
        self.registry = registry
        self.key_kinds = tuple(key_kinds)
        self.entries: dict[str, dict[str, tuple[str, str]]] = {}
        self._lock = threading.RLock()

    def add(self, device: Device) -> None:
        if not self.registry.is_active(device.owner):
            raise OwnerNotActive(device.owner)
        keys = []
        if "participant-id" in self.key_kinds:
            keys.append(device.owner)
        if "connector-id" in self.key_kinds:
            keys.append(device.device_id)
        with self._lock:
            for key in keys:
                self.entries.setdefault(key, {})[device.device_id] = (device.endpoint_domain, device.owner)

    def remove(self, device_id: str) -> None:
        with self._lock:
            for key in list(self.entries):
                self.entries[key].pop(device_id, None)
                if not self.entries[key]:
                    del self.entries[key]

    def resolve(self, search_key: str) -> list[tuple[str, str]]:
        """Endpoints for ``search_key`` ordered by device id; owners must be Active now."""
        with self._lock:
            found = sorted(self.entries.get(search_key, {}).items())
        return [(domain, owner) for _, (domain, owner) in found if self.registry.is_active(owner)]


@dataclass(frozen=True)
class Onboarded:
    participant: Participant
    credential: PasswordCredential | MembershipCredential


class ParticipantRegistry:
    """Per-space participant registry backed by the space's identity framework."""

    def __init__(
        self,
        definition: SpaceDefinition,
        issuer_keypair: KeyPair,
        idp: IdentityProvider | None = None,
        vdr: VerifiableDataRegistry | None = None,
        clearing_houses: dict[str, ClearingHouse] | None = None,
    ):
        if definition.centralized and idp is None:
            raise ValueError("a centralized space needs an identity provider")
        if not definition.centralized and vdr is None:
            raise ValueError("a decentralized space needs a verifiable data registry")
        self.definition = definition
        self.issuer_keypair = issuer_keypair
        self.idp = idp
        self.vdr = vdr
        self.clearing_houses = {
            ch_id: ch for ch_id, ch in (clearing_houses or {}).items() if ch_id in definition.recognized_clearing_houses
        }
        self.participants: dict[str, Participant] = {}
        self.devices: dict[str, Device] = {}
        self.resolver = EndpointResolver(definition.space_id, self, definition.resolver_keys)
        self._lock = threading.RLock()

    @property
    def space_id(self) -> str:
        return self.definition.space_id

    def get(self, participant_id: str) -> Participant:
        try:
            return self.participants[participant_id]
        except KeyError:
            raise UnknownParticipant(participant_id) from None

    def is_active(self, participant_id: str) -> bool:
        p = self.participants.get(participant_id)
        return p is not None and p.status is ParticipantStatus.ACTIVE

    def registered_key(self, participant_id: str) -> bytes:
        key = self.get(participant_id).public_key
        if key is None:
            raise UnknownParticipant(participant_id)
        return key

    def validate(self, application: Application) -> ValidationReport:
        """Space-specific rules followed by every recognized clearing house."""
        params = {"country_allowlist": self.definition.country_allowlist}
        results: list[tuple[str, bool]] = []
        checks = [("", rule, params) for rule in self.definition.validation_policy]
        for ch_id in sorted(self.clearing_houses):
            ch = self.clearing_houses[ch_id]
            checks += [(f"{ch_id}:", rule, ch.params) for rule in ch.validation_rules]
        for prefix, rule, rule_params in checks:
            try:
                ok = run_rules((rule,), application, rule_params).passed
            except MissingField:
                ok = False
            results.append((prefix + rule, ok))
        return ValidationReport(tuple(results))

    def onboard(self, application: Application, now: int) -> Onboarded:
        with self._lock:
            pid = application.participant_id
            if pid in self.participants:
                raise DuplicateApplication(pid)
            participant = Participant(
                participant_id=pid,
                legal_name=application.legal_name,
                country=application.country,
                lei=application.lei,
                space_id=self.space_id,
                public_key=application.public_key,
            )
            self.participants[pid] = participant
            report = self.validate(application)
            credential_missing = (
                application.secret is None if self.definition.centralized else application.public_key is None
            )
            if credential_missing:
                report = ValidationReport(report.results + (("credential-material", False),))
            if not report.passed:
                self.participants[pid] = participant.advance(ParticipantStatus.REJECTED)
                raise ValidationFailed(report.failed_rules, self.participants[pid])
            participant = participant.advance(ParticipantStatus.VALIDATED)
            credential: PasswordCredential | MembershipCredential
            if self.definition.centralized:
                credential = self.idp.register(pid, application.secret)
                participant = participant.advance(ParticipantStatus.ACTIVE, credential_ref=pid)
            else:
                did = did_for_key(application.public_key)
                self.vdr.register(DidDocument(did, bytes(application.public_key), self.space_id))
                credential = self.vdr.issue_membership_vc(self.issuer_keypair, did, now)
                participant = participant.advance(
                    ParticipantStatus.ACTIVE, credential_ref=credential.credential_id, did=did
                )
            self.participants[pid] = participant
            return Onboarded(participant, credential)

    def register_device(
        self,
        participant_id: str,
        endpoint_domain: str,
        device_public_key: bytes,
        ca: CertificateAuthority,
        now: int,
        device_id: str | None = None,
    ) -> Device:
        with self._lock:
            if not self.is_active(participant_id):
                raise OwnerNotActive(participant_id)
            if device_id is None:
                n = sum(1 for d in self.devices.values() if d.owner == participant_id) + 1
                device_id = f"{participant_id}/conn-{n}"
            try:
                cert = ca.issue(endpoint_domain, device_public_key, ValidationLevel.EXTENDED_VALIDATION, now)
            except BadDomain as exc:
                raise CertificateIssuanceFailed(str(exc.detail)) from exc
            device = Device(device_id, participant_id, cert.domain, cert, bytes(device_public_key))
            self.devices[device_id] = device
            self.resolver.add(device)
            return device

    def deregister_device(self, device_id: str) -> Device:
        with self._lock:
            if device_id not in self.devices:
                raise UnknownDevice(device_id)
            device = dataclasses.replace(self.devices[device_id], resolver_registered=False)
            self.devices[device_id] = device
            self.resolver.remove(device_id)
            return device

    def replace_certificate(self, device_id: str, certificate: EndpointCertificate) -> Device:
        with self._lock:
            if device_id not in self.devices:
                raise UnknownDevice(device_id)
            device = dataclasses.replace(self.devices[device_id], certificate=certificate)
            self.devices[device_id] = device
            return device

    def devices_of(self, participant_id: str) -> list[Device]:
        return sorted((d for d in self.devices.values() if d.owner == participant_id), key=lambda d: d.device_id)

    def to_records(self) -> list[dict]:
        from .serial import to_jsonable

        with self._lock:
            rows = [{"type": "participant", **to_jsonable(p)} for _, p in sorted(self.participants.items())]
            rows += [{"type": "device", **to_jsonable(d)} for _, d in sorted(self.devices.items())]
        return rows

    def load_records(self, rows) -> None:
        from .serial import from_jsonable

        with self._lock:
            for row in rows:
                body = {k: v for k, v in row.items() if k != "type"}
                if row["type"] == "participant":
                    p = from_jsonable(Participant, body)
                    self.participants[p.participant_id] = p
                elif row["type"] == "device":
                    d = from_jsonable(Device, body)
                    self.devices[d.device_id] = d
                    if d.resolver_registered:
                        self.resolver.add(d)
