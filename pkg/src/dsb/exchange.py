"""Datasets, Data Distribution Packages, contracts and transfer/payment logs."""

from __future__ import annotations

import dataclasses
import enum
import json
import struct
import threading
from dataclasses import dataclass, field
from typing import Callable, Container, Iterable

from .encoding import canonical
from .errors import (
    BrokerUnavailable,
    ContractNotConcluded,
    DecodeError,
    InvalidTransition,
    KeyMismatch,
    NegotiationUnsupported,
    OrderViolation,
    UnknownDataset,
)
from .trust import KeyPair, Signature, digest, record_digest, sign_record, verify_record
from .verdict import OK, Verdict

DDP_MAGIC = b"DDP1"


@canonical
@dataclass(frozen=True)
class Dataset:
    dataset_id: str
    owner: str
    model_id: str
    payload: bytes
    content_hash: str = ""

    def __post_init__(self):
        actual = digest(self.payload)
        if not self.content_hash:
            object.__setattr__(self, "content_hash", actual)
        elif self.content_hash != actual:
            raise ValueError("content_hash does not match payload")


@canonical
@dataclass(frozen=True)
class Manifest:
    dataset_id: str
    creator: str
    created_at: int
    content_hash: str
    model_id: str


@canonical
@dataclass(frozen=True)
class DataPackage:
    dataset_id: str
    payload: bytes
    manifest: Manifest
    creator_signature: Signature | None = None


@canonical
class PackageStatus(enum.Enum):
    OK = "Ok"
    HASH_MISMATCH = "HashMismatch"
    BAD_SIGNATURE = "BadSignature"


def package_sign(dataset: Dataset, creator_keypair: KeyPair, now: int, registered_key: bytes) -> DataPackage:
    """Wrap ``dataset`` in a creator-signed package.

    ``registered_key`` is the owner's key as recorded by its space registry.
    """
    if creator_keypair.public_key != registered_key:
        raise KeyMismatch(dataset.owner)
    manifest = Manifest(dataset.dataset_id, dataset.owner, now, dataset.content_hash, dataset.model_id)
    package = DataPackage(dataset.dataset_id, dataset.payload, manifest)
    return sign_record(package, creator_keypair, "creator_signature")


def package_verify(package: DataPackage, creator_public_key: bytes) -> PackageStatus:
    if digest(package.payload) != package.manifest.content_hash:
        return PackageStatus.HASH_MISMATCH
    if package.dataset_id != package.manifest.dataset_id:
        return PackageStatus.BAD_SIGNATURE
    if not verify_record(package, creator_public_key, "creator_signature"):
        return PackageStatus.BAD_SIGNATURE
    return PackageStatus.OK


def package_to_bytes(package: DataPackage) -> bytes:
    """Serialize as ``DDP1 | u32 len | manifest.json | u64 len | payload``."""
    sig = package.creator_signature
    manifest = {
        **dataclasses.asdict(package.manifest),
        "signature": None
        if sig is None
        else {"signer_key_id": sig.signer_key_id, "algorithm_label": sig.algorithm_label, "value": sig.value.hex()},
    }
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return DDP_MAGIC + struct.pack(">I", len(head)) + head + struct.pack(">Q", len(package.payload)) + package.payload


def package_from_bytes(data: bytes) -> DataPackage:
    if data[:4] != DDP_MAGIC:
        raise DecodeError("not a data distribution package")
    try:
        (n,) = struct.unpack(">I", data[4:8])
        head = json.loads(data[8 : 8 + n].decode("utf-8"))
        (m,) = struct.unpack(">Q", data[8 + n : 16 + n])
        payload = data[16 + n : 16 + n + m]
    except (struct.error, ValueError) as exc:
        raise DecodeError(str(exc)) from exc
    if len(payload) != m or len(data) != 16 + n + m:
        raise DecodeError("length prefix does not match payload")
    raw_sig = head.pop("signature")
    sig = None if raw_sig is None else Signature(raw_sig["signer_key_id"], raw_sig["algorithm_label"], bytes.fromhex(raw_sig["value"]))
    manifest = Manifest(**head)
    return DataPackage(manifest.dataset_id, payload, manifest, sig)


@canonical
class ContractState(enum.Enum):
    PROPOSED = "Proposed"
    AGREED = "Agreed"
    DECLINED = "Declined"
    EXTERNALLY_CONCLUDED = "ExternallyConcluded"


_CONTRACT_MOVES = {
    ContractState.PROPOSED: {ContractState.AGREED, ContractState.DECLINED},
    ContractState.AGREED: set(),
    ContractState.DECLINED: set(),
    ContractState.EXTERNALLY_CONCLUDED: set(),
}
CONCLUDED = frozenset({ContractState.AGREED, ContractState.EXTERNALLY_CONCLUDED})


@canonical
@dataclass(frozen=True)
class Contract:
    contract_id: str
    provider: str
    consumer: str
    dataset_id: str
    usage_terms: dict = field(default_factory=dict)
    state: ContractState = ContractState.PROPOSED
    external_ref: str | None = None

    @property
    def concluded(self) -> bool:
        return self.state in CONCLUDED

    def move_to(self, state: ContractState) -> "Contract":
        if state not in _CONTRACT_MOVES[self.state]:
            raise InvalidTransition(f"{self.state.value}->{state.value}")
        return dataclasses.replace(self, state=state)


@dataclass(frozen=True)
class Proposal:
    dataset_id: str
    usage_terms: dict = field(default_factory=dict)


def negotiate(
    provider_space,
    provider_id: str,
    consumer_id: str,
    proposal: Proposal,
    offered: Container[str],
    decide: Callable[[Contract], bool],
    contract_id: str,
) -> Contract:
    """Provider proposes, consumer agrees or declines through ``decide``.

    Only spaces whose connectors expose a negotiation API can do this.
    """
    if not provider_space.negotiation_api:
        raise NegotiationUnsupported(provider_space.space_id)
    if proposal.dataset_id not in offered:
        raise UnknownDataset(proposal.dataset_id)
    contract = Contract(contract_id, provider_id, consumer_id, proposal.dataset_id, dict(proposal.usage_terms))
    return contract.move_to(ContractState.AGREED if decide(contract) else ContractState.DECLINED)


class ExternalBroker:
    """Stand-in for an out-of-platform contract brokering service."""

    def __init__(self, broker_id: str = "ext-broker", available: bool = True):
        self.broker_id = broker_id
        self.available = available
        self.documents: dict[str, tuple[str, str, str]] = {}

    def conclude(self, provider: str, consumer: str, dataset_id: str) -> str:
        if not self.available:
            raise BrokerUnavailable(self.broker_id)
        doc_id = f"doc-{len(self.documents) + 1}"
        self.documents[doc_id] = (provider, consumer, dataset_id)
        return doc_id


def conclude_external(
    provider: str,
    consumer: str,
    dataset_id: str,
    broker: ExternalBroker,
    contract_id: str,
    usage_terms: dict | None = None,
) -> Contract:
    doc_id = broker.conclude(provider, consumer, dataset_id)
    return Contract(
        contract_id,
        provider,
        consumer,
        dataset_id,
        dict(usage_terms or {}),
        ContractState.EXTERNALLY_CONCLUDED,
        external_ref=doc_id,
    )


@canonical
class LogKind(enum.Enum):
    SEND = "Send"
    RECEIVE = "Receive"
    PAYMENT = "Payment"


@canonical
@dataclass(frozen=True)
class TransferLog:
    log_id: str
    kind: LogKind
    contract_id: str
    dataset_id: str
    actor: str
    counterparty: str
    timestamp: int
    prev_hash: str = ""
    amount: int = 0
    signature: Signature | None = None


def log_hash(log: TransferLog) -> str:
    return record_digest(log)


def make_log(
    kind: LogKind,
    contract: Contract,
    actor: str,
    counterparty: str,
    timestamp: int,
    keypair: KeyPair,
    previous: TransferLog | None = None,
    amount: int = 0,
) -> TransferLog:
    log = TransferLog(
        log_id=f"{contract.contract_id}/{kind.value.lower()}",
        kind=kind,
        contract_id=contract.contract_id,
        dataset_id=contract.dataset_id,
        actor=actor,
        counterparty=counterparty,
        timestamp=timestamp,
        prev_hash=log_hash(previous) if previous is not None else "",
        amount=amount,
    )
    return sign_record(log, keypair)


def record_payment(
    consumer_keypair: KeyPair,
    contract: Contract,
    amount: int,
    now: int,
    exchange_logs: Iterable[TransferLog],
) -> TransferLog:
    """Signed payment log chained after the receive log of this exchange."""
    if not contract.concluded:
        raise ContractNotConcluded(contract.state.value)
    if amount < 0:
        raise ValueError("payment amount must be non-negative")
    logs = [l for l in exchange_logs if l.contract_id == contract.contract_id]
    if not logs or logs[-1].kind is not LogKind.RECEIVE:
        raise OrderViolation("payment must follow the receive log")
    return make_log(LogKind.PAYMENT, contract, contract.consumer, contract.provider, now, consumer_keypair, logs[-1], amount)


def verify_exchange_logs(logs: list[TransferLog], key_for: Callable[[str], bytes]) -> Verdict:
    """Check signatures and prev_hash links of one exchange's logs, in order."""
    for i, log in enumerate(logs):
        if not verify_record(log, key_for(log.actor)):
            return Verdict("BadSignature", log.log_id)
        expected = log_hash(logs[i - 1]) if i else ""
        if log.prev_hash != expected:
            return Verdict("BrokenLink", str(i))
    return OK


class LogBook:
    """A participant's local log store (the default when no PMS is used)."""

    def __init__(self, owner: str):
        self.owner = owner
        self.logs: list[TransferLog] = []
        self._lock = threading.Lock()

    def append(self, log: TransferLog) -> None:
        with self._lock:
            if all(l.log_id != log.log_id for l in self.logs):
                self.logs.append(log)

    def for_contract(self, contract_id: str) -> list[TransferLog]:
        order = {LogKind.SEND: 0, LogKind.RECEIVE: 1, LogKind.PAYMENT: 2}
        return sorted((l for l in self.logs if l.contract_id == contract_id), key=lambda l: (l.timestamp, order[l.kind]))
