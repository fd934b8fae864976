"""Connector state machine, credential wallet and the six-phase exchange.

A connector starts single-stack (one holding). Onboarding it into a second
space makes it dual-stack: for each counterpart it then picks the holding
whose framework that counterpart's space recognizes.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .errors import (
    ContractNotConcluded,
    DsbError,
    EndpointNotRegistered,
    EndpointVerificationFailed,
    MissingField,
    OwnerNotActive,
    PackageVerificationFailed,
    ParticipantVerificationFailed,
    ProvenanceVerificationFailed,
    UnknownDataset,
    UnknownModel,
    ValidationFailed,
)
from .exchange import (
    Contract,
    ContractState,
    DataPackage,
    Dataset,
    LogBook,
    LogKind,
    PackageStatus,
    Proposal,
    TransferLog,
    conclude_external,
    make_log,
    negotiate,
    package_sign,
    package_verify,
    record_payment,
    verify_exchange_logs,
)
from .identity import TokenStatus, present, verify_presentation
from .provenance import verify_chain
from .registry import Device, EndpointStatus, verify_endpoint
from .rules import Application
from .semantics import (
    CatalogQuery,
    CatalogRecord,
    ConversionWarning,
    catalog_convert,
    catalog_validate,
)
from .trust import (
    KeyPair,
    MembershipCredential,
    PasswordCredential,
    Presentation,
    SignedToken,
    sign,
    verify,
)

if TYPE_CHECKING:
    from .network import Network


class Phase(enum.IntEnum):
    IDLE = 0
    ONBOARDED = 1
    PLANNED = 2
    DISCOVERED = 3
    CONTRACTED = 4
    TRANSFERRED = 5
    PAID = 6
    VERIFIED = 7


EXCHANGE_PHASES = ("Planning", "Discovery", "Contract", "Transfer", "Payment", "Verification")
_PHASE_REACHED = dict(zip(EXCHANGE_PHASES, (Phase.PLANNED, Phase.DISCOVERED, Phase.CONTRACTED, Phase.TRANSFERRED, Phase.PAID, Phase.VERIFIED)))


class Protocol(enum.Enum):
    INTROSPECT_TOKEN = "IntrospectToken"
    VERIFY_PRESENTATION = "VerifyPresentation"


@dataclass
class Holding:
    space_id: str
    participant_id: str
    credential: PasswordCredential | MembershipCredential
    token: SignedToken | None = None

    @property
    def kind(self) -> str:
        return "password" if isinstance(self.credential, PasswordCredential) else "membership"


class Wallet:
    def __init__(self):
        self.holdings: dict[str, Holding] = {}

    def add(self, holding: Holding) -> None:
        if holding.space_id in self.holdings:
            raise ValueError(f"wallet already holds a credential for {holding.space_id}")
        self.holdings[holding.space_id] = holding

    def get(self, space_id: str) -> Holding | None:
        return self.holdings.get(space_id)

    @property
    def dual_stack(self) -> bool:
        return len(self.holdings) >= 2


@dataclass(frozen=True)
class TraceEvent:
    timestamp: int
    event: str
    outcome: str


@dataclass
class ConnectorState:
    participant_id: str | None = None
    home_space: str | None = None
    phase: Phase = Phase.IDLE
    event_trace: list[TraceEvent] = field(default_factory=list)

    def advance(self, phase: Phase) -> None:
        if phase <= self.phase:
            raise ValueError(f"phase cannot move from {self.phase.name} to {phase.name}")
        self.phase = phase

    def begin_exchange(self) -> None:
        if self.phase < Phase.ONBOARDED:
            raise ValueError("connector is not onboarded")
        self.phase = Phase.ONBOARDED


@dataclass(frozen=True)
class VerificationPolicy:
    home_space: str
    accepted_protocols: tuple[Protocol, ...]
    recognized_foreign: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.accepted_protocols:
            raise ValueError("a policy must accept at least one protocol")

    def recognizes(self, space_id: str) -> bool:
        return space_id == self.home_space or space_id in self.recognized_foreign


@dataclass(frozen=True)
class CounterpartVerdict:
    accepted: bool
    protocol: Protocol | None = None
    reason: str | None = None
    subject: str | None = None

    def __str__(self) -> str:
        return f"Accepted({self.protocol.value})" if self.accepted else f"Rejected({self.reason})"


@dataclass(frozen=True)
class Discovered:
    record: CatalogRecord
    source_space: str
    warnings: tuple[ConversionWarning, ...] = ()


def protocol_of(network: "Network", space_id: str) -> Protocol:
    return Protocol.INTROSPECT_TOKEN if network.space(space_id).definition.centralized else Protocol.VERIFY_PRESENTATION


def policy_for(network: "Network", space_id: str) -> VerificationPolicy:
    definition = network.space(space_id).definition
    recognized = frozenset(definition.recognized_foreign_frameworks)
    protocols = {protocol_of(network, space_id)} | {protocol_of(network, s) for s in recognized}
    return VerificationPolicy(space_id, tuple(sorted(protocols, key=lambda p: p.value)), recognized)


class Connector:
    def __init__(self, name: str, network: "Network"):
        self.name = name
        self.network = network
        self.keypair: KeyPair = network.derive_key(f"connector/{name}")
        self.device_keypair: KeyPair = network.derive_key(f"device/{name}")
        self.wallet = Wallet()
        self.state = ConnectorState()
        self.datasets: dict[str, Dataset] = {}
        self.received: dict[str, bytes] = {}
        self.logbook = LogBook(name)
        self._nonces = 0

    @property
    def participant_id(self) -> str | None:
        return self.state.participant_id

    @property
    def home_space(self) -> str | None:
        return self.state.home_space

    def holding(self, space_id: str | None = None) -> Holding:
        holding = self.wallet.get(space_id or self.home_space)
        if holding is None:
            raise OwnerNotActive(f"{self.name} holds no credential for {space_id}")
        return holding

    def policy(self, space_id: str | None = None) -> VerificationPolicy:
        return policy_for(self.network, space_id or self.home_space)

    def onboard(self, space_id: str, application: Application) -> Holding:
        """Onboard into ``space_id``; a second space makes the wallet dual-stack."""
        if self.wallet.get(space_id) is not None:
            raise ValueError(f"{self.name} is already onboarded in {space_id}")
        space = self.network.space(space_id)
        application = dataclasses.replace(application, public_key=self.keypair.public_key)
        now = self.network.clock.now
        try:
            result = space.registry.onboard(application, now)
        except ValidationFailed:
            self.network.record(f"onboarding:{space_id}:{application.participant_id}", "Rejected")
            raise
        holding = Holding(space_id, result.participant.participant_id, result.credential)
        if space.definition.centralized:
            holding.token = space.idp.issue_token(holding.participant_id, application.secret, now)
        self.wallet.add(holding)
        if self.state.phase is Phase.IDLE:
            self.state.participant_id = holding.participant_id
            self.state.home_space = space_id
            self.state.advance(Phase.ONBOARDED)
        self.network.record(f"onboarding:{space_id}:{holding.participant_id}", "Active")
        return holding

    def register_device(self, endpoint_domain: str, space_id: str | None = None) -> Device:
        holding = self.holding(space_id)
        space = self.network.space(holding.space_id)
        return space.registry.register_device(
            holding.participant_id,
            endpoint_domain,
            self.device_keypair.public_key,
            self.network.ca_for(holding.space_id),
            self.network.clock.now,
        )

    def publish(self, dataset_id: str, model_id: str, payload: bytes, **record_fields) -> CatalogRecord:
        """Store a dataset and advertise it in the home-space catalog."""
        holding = self.holding()
        space = self.network.space(holding.space_id)
        devices = [d for d in space.registry.devices_of(holding.participant_id) if d.resolver_registered]
        endpoint = record_fields.pop("distribution_endpoint", None)
        if endpoint is None:
            endpoint = f"{devices[0].endpoint_domain if devices else 'unregistered.invalid'}/datasets/{dataset_id}"
        theme = record_fields.pop("theme", (model_id,))
        record = CatalogRecord(
            record_id=dataset_id,
            title=record_fields.pop("title", dataset_id),
            description=record_fields.pop("description", f"{model_id} dataset"),
            publisher=holding.participant_id,
            theme=tuple(theme),
            conforms_to=model_id,
            distribution_endpoint=endpoint,
            issued=self.network.clock.now,
            extensions=dict(record_fields.pop("extensions", {})),
        )
        if record_fields:
            raise TypeError(f"unexpected record fields {sorted(record_fields)}")
        if not space.registry.is_active(holding.participant_id):
            raise OwnerNotActive(holding.participant_id)
        verdict = catalog_validate(record, space.repository)
        if verdict.status == "UnknownModel":
            raise UnknownModel(model_id)
        if not verdict.ok:
            raise MissingField(verdict.detail)
        self.datasets[dataset_id] = Dataset(dataset_id, holding.participant_id, model_id, bytes(payload))
        space.catalog.put(record)
        return record

    def next_nonce(self) -> bytes:
        self._nonces += 1
        return hashlib.sha256(f"{self.name}/nonce/{self._nonces}".encode()).digest()[:16]

    def select_holding(self, verifier_space: str) -> Holding:
        """Holding to present to a verifier acting in ``verifier_space``."""
        direct = self.wallet.get(verifier_space)
        if direct is not None:
            return direct
        policy = policy_for(self.network, verifier_space)
        for space_id in sorted(self.wallet.holdings):
            if policy.recognizes(space_id):
                return self.wallet.holdings[space_id]
        return self.holding()

    def verify_counterpart(self, proof, nonce: bytes, now: int, as_space: str | None = None) -> CounterpartVerdict:
        holding = self.holding(as_space)
        return verify_counterpart(self.network, holding.space_id, holding.participant_id, proof, nonce, now)

    def prove_to(self, holding: Holding, audience: str, nonce: bytes, now: int, refresh: bool = True):
        """Produce a token or presentation from ``holding``."""
        if isinstance(holding.credential, PasswordCredential):
            token = holding.token
            if refresh and (token is None or now >= token.expires_at):
                idp = self.network.space(holding.space_id).idp
                token = idp.issue_token(holding.participant_id, holding.credential.secret, now)
                holding.token = token
            return token
        return present(holding.credential, self.keypair, audience, nonce)


def verify_counterpart(
    network: "Network", verifier_space: str, verifier_id: str, proof, nonce: bytes, now: int
) -> CounterpartVerdict:
    """Verify ``proof`` on behalf of ``verifier_id`` acting in ``verifier_space``.

    Tokens are introspected at the issuing space's IdP; presentations are
    checked locally against the issuing space's VDR. Either only when the
    issuing framework is the verifier's own or one it recognizes.
    """
    policy = policy_for(network, verifier_space)
    if isinstance(proof, SignedToken):
        issuer = proof.issuer
        if issuer not in network.spaces or not policy.recognizes(issuer):
            return CounterpartVerdict(False, reason="UnrecognizedFramework")
        space = network.space(issuer)
        if space.idp is None or Protocol.INTROSPECT_TOKEN not in policy.accepted_protocols:
            return CounterpartVerdict(False, reason="UnsupportedProtocol")
        status = space.idp.introspect(proof, now)
        if status is not TokenStatus.ACTIVE:
            return CounterpartVerdict(False, reason=status.value)
        return CounterpartVerdict(True, Protocol.INTROSPECT_TOKEN, subject=proof.subject)
    if isinstance(proof, Presentation):
        issuer = proof.credential.space_id
        if issuer not in network.spaces or not policy.recognizes(issuer):
            return CounterpartVerdict(False, reason="UnrecognizedFramework")
        space = network.space(issuer)
        if space.vdr is None or Protocol.VERIFY_PRESENTATION not in policy.accepted_protocols:
            return CounterpartVerdict(False, reason="UnsupportedProtocol")
        status = verify_presentation(verifier_id, proof, space.vdr, nonce, now)
        if status.value != "Valid":
            return CounterpartVerdict(False, reason=status.value)
        subject = next(
            (p.participant_id for p in space.registry.participants.values() if p.did == proof.credential.holder_did),
            None,
        )
        return CounterpartVerdict(True, Protocol.VERIFY_PRESENTATION, subject=subject)
    return CounterpartVerdict(False, reason="UnsupportedProof")


def discover(consumer: Connector, query: CatalogQuery) -> list[Discovered]:
    """Catalog search from the consumer's home space; foreign records are converted."""
    network = consumer.network
    home = network.space(consumer.home_space)
    hits = [Discovered(r, home.space_id) for r in home.catalog.search(query)]
    for space_id in sorted(network.spaces):
        if space_id == home.space_id:
            continue
        source = network.space(space_id)
        for record in source.catalog.all():
            converted, warnings = catalog_convert(record, source.definition, home.definition, network.index)
            if query.matches(converted, also_models=(record.conforms_to,)):
                hits.append(Discovered(converted, space_id, tuple(warnings)))
    return hits


@dataclass
class ExchangeOptions:
    use_ddp: bool = False
    use_pms: bool = False
    contract_mode: str = "auto"
    accept: bool = True
    usage_terms: dict = field(default_factory=dict)
    amount: int = 0
    refresh_credentials: bool = True
    tamper_package: bool = False

    def __post_init__(self):
        if self.contract_mode not in ("auto", "negotiate", "external"):
            raise ValueError(f"unknown contract_mode {self.contract_mode!r}")

    @classmethod
    def from_dict(cls, raw: dict | None) -> "ExchangeOptions":
        raw = dict(raw or {})
        unknown = set(raw) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown exchange options {sorted(unknown)}")
        return cls(**raw)


@dataclass
class PhaseResult:
    phase: str
    outcome: str
    error: str | None = None
    detail: str | None = None
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        out = {"phase": self.phase, "outcome": self.outcome, "warnings": list(self.warnings)}
        if self.error is not None:
            out["error"] = self.error
        if self.detail is not None:
            out["detail"] = self.detail
        return out


@dataclass
class ExchangeReport:
    exchange_id: str
    provider: str
    consumer: str
    dataset_id: str
    phases: list[PhaseResult] = field(default_factory=list)
    trace: list[TraceEvent] = field(default_factory=list)
    contract_id: str | None = None

    @property
    def ok(self) -> bool:
        return all(p.outcome == "Ok" for p in self.phases)

    def phase(self, name: str) -> PhaseResult:
        return next(p for p in self.phases if p.phase == name)

    @property
    def failed_phase(self) -> PhaseResult | None:
        return next((p for p in self.phases if p.outcome == "Failed"), None)

    def to_json(self) -> dict:
        return {
            "exchange_id": self.exchange_id,
            "provider": self.provider,
            "consumer": self.consumer,
            "dataset_id": self.dataset_id,
            "contract_id": self.contract_id,
            "ok": self.ok,
            "phases": [p.to_json() for p in self.phases],
            "trace": [{"t": e.timestamp, "event": e.event, "outcome": e.outcome} for e in self.trace],
        }


class _Session:
    """Mutable context for one exchange between two connectors."""

    def __init__(self, provider: Connector, consumer: Connector, dataset_id: str, options: ExchangeOptions):
        self.network = provider.network
        self.provider = provider
        self.consumer = consumer
        self.dataset_id = dataset_id
        self.options = options
        self.provider_holding = provider.holding()
        self.consumer_holding = consumer.select_holding(self.provider_holding.space_id)
        self.provider_space = self.network.space(self.provider_holding.space_id)
        self.trace: list[TraceEvent] = []
        self.warnings: list[str] = []
        self.endpoint: str | None = None
        self.contract: Contract | None = None

    @property
    def provider_id(self) -> str:
        return self.provider_holding.participant_id

    @property
    def consumer_id(self) -> str:
        return self.consumer_holding.participant_id

    def event(self, phase: str, name: str, outcome: str) -> None:
        t = self.network.clock.tick()
        ev = TraceEvent(t, f"{phase}:{name}", outcome)
        self.trace.append(ev)
        for c in {id(self.provider): self.provider, id(self.consumer): self.consumer}.values():
            c.state.event_trace.append(ev)
        self.network.record(ev.event, outcome)

    def verify_participant(self, phase: str, verifier: Connector, verifier_holding: Holding,
                           prover: Connector, prover_holding: Holding) -> None:
        net = self.network
        nonce = verifier.next_nonce()
        proof = prover.prove_to(prover_holding, verifier_holding.participant_id, nonce, net.clock.now,
                                refresh=self.options.refresh_credentials)
        verdict = verify_counterpart(net, verifier_holding.space_id, verifier_holding.participant_id, proof, nonce,
                                     net.clock.now)
        if verdict.accepted and verdict.subject != prover_holding.participant_id:
            verdict = CounterpartVerdict(False, reason="SubjectMismatch")
        self.event(phase, f"participant-verification:{verifier_holding.participant_id}", str(verdict))
        if not verdict.accepted:
            raise ParticipantVerificationFailed(verdict.reason)

    # phases -----------------------------------------------------------

    def planning(self) -> None:
        ok = self.dataset_id in self.provider.datasets
        self.event("Planning", "dataset-offered", "Ok" if ok else "Failed")
        if not ok:
            raise UnknownDataset(self.dataset_id)

    def discovery(self) -> None:
        hits = discover(self.consumer, CatalogQuery(publisher=self.provider_id))
        hit = next((h for h in hits if h.record.record_id == self.dataset_id), None)
        self.event("Discovery", "catalog-search", "Ok" if hit else "Failed")
        if hit is None:
            raise UnknownDataset(self.dataset_id)
        self.warnings.extend(str(w) for w in hit.warnings)
        resolved = self.provider_space.registry.resolver.resolve(self.provider_id)
        advertised = (hit.record.distribution_endpoint or "").split("/", 1)[0]
        match = next((domain for domain, _ in resolved if domain == advertised), None)
        self.event("Discovery", "endpoint-resolution", "Ok" if match else "Failed")
        if match is None:
            raise EndpointNotRegistered(advertised or self.provider_id)
        self.endpoint = match

    def contracting(self) -> None:
        opts = self.options
        mode = opts.contract_mode
        if mode == "auto":
            same_framework = self.consumer_holding.space_id == self.provider_space.space_id
            mode = "negotiate" if self.provider_space.definition.negotiation_api and same_framework else "external"
        contract_id = self.network.next_id("ctr")
        if mode == "negotiate":
            self.verify_participant("Contract", self.provider, self.provider_holding, self.consumer, self.consumer_holding)
            self.verify_participant("Contract", self.consumer, self.consumer_holding, self.provider, self.provider_holding)
            try:
                contract = negotiate(
                    self.provider_space.definition,
                    self.provider_id,
                    self.consumer_id,
                    Proposal(self.dataset_id, opts.usage_terms),
                    self.provider.datasets,
                    lambda _c: opts.accept,
                    contract_id,
                )
            except DsbError as exc:
                self.event("Contract", "negotiation-api", exc.code)
                raise
            self.event("Contract", "negotiation-api", contract.state.value)
        else:
            try:
                contract = conclude_external(
                    self.provider_id, self.consumer_id, self.dataset_id, self.network.broker, contract_id, opts.usage_terms
                )
            except DsbError as exc:
                self.event("Contract", "external-broker", exc.code)
                raise
            self.event("Contract", "external-broker", contract.state.value)
        self.network.contracts[contract.contract_id] = contract
        self.contract = contract

    def transfer(self) -> None:
        contract = self.contract
        if contract is None or not contract.concluded:
            state = contract.state.value if contract else "None"
            self.event("Transfer", "contract-check", f"ContractNotConcluded({state})")
            raise ContractNotConcluded(state)
        self.event("Transfer", "contract-check", "Ok")
        status = self.verify_endpoint()
        self.event("Transfer", "endpoint-verification", status.value)
        if status is not EndpointStatus.OK:
            raise EndpointVerificationFailed(status.value)
        self.verify_participant("Transfer", self.provider, self.provider_holding, self.consumer, self.consumer_holding)
        dataset = self.provider.datasets[contract.dataset_id]
        payload = dataset.payload
        now = self.network.clock.now
        if self.options.use_ddp:
            if self.provider_space.definition.ddp:
                key = self.network.key_of(self.provider_id)
                package = package_sign(dataset, self.provider.keypair, now, key)
                if self.options.tamper_package:
                    flipped = bytes([package.payload[0] ^ 0x01]) + package.payload[1:] if package.payload else b"\x00"
                    package = dataclasses.replace(package, payload=flipped)
                verdict = package_verify(package, key)
                self.event("Transfer", "ddp-verification", verdict.value)
                if verdict is not PackageStatus.OK:
                    raise PackageVerificationFailed(verdict.value)
                payload = package.payload
            else:
                self.warnings.append(f"DdpUnsupported({self.provider_space.space_id})")
        send = make_log(LogKind.SEND, contract, self.provider_id, self.consumer_id, self.network.clock.tick(), self.provider.keypair)
        receive = make_log(
            LogKind.RECEIVE, contract, self.consumer_id, self.provider_id, self.network.clock.tick(), self.consumer.keypair, send
        )
        for log in (send, receive):
            self.provider.logbook.append(log)
            self.consumer.logbook.append(log)
        self.consumer.received[contract.dataset_id] = payload
        self.event("Transfer", "delivery", "Ok")
        self.forward_to_pms(send, receive)

    def verify_endpoint(self) -> EndpointStatus:
        registry = self.provider_space.registry
        device = next((d for d in registry.devices_of(self.provider_id) if d.endpoint_domain == self.endpoint), None)
        if device is None:
            return EndpointStatus.DOMAIN_MISMATCH
        ca_keys = self.network.trusted_ca_keys(self.consumer_holding.space_id)
        ca_key = ca_keys.get(device.certificate.issuer_ca)
        if ca_key is None:
            return EndpointStatus.BAD_CA_SIGNATURE
        challenge = self.consumer.next_nonce()
        proof = sign(self.provider.device_keypair.private_key, challenge)
        if not verify(device.public_key, challenge, proof):
            return EndpointStatus.KEY_MISMATCH
        return verify_endpoint(device.certificate, self.endpoint, device.public_key, ca_key, self.network.clock.now)

    def pms(self):
        for space_id in (self.provider_space.space_id, self.consumer_holding.space_id):
            pms = self.network.space(space_id).pms
            if pms is not None:
                return pms
        return None

    def forward_to_pms(self, *logs: TransferLog) -> None:
        if not self.options.use_pms:
            return
        pms = self.pms()
        if pms is None:
            if "PmsUnavailable" not in self.warnings:
                self.warnings.append("PmsUnavailable")
            return
        for log in logs:
            pms.ingest(log)
        self.event(self.current_phase, "pms-ingest", "Ok")

    current_phase = "Transfer"

    def payment(self) -> None:
        self.current_phase = "Payment"
        log = record_payment(
            self.consumer.keypair,
            self.contract,
            self.options.amount,
            self.network.clock.tick(),
            self.consumer.logbook.for_contract(self.contract.contract_id),
        )
        self.provider.logbook.append(log)
        self.consumer.logbook.append(log)
        self.event("Payment", "payment-log", "Ok")
        self.forward_to_pms(log)

    def verification(self) -> None:
        logs = self.consumer.logbook.for_contract(self.contract.contract_id)
        verdict = verify_exchange_logs(logs, self.network.key_of)
        self.event("Verification", "log-chain", str(verdict))
        if not verdict.ok:
            raise ProvenanceVerificationFailed(str(verdict))
        if self.options.use_pms:
            pms = self.pms()
            if pms is not None:
                chain = pms.chain(self.dataset_id)
                verdict = verify_chain(chain, self.network.key_of)
                self.event("Verification", "provenance-chain", str(verdict))
                if not verdict.ok:
                    raise ProvenanceVerificationFailed(str(verdict))


def run_exchange(
    provider: Connector, consumer: Connector, dataset_id: str, options: ExchangeOptions | None = None
) -> ExchangeReport:
    """Run Planning through Verification; the first failing phase skips the rest."""
    options = options or ExchangeOptions()
    network = provider.network
    session = _Session(provider, consumer, dataset_id, options)
    report = ExchangeReport(network.next_id("xch"), session.provider_id, session.consumer_id, dataset_id)
    for c in {id(provider): provider, id(consumer): consumer}.values():
        c.state.begin_exchange()
    steps = {
        "Planning": session.planning,
        "Discovery": session.discovery,
        "Contract": session.contracting,
        "Transfer": session.transfer,
        "Payment": session.payment,
        "Verification": session.verification,
    }
    failed = False
    for phase in EXCHANGE_PHASES:
        if failed:
            report.phases.append(PhaseResult(phase, "Skipped"))
            continue
        session.warnings = []
        try:
            steps[phase]()
        except DsbError as exc:
            failed = True
            report.phases.append(PhaseResult(phase, "Failed", exc.code, exc.detail, list(session.warnings)))
            continue
        report.phases.append(PhaseResult(phase, "Ok", warnings=list(session.warnings)))
        if phase == "Contract" and session.contract is not None:
            report.phases[-1].detail = session.contract.state.value
        for c in {id(provider): provider, id(consumer): consumer}.values():
            c.state.advance(_PHASE_REACHED[phase])
    report.trace = list(session.trace)
    report.contract_id = session.contract.contract_id if session.contract else None
    return report


def negotiate_contract(provider: Connector, consumer: Connector, dataset_id: str,
                       options: ExchangeOptions | None = None) -> tuple[Contract, list[TraceEvent]]:
    """Contract phase only (used by the CLI)."""
    session = _Session(provider, consumer, dataset_id, options or ExchangeOptions())
    session.discovery()
    session.contracting()
    return session.contract, session.trace


def transfer_contract(provider: Connector, consumer: Connector, contract: Contract,
                      options: ExchangeOptions | None = None) -> tuple[bytes, list[TransferLog], list[TraceEvent]]:
    """Transfer (and payment when ``options.amount`` > 0) for an existing contract."""
    options = options or ExchangeOptions()
    session = _Session(provider, consumer, contract.dataset_id, options)
    session.discovery()
    session.contract = contract
    session.transfer()
    if options.amount > 0:
        session.payment()
    logs = consumer.logbook.for_contract(contract.contract_id)
    return consumer.received[contract.dataset_id], logs, session.trace
