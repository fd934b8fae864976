"""Gap matrix: six exchange objects x (generation-time, operation-time) x space.

Every cell comes from a probe that exercises the space on a fresh network;
a capability that is switched off shows up as NA because the probe fails.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Callable

from .config import SimulationConfig
from .connector import Connector
from .errors import CapabilityUnavailable, DsbError, IncompleteProbes, NegotiationUnsupported
from .exchange import Contract, ContractState, Dataset, LogKind, Proposal, make_log, negotiate, package_sign, package_verify
from .identity import PresentationStatus, TokenStatus, present, verify_presentation
from .network import Network
from .provenance import verify_chain
from .registry import EndpointStatus, verify_endpoint
from .rules import Application
from .scenario import default_lei
from .semantics import CatalogRecord, catalog_validate, sign_catalog_record, verify_catalog_record

ROWS = ("Participant", "Device", "Dataset", "Data catalog", "Contract", "Sending & Receiving Log")
PERSPECTIVES = ("p1", "p2")


@dataclass(frozen=True)
class ProbeResult:
    supported: bool
    mechanism: str
    evidence: str

    def cell(self) -> str:
        return f"Supported({self.mechanism})" if self.supported else "NA"


Cell = tuple[str, str, str]  # (row, perspective, space_id)


@dataclass(frozen=True)
class GapMatrix:
    space_ids: tuple[str, ...]
    cells: dict

    @property
    def columns(self) -> list[tuple[str, str]]:
        return [(p, s) for p in PERSPECTIVES for s in self.space_ids]

    def value(self, row: str, perspective: str, space_id: str) -> str:
        return self.cells[(row, perspective, space_id)].cell()

    def header(self) -> list[str]:
        return ["object"] + [f"{p}/{s}" for p, s in self.columns]

    def rows(self) -> list[list[str]]:
        return [[row] + [self.value(row, p, s) for p, s in self.columns] for row in ROWS]

    def to_delimited(self, delimiter: str = ",") -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        writer.writerow(self.header())
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "rows": list(ROWS),
            "columns": [{"perspective": p, "space": s} for p, s in self.columns],
            "cells": [
                {
                    "row": row,
                    "perspective": p,
                    "space": s,
                    "value": self.value(row, p, s),
                    "evidence": self.cells[(row, p, s)].evidence,
                }
                for row in ROWS
                for p, s in self.columns
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


class _Fixture:
    """Fresh network with two active participants and one device in ``space_id``."""

    def __init__(self, config: SimulationConfig, space_id: str, seed: int):
        self.network = net = Network(config, seed)
        self.space = net.space(space_id)
        allow = self.space.definition.country_allowlist
        country = allow[0] if allow else "JP"
        self.provider = self._onboard("probe-provider", country)
        self.consumer = self._onboard("probe-consumer", country)
        self.device = self.provider.register_device(f"probe.{space_id}.example", space_id)
        models = self.space.repository.latest()
        self.model_id = models[0].model_id if models else None

    def _onboard(self, name: str, country: str) -> Connector:
        c = Connector(name, self.network)
        pid = f"{name}@{self.space.space_id}"
        c.onboard(self.space.space_id, Application(pid, f"{name} Ltd", country, default_lei(pid), f"secret-{pid}"))
        self.network.connectors[name] = c
        return c

    @property
    def now(self) -> int:
        return self.network.clock.now

    def contract(self) -> Contract:
        return Contract("probe-ctr", self.provider.participant_id, self.consumer.participant_id, "probe-ds",
                        state=ContractState.EXTERNALLY_CONCLUDED, external_ref="probe")


def _participant_p1(f: _Fixture) -> ProbeResult:
    p = f.space.registry.get(f.consumer.participant_id)
    mech = "idp-registration" if f.space.definition.centralized else "membership-vc"
    return ProbeResult(p.status.value == "Active", mech, f"status={p.status.value} credential={p.credential_ref}")


def _participant_p2(f: _Fixture) -> ProbeResult:
    holding = f.consumer.holding()
    if f.space.definition.centralized:
        status = f.space.idp.introspect(holding.token, f.now)
        return ProbeResult(status is TokenStatus.ACTIVE, "oidc-introspection", f"introspect={status.value}")
    nonce = b"probe-nonce"
    pres = present(holding.credential, f.consumer.keypair, f.provider.participant_id, nonce)
    status = verify_presentation(f.provider.participant_id, pres, f.space.vdr, nonce, f.now)
    return ProbeResult(status is PresentationStatus.VALID, "vc-presentation", f"presentation={status.value}")


def _device_p1(f: _Fixture) -> ProbeResult:
    resolved = f.space.registry.resolver.resolve(f.provider.participant_id)
    ok = any(domain == f.device.endpoint_domain for domain, _ in resolved)
    level = f.device.certificate.validation_level.value
    return ProbeResult(ok and level == "ExtendedValidation", "resolver+ev-certificate", f"resolved={len(resolved)} level={level}")


def _device_p2(f: _Fixture) -> ProbeResult:
    ca_keys = f.network.trusted_ca_keys(f.space.space_id)
    status = verify_endpoint(f.device.certificate, f.device.endpoint_domain, f.device.public_key,
                             ca_keys[f.device.certificate.issuer_ca], f.now)
    return ProbeResult(status is EndpointStatus.OK, "x509-endpoint-verification", f"endpoint={status.value}")


def _dataset_p1(f: _Fixture) -> ProbeResult:
    ok = f.model_id is not None and f.space.repository.contains(f.model_id)
    return ProbeResult(ok, "vocabulary-repository", f"models={len(f.space.repository.list())}")


def _dataset_p2(f: _Fixture) -> ProbeResult:
    if not f.space.definition.ddp:
        return ProbeResult(False, "signable-data-package", "space offers no data distribution package")
    ds = Dataset("probe-ds", f.provider.participant_id, f.model_id or "none", b"probe payload")
    key = f.network.key_of(f.provider.participant_id)
    status = package_verify(package_sign(ds, f.provider.keypair, f.now, key), key)
    return ProbeResult(status.value == "Ok", "signable-data-package", f"package={status.value}")


def _catalog_p1(f: _Fixture) -> ProbeResult:
    if f.model_id is None:
        return ProbeResult(False, "dcat-v2-catalog", "no models to conform to")
    record = f.provider.publish("probe-ds", f.model_id, b"probe payload")
    verdict = catalog_validate(record, f.space.repository)
    return ProbeResult(verdict.ok and f.space.catalog.get(record.publisher, record.record_id) is not None,
                       "dcat-v2-catalog", f"validate={verdict}")


def _catalog_p2(f: _Fixture) -> ProbeResult:
    if not f.space.definition.catalog_signing:
        return ProbeResult(False, "signed-catalog", "catalog records carry no publisher signature")
    record = CatalogRecord("probe-ds", "t", "d", f.provider.participant_id, ("probe",), f.model_id, "x/y", f.now)
    signed = sign_catalog_record(record, f.provider.keypair)
    ok = verify_catalog_record(signed, f.network.key_of(f.provider.participant_id))
    return ProbeResult(ok, "signed-catalog", f"signature={'Ok' if ok else 'Bad'}")


def _contract_p1(f: _Fixture) -> ProbeResult:
    try:
        c = negotiate(f.space.definition, f.provider.participant_id, f.consumer.participant_id,
                      Proposal("probe-ds"), {"probe-ds"}, lambda _c: True, "probe-ctr")
    except NegotiationUnsupported:
        return ProbeResult(False, "negotiation-api", "NegotiationUnsupported")
    return ProbeResult(c.state is ContractState.AGREED, "negotiation-api", f"contract={c.state.value}")


def _contract_p2(f: _Fixture) -> ProbeResult:
    contract = f.contract()
    try:
        f.space.attest_contract(contract)
        ok = f.space.verify_contract(contract)
    except CapabilityUnavailable:
        return ProbeResult(False, "contract-registry", "CapabilityUnavailable")
    return ProbeResult(ok, "contract-registry", f"attested={ok}")


def _logs(f: _Fixture):
    contract = f.contract()
    send = make_log(LogKind.SEND, contract, contract.provider, contract.consumer, f.network.clock.tick(), f.provider.keypair)
    receive = make_log(LogKind.RECEIVE, contract, contract.consumer, contract.provider, f.network.clock.tick(),
                       f.consumer.keypair, send)
    return send, receive


def _log_p1(f: _Fixture) -> ProbeResult:
    if f.space.pms is None:
        return ProbeResult(False, "pms", "logs stay local")
    for log in _logs(f):
        f.space.pms.ingest(log)
    n = len(f.space.pms.query(dataset_id="probe-ds"))
    return ProbeResult(n == 2, "pms", f"ingested={n}")


def _log_p2(f: _Fixture) -> ProbeResult:
    if f.space.pms is None:
        return ProbeResult(False, "pms-verify", "no shared service to verify against")
    for log in _logs(f):
        f.space.pms.ingest(log)
    verdict = verify_chain(f.space.pms.chain("probe-ds"), f.network.key_of)
    return ProbeResult(verdict.ok, "pms-verify", f"chain={verdict}")


PROBES: dict[tuple[str, str], Callable[[_Fixture], ProbeResult]] = {
    ("Participant", "p1"): _participant_p1,
    ("Participant", "p2"): _participant_p2,
    ("Device", "p1"): _device_p1,
    ("Device", "p2"): _device_p2,
    ("Dataset", "p1"): _dataset_p1,
    ("Dataset", "p2"): _dataset_p2,
    ("Data catalog", "p1"): _catalog_p1,
    ("Data catalog", "p2"): _catalog_p2,
    ("Contract", "p1"): _contract_p1,
    ("Contract", "p2"): _contract_p2,
    ("Sending & Receiving Log", "p1"): _log_p1,
    ("Sending & Receiving Log", "p2"): _log_p2,
}


def run_probes(config: SimulationConfig, seed: int = 0) -> dict[Cell, ProbeResult]:
    """Execute every probe, each on its own fresh network."""
    results: dict[Cell, ProbeResult] = {}
    for space_id in config.space_ids:
        for (row, perspective), probe in PROBES.items():
            try:
                result = probe(_Fixture(config, space_id, seed))
            except DsbError as exc:
                result = ProbeResult(False, probe.__name__.strip("_"), f"{exc.code}({exc.detail})")
            results[(row, perspective, space_id)] = result
    return results


def gap_report(config: SimulationConfig, probe_results: dict[Cell, ProbeResult]) -> GapMatrix:
    """Assemble the matrix; raises :class:`IncompleteProbes` listing missing cells."""
    expected = [(row, p, s) for row in ROWS for p in PERSPECTIVES for s in config.space_ids]
    missing = [c for c in expected if c not in probe_results]
    if missing:
        raise IncompleteProbes(", ".join("/".join(c) for c in missing))
    return GapMatrix(config.space_ids, {c: probe_results[c] for c in expected})
