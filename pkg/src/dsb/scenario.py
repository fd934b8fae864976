"""Declarative scenarios: JSON setup steps, one exchange, expectations, checks.

The same step engine replays the CLI journal, so every CLI command is a
step op here.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from .config import SimulationConfig, apply_overrides, parse_config, parse_json
from .connector import (
    EXCHANGE_PHASES,
    Connector,
    ExchangeOptions,
    ExchangeReport,
    discover,
    negotiate_contract,
    run_exchange,
    transfer_contract,
)
from .errors import DsbError, SemanticError, SetupError, UnknownContract
from .exchange import LogKind, TransferLog, log_hash
from .network import Network
from .provenance import verify_chain
from .rules import Application, lei_with_check_digits
from .semantics import CatalogQuery, IndexEntry, IndexOrigin, SemanticModel
from .trust import sign_record

OUTCOMES = ("Ok", "Failed", "Skipped")


def default_lei(participant_id: str) -> str:
    """A valid, deterministic LEI for test participants."""
    alphabet = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    h = hashlib.sha256(participant_id.encode("utf-8")).digest()
    return lei_with_check_digits("5299" + "".join(alphabet[b % 36] for b in h[:14]))


@dataclass(frozen=True)
class Expectation:
    phase: str
    outcome: str
    error: str | None = None
    detail: str | None = None

    def __post_init__(self):
        if self.phase not in EXCHANGE_PHASES:
            raise SemanticError(f"expectations.phase={self.phase!r}")
        if self.outcome not in OUTCOMES:
            raise SemanticError(f"expectations.outcome={self.outcome!r}")


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    setup: tuple[dict, ...] = ()
    exchange: dict | None = None
    expectations: tuple[Expectation, ...] = ()
    checks: tuple[dict, ...] = ()
    config_overrides: dict = field(default_factory=dict)
    description: str = ""

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        if not isinstance(raw, dict) or not isinstance(raw.get("scenario_id"), str):
            raise SemanticError("scenario_id")
        unknown = set(raw) - {"scenario_id", "setup", "exchange", "expectations", "checks", "config_overrides", "description"}
        if unknown:
            raise SemanticError(f"scenario.{sorted(unknown)[0]}")
        for i, step in enumerate(raw.get("setup", [])):
            if not isinstance(step, dict) or step.get("op") not in STEP_OPS:
                raise SemanticError(f"setup[{i}].op")
        for i, check in enumerate(raw.get("checks", [])):
            if not isinstance(check, dict) or check.get("check") not in CHECKS:
                raise SemanticError(f"checks[{i}].check")
        expectations = []
        for i, e in enumerate(raw.get("expectations", [])):
            try:
                expectations.append(Expectation(**e))
            except TypeError:
                raise SemanticError(f"expectations[{i}]") from None
        if expectations and raw.get("exchange") is None:
            raise SemanticError("exchange", "SemanticError(exchange): expectations need an exchange")
        return cls(
            scenario_id=raw["scenario_id"],
            setup=tuple(raw.get("setup", [])),
            exchange=raw.get("exchange"),
            expectations=tuple(expectations),
            checks=tuple(raw.get("checks", [])),
            config_overrides=raw.get("config_overrides", {}),
            description=raw.get("description", ""),
        )


def shipped_scenarios() -> list[str]:
    folder = resources.files("dsb.data").joinpath("scenarios")
    return sorted(p.name[: -len(".json")] for p in folder.iterdir() if p.name.endswith(".json"))


def load_scenario(name_or_path: str | Path) -> Scenario:
    """Load a shipped scenario by id, or a scenario JSON file by path."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        res = resources.files("dsb.data").joinpath("scenarios", f"{name_or_path}.json")
        if not res.is_file():
            raise SemanticError(f"scenario {name_or_path!r} not found")
        text = res.read_text(encoding="utf-8")
    return Scenario.from_dict(parse_json(text))


class Runner:
    """Applies setup steps to a fresh network."""

    def __init__(self, config: SimulationConfig, seed: int = 0):
        self.network = Network(config, seed)
        self.reports: dict[str, ExchangeReport] = {}
        self.contracts_by_label: dict[str, str] = {}
        self.log: list[dict] = []

    def connector(self, name: str) -> Connector:
        return self.network.connector(name)

    def apply(self, index: int, step: dict) -> Any:
        op = step["op"]
        expect_error = step.get("expect_error")
        try:
            result = STEP_OPS[op](self, step)
        except DsbError as exc:
            if expect_error == exc.code:
                self.log.append({"step": index, "op": op, "outcome": exc.code})
                return None
            raise SetupError(f"{index}:{op}", f"SetupError({index}:{op}): {exc.code}({exc.detail})") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise SetupError(f"{index}:{op}", f"SetupError({index}:{op}): {type(exc).__name__}: {exc}") from exc
        if expect_error is not None:
            raise SetupError(f"{index}:{op}", f"SetupError({index}:{op}): expected {expect_error}")
        self.log.append({"step": index, "op": op, "outcome": "Ok"})
        return result


# setup step ops -------------------------------------------------------


def _onboard(r: Runner, s: dict):
    net = r.network
    name = s["connector"]
    connector = net.connectors.get(name)
    if connector is None:
        connector = Connector(name, net)
    pid = s.get("participant_id", f"{name}@{s['space']}")
    country = s.get("country")
    if country is None:
        allow = net.space(s["space"]).definition.country_allowlist
        country = allow[0] if allow else "JP"
    app = Application(
        participant_id=pid,
        legal_name=s.get("legal_name", f"{pid} Ltd"),
        country=country,
        lei=s.get("lei", default_lei(pid)),
        secret=s.get("secret", f"secret-{pid}"),
    )
    holding = connector.onboard(s["space"], app)
    net.connectors[name] = connector
    return holding.participant_id


def _register_device(r: Runner, s: dict):
    return r.connector(s["connector"]).register_device(s["domain"], s.get("space")).device_id


def _register_model(r: Runner, s: dict):
    model = SemanticModel(
        s["model_id"], s["space"], s.get("name", s["model_id"]), str(s.get("version", "1")),
        tuple((a[0], a[1]) for a in s.get("attributes", [])),
    )
    return r.network.space(s["space"]).repository.register(model)


def _publish(r: Runner, s: dict):
    extra = {k: s[k] for k in ("title", "description", "theme", "extensions", "distribution_endpoint") if k in s}
    payload = s.get("payload", f"payload of {s['dataset_id']}").encode("utf-8")
    return r.connector(s["connector"]).publish(s["dataset_id"], s["model_id"], payload, **extra).record_id


def _index_add(r: Runner, s: dict):
    a, b = tuple(s["a"]), tuple(s["b"])
    entry = IndexEntry(a, b, float(s.get("confidence", 1.0)), IndexOrigin(s.get("origin", "Manual")))
    return r.network.index.add(entry).key


def _index_suggest(r: Runner, s: dict):
    net = r.network
    threshold = s.get("threshold", net.config.index_threshold)
    suggestions = net.index.suggest(net.space(s["space_a"]).repository, net.space(s["space_b"]).repository, threshold)
    for entry in suggestions:
        net.index.add(entry)
    return len(suggestions)


def _revoke(r: Runner, s: dict):
    holding = r.connector(s["connector"]).holding(s.get("space"))
    vdr = r.network.space(holding.space_id).vdr
    if vdr is None:
        raise SemanticError(f"{holding.space_id} has no VDR")
    vdr.revoke(holding.credential.credential_id)
    return holding.credential.credential_id


def _advance_clock(r: Runner, s: dict):
    return r.network.clock.advance(int(s["seconds"]))


def _swap_certificate(r: Runner, s: dict):
    """Replace a device's certificate with one issued for ``domain``."""
    connector = r.connector(s["connector"])
    holding = connector.holding(s.get("space"))
    registry = r.network.space(holding.space_id).registry
    device = registry.devices_of(holding.participant_id)[int(s.get("device", 0))]
    ca = r.network.ca_for(holding.space_id)
    cert = ca.issue(s["domain"], device.public_key, now=r.network.clock.now)
    return registry.replace_certificate(device.device_id, cert).device_id


def _deregister_device(r: Runner, s: dict):
    holding = r.connector(s["connector"]).holding(s.get("space"))
    registry = r.network.space(holding.space_id).registry
    return [registry.deregister_device(d.device_id).device_id for d in registry.devices_of(holding.participant_id)]


def _exchange(r: Runner, s: dict):
    report = run_exchange(
        r.connector(s["provider"]), r.connector(s["consumer"]), s["dataset_id"], ExchangeOptions.from_dict(s.get("options"))
    )
    label = s.get("label", f"exchange-{len(r.reports) + 1}")
    r.reports[label] = report
    if report.contract_id:
        r.contracts_by_label[label] = report.contract_id
    if s.get("require_ok", True) and not report.ok:
        failed = report.failed_phase
        raise SetupError(label, f"SetupError({label}): {failed.phase} {failed.error}({failed.detail})")
    return report.exchange_id


def _relay(r: Runner, s: dict):
    """Re-publish a received dataset so it can travel another hop."""
    connector = r.connector(s["connector"])
    dataset_id = s["dataset_id"]
    payload = connector.received[dataset_id]
    model_id = s.get("model_id")
    if model_id is None:
        model_id = next(c.datasets[dataset_id].model_id for c in r.network.connectors.values() if dataset_id in c.datasets)
    return connector.publish(dataset_id, model_id, payload).record_id


def _forge_receive_log(r: Runner, s: dict):
    """The forger claims to be the receiver of an earlier exchange."""
    net = r.network
    forger = r.connector(s["connector"])
    contract = net.contracts[r.contracts_by_label[s["exchange"]]]
    send = next(l for l in forger_logs(r, contract.contract_id) if l.kind is LogKind.SEND)
    log = TransferLog(
        log_id=f"{contract.contract_id}/receive-{forger.participant_id}",
        kind=LogKind.RECEIVE,
        contract_id=contract.contract_id,
        dataset_id=contract.dataset_id,
        actor=forger.participant_id,
        counterparty=send.actor,
        timestamp=net.clock.tick(),
        prev_hash=log_hash(send),
    )
    log = sign_record(log, forger.keypair)
    pms = net.space(s.get("space", forger.home_space)).pms
    if pms is None:
        raise SemanticError(f"no PMS in {s.get('space', forger.home_space)}")
    return pms.ingest(log)


def forger_logs(r: Runner, contract_id: str) -> list[TransferLog]:
    for c in r.network.connectors.values():
        logs = c.logbook.for_contract(contract_id)
        if logs:
            return logs
    raise UnknownContract(contract_id)


def _negotiate(r: Runner, s: dict):
    contract, _ = negotiate_contract(
        r.connector(s["provider"]), r.connector(s["consumer"]), s["dataset_id"], ExchangeOptions.from_dict(s.get("options"))
    )
    return contract.contract_id


def _transfer(r: Runner, s: dict):
    contract = r.network.contracts.get(s["contract_id"])
    if contract is None:
        raise UnknownContract(s["contract_id"])
    provider = r.network.connector(contract.provider)
    consumer = r.network.connector(contract.consumer)
    _, logs, _ = transfer_contract(provider, consumer, contract, ExchangeOptions.from_dict(s.get("options")))
    return [l.log_id for l in logs]


STEP_OPS: dict[str, Callable[[Runner, dict], Any]] = {
    "onboard": _onboard,
    "register_device": _register_device,
    "register_model": _register_model,
    "publish": _publish,
    "index_add": _index_add,
    "index_suggest": _index_suggest,
    "revoke": _revoke,
    "advance_clock": _advance_clock,
    "swap_certificate": _swap_certificate,
    "deregister_device": _deregister_device,
    "exchange": _exchange,
    "relay": _relay,
    "forge_receive_log": _forge_receive_log,
    "negotiate": _negotiate,
    "transfer": _transfer,
}


# checks ---------------------------------------------------------------


def _check_endpoint_status(r: Runner, c: dict) -> tuple[bool, Any]:
    """Every device of ``connector`` verified with each listed space's trust store."""
    from .registry import verify_endpoint

    net = r.network
    holding = r.connector(c["connector"]).holding(c.get("space"))
    registry = net.space(holding.space_id).registry
    seen = {}
    for space_id in c["from_spaces"]:
        statuses = []
        for device in registry.devices_of(holding.participant_id):
            ca_key = net.trusted_ca_keys(space_id).get(device.certificate.issuer_ca)
            if ca_key is None:
                statuses.append("BadCaSignature")
                continue
            statuses.append(
                verify_endpoint(device.certificate, device.endpoint_domain, device.public_key, ca_key, net.clock.now).value
            )
        seen[space_id] = statuses
    values = [s for statuses in seen.values() for s in statuses]
    ok = bool(values) and all(v == c.get("expect", "Ok") for v in values)
    return ok, seen


def _check_provenance(r: Runner, c: dict) -> tuple[bool, Any]:
    pms = r.network.space(c["space"]).pms
    if pms is None:
        return c.get("expect") == "NoPms", "NoPms"
    chain = pms.chain(c["dataset_id"])
    verdict = str(verify_chain(chain, r.network.key_of))
    hops_ok = "hops" not in c or len(chain.hops) == c["hops"]
    return verdict == c.get("expect", "Ok") and hops_ok, {"verdict": verdict, "hops": len(chain.hops)}


def _check_discover(r: Runner, c: dict) -> tuple[bool, Any]:
    hits = discover(r.connector(c["connector"]), CatalogQuery(**c.get("query", {})))
    got = {
        "records": [h.record.record_id for h in hits],
        "conforms_to": [h.record.conforms_to for h in hits],
        "warnings": sorted({str(w) for h in hits for w in h.warnings}),
    }
    ok = all(got[k] == c[f"expect_{k}"] for k in ("records", "conforms_to", "warnings") if f"expect_{k}" in c)
    return ok, got


def _check_wallet(r: Runner, c: dict) -> tuple[bool, Any]:
    wallet = r.connector(c["connector"]).wallet
    got = {"dual_stack": wallet.dual_stack, "spaces": sorted(wallet.holdings)}
    ok = all(got[k] == c[k] for k in ("dual_stack", "spaces") if k in c)
    return ok, got


def _check_trace(r: Runner, c: dict) -> tuple[bool, Any]:
    """Substring of an event in the main exchange trace, with outcome."""
    report = r.reports.get(c.get("exchange", "main"))
    if report is None:
        return False, None
    hits = [f"{e.event}={e.outcome}" for e in report.trace if c["event"] in e.event]
    return any(h.endswith("=" + c["outcome"]) for h in hits), hits


CHECKS: dict[str, Callable[[Runner, dict], tuple[bool, Any]]] = {
    "endpoint_status": _check_endpoint_status,
    "provenance": _check_provenance,
    "discover": _check_discover,
    "wallet": _check_wallet,
    "trace": _check_trace,
}


@dataclass
class ScenarioResult:
    scenario_id: str
    seed: int
    expectations: list[dict] = field(default_factory=list)
    checks: list[dict] = field(default_factory=list)
    report: ExchangeReport | None = None
    setup_log: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e["passed"] for e in self.expectations) and all(c["passed"] for c in self.checks)

    def to_json(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "seed": self.seed,
            "passed": self.passed,
            "expectations": self.expectations,
            "checks": self.checks,
            "setup": self.setup_log,
            "report": self.report.to_json() if self.report else None,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


def scenario_config(config: SimulationConfig, scenario: Scenario) -> SimulationConfig:
    if not scenario.config_overrides:
        return config
    return parse_config(apply_overrides(config.raw, scenario.config_overrides))


def run_scenario(config: SimulationConfig, scenario: Scenario, seed: int = 0) -> ScenarioResult:
    """Run setup, the exchange and checks on a fresh network.

    Raises :class:`SetupError` naming the failing step.
    """
    runner = Runner(scenario_config(config, scenario), seed)
    for i, step in enumerate(scenario.setup):
        runner.apply(i, step)
    result = ScenarioResult(scenario.scenario_id, seed, setup_log=runner.log)
    if scenario.exchange is not None:
        ex = scenario.exchange
        try:
            options = ExchangeOptions.from_dict(ex.get("options"))
            provider, consumer = runner.connector(ex["provider"]), runner.connector(ex["consumer"])
        except (DsbError, KeyError, ValueError) as exc:
            raise SetupError("exchange", f"SetupError(exchange): {exc}") from exc
        report = run_exchange(provider, consumer, ex["dataset_id"], options)
        runner.reports["main"] = report
        result.report = report
        for e in scenario.expectations:
            actual = report.phase(e.phase)
            passed = (
                actual.outcome == e.outcome
                and (e.error is None or actual.error == e.error)
                and (e.detail is None or actual.detail == e.detail)
            )
            result.expectations.append(
                {"expected": dataclasses.asdict(e), "actual": actual.to_json(), "passed": passed}
            )
    for check in scenario.checks:
        try:
            ok, got = CHECKS[check["check"]](runner, check)
        except DsbError as exc:
            ok, got = False, f"{exc.code}({exc.detail})"
        result.checks.append({"check": check, "actual": got, "passed": ok})
    return result


def run_scenarios(config: SimulationConfig, scenarios: list[Scenario], seed: int = 0, workers: int = 1) -> list[ScenarioResult]:
    """Independent scenarios never share a network, so they may run in parallel."""
    if workers <= 1:
        return [run_scenario(config, s, seed) for s in scenarios]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: run_scenario(config, s, seed), scenarios))
