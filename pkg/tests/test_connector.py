import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import join, provider
from dsb.config import apply_overrides, parse_config
from dsb.connector import (
    EXCHANGE_PHASES,
    ConnectorState,
    ExchangeOptions,
    Phase,
    Protocol,
    VerificationPolicy,
    discover,
    protocol_of,
    run_exchange,
    verify_counterpart,
)
from dsb.errors import ValidationFailed
from dsb.network import Network
from dsb.semantics import CatalogQuery, IndexEntry

SPACES = ("space-j", "space-e")


def phase_outcomes(report):
    return [(p.phase, p.outcome) for p in report.phases]


def test_wallet_dual_stack(net):
    c = join(net, "cons", "space-j")
    assert not c.wallet.dual_stack and c.holding().kind == "password" and c.holding().token is not None
    join(net, "cons", "space-e")
    assert c.wallet.dual_stack and c.holding("space-e").kind == "membership"
    assert c.home_space == "space-j" and c.state.phase is Phase.ONBOARDED
    with pytest.raises(ValueError):
        join(net, "cons", "space-e")


def test_failed_onboarding_stays_idle(net):
    with pytest.raises(ValidationFailed):
        join(net, "bad", "space-j", country="DE")
    c = net.connectors.get("bad")
    assert c is None or c.state.phase is Phase.IDLE
    assert ("onboarding:space-j:bad@space-j", "Rejected") in [(e, o) for _, e, o in net.events]


def test_state_phase_only_moves_forward():
    state = ConnectorState()
    state.advance(Phase.ONBOARDED)
    with pytest.raises(ValueError):
        state.advance(Phase.IDLE)
    with pytest.raises(ValueError):
        ConnectorState().begin_exchange()


def test_policy_needs_a_protocol():
    with pytest.raises(ValueError):
        VerificationPolicy("space-j", ())


def _proof(net, c, space, audience, nonce):
    return c.prove_to(c.holding(space), audience, nonce, net.clock.now)


def test_token_introspected_in_home_space(net):
    a, b = join(net, "a", "space-j"), join(net, "b", "space-j")
    nonce = b.next_nonce()
    verdict = b.verify_counterpart(_proof(net, a, "space-j", "b@space-j", nonce), nonce, net.clock.now)
    assert str(verdict) == "Accepted(IntrospectToken)" and verdict.subject == "a@space-j"


def test_presentation_verified_in_home_space(net):
    a, b = join(net, "a", "space-e"), join(net, "b", "space-e")
    nonce = b.next_nonce()
    verdict = b.verify_counterpart(_proof(net, a, "space-e", "b@space-e", nonce), nonce, net.clock.now)
    assert str(verdict) == "Accepted(VerifyPresentation)" and verdict.subject == "a@space-e"


def test_foreign_proofs_are_unrecognized(net):
    j, e = join(net, "j", "space-j"), join(net, "e", "space-e")
    nonce = b"n" * 16
    assert str(e.verify_counterpart(_proof(net, j, "space-j", "e@space-e", nonce), nonce, 0)) == "Rejected(UnrecognizedFramework)"
    assert str(j.verify_counterpart(_proof(net, e, "space-e", "j@space-j", nonce), nonce, 0)) == "Rejected(UnrecognizedFramework)"
    assert str(j.verify_counterpart("not a proof", nonce, 0)) == "Rejected(UnsupportedProof)"


def test_recognition_lets_foreign_proof_through(config):
    raw = apply_overrides(config.raw, {"spaces": {"space-e": {"recognized_foreign_frameworks": ["space-j"]}}})
    net = Network(parse_config(raw))
    j, e = join(net, "j", "space-j"), join(net, "e", "space-e")
    nonce = e.next_nonce()
    verdict = e.verify_counterpart(_proof(net, j, "space-j", "e@space-e", nonce), nonce, 0)
    assert str(verdict) == "Accepted(IntrospectToken)"


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(SPACES), st.sampled_from(SPACES), st.booleans(), st.integers(0, 7200))
def test_accepted_protocol_matches_issuer(config, prover_space, verifier_space, wrong_nonce, elapsed):
    net = Network(config)
    p, v = join(net, "p", prover_space), join(net, "v", verifier_space)
    nonce = v.next_nonce()
    proof = _proof(net, p, prover_space, f"v@{verifier_space}", nonce)
    check = v.next_nonce() if wrong_nonce else nonce
    verdict = verify_counterpart(net, verifier_space, f"v@{verifier_space}", proof, check, elapsed)
    if verdict.accepted:
        assert verdict.protocol is protocol_of(net, prover_space)
        assert prover_space == verifier_space


@pytest.mark.parametrize("prov_space,cons_home", list(itertools.product(SPACES, SPACES)))
def test_dual_stack_consumer_always_succeeds(net, prov_space, cons_home):
    p = provider(net, prov_space)
    other = next(s for s in SPACES if s != cons_home)
    c = join(net, "cons", cons_home)
    join(net, "cons", other)
    report = run_exchange(p, c, "ds-1", ExchangeOptions(use_pms=True, amount=5))
    assert report.ok, report.to_json()
    assert report.consumer == f"cons@{prov_space}"


@pytest.mark.parametrize("prov_space,cons_space", [("space-j", "space-e"), ("space-e", "space-j")])
def test_single_stack_fails_at_transfer_participant_check(net, prov_space, cons_space):
    p, c = provider(net, prov_space), join(net, "cons", cons_space)
    report = run_exchange(p, c, "ds-1")
    assert phase_outcomes(report) == [("Planning", "Ok"), ("Discovery", "Ok"), ("Contract", "Ok"),
                                      ("Transfer", "Failed"), ("Payment", "Skipped"), ("Verification", "Skipped")]
    failed = report.failed_phase
    assert (failed.error, failed.detail) == ("ParticipantVerificationFailed", "UnrecognizedFramework")
    assert not any(e.event == "Transfer:delivery" for e in report.trace)
    assert "ds-1" not in c.received


def _phase_index(event):
    return EXCHANGE_PHASES.index(event.event.split(":", 1)[0])


@settings(max_examples=25, deadline=None)
@given(
    prov_space=st.sampled_from(SPACES), cons_space=st.sampled_from(SPACES), dual=st.booleans(),
    ddp=st.booleans(), pms=st.booleans(), accept=st.booleans(), mode=st.sampled_from(["auto", "negotiate", "external"]),
)
def test_exchange_invariants(config, prov_space, cons_space, dual, ddp, pms, accept, mode):
    net = Network(config)
    p = provider(net, prov_space)
    c = join(net, "cons", cons_space)
    if dual:
        join(net, "cons", next(s for s in SPACES if s != cons_space))
    report = run_exchange(p, c, "ds-1", ExchangeOptions(use_ddp=ddp, use_pms=pms, accept=accept, contract_mode=mode))
    # phase order never goes backwards and Failed is followed only by Skipped
    indices = [_phase_index(e) for e in report.trace]
    assert indices == sorted(indices)
    outcomes = [r.outcome for r in report.phases]
    if "Failed" in outcomes:
        k = outcomes.index("Failed")
        assert set(outcomes[:k]) <= {"Ok"} and set(outcomes[k + 1:]) <= {"Skipped"}
    # delivery only after the provider accepted the consumer during Transfer
    events = [e.event for e in report.trace]
    if "Transfer:delivery" in events:
        checks = [e for e in report.trace[: events.index("Transfer:delivery")]
                  if e.event.startswith("Transfer:participant-verification:")]
        assert checks and checks[-1].outcome.startswith("Accepted(")
    reached = max((i + 1 for i, o in enumerate(outcomes) if o == "Ok"), default=0)
    assert p.state.phase == Phase(1 + reached)


def test_ddp_tamper_detected(net):
    p, c = provider(net, "space-j"), join(net, "cons", "space-j")
    report = run_exchange(p, c, "ds-1", ExchangeOptions(use_ddp=True, tamper_package=True))
    assert (report.failed_phase.phase, report.failed_phase.detail) == ("Transfer", "HashMismatch")


def test_ddp_unsupported_warns(net):
    p, c = provider(net, "space-e"), join(net, "cons", "space-e")
    report = run_exchange(p, c, "ds-1", ExchangeOptions(use_ddp=True))
    assert report.ok and "DdpUnsupported(space-e)" in report.phase("Transfer").warnings
    assert c.received["ds-1"] == b"payload:ds-1"


def test_pms_optional(net):
    p, c = provider(net, "space-e"), join(net, "cons", "space-e")
    plain = run_exchange(p, c, "ds-1")
    assert plain.ok and not any("pms" in e.event for e in plain.trace)
    with_pms = run_exchange(p, c, "ds-1", ExchangeOptions(use_pms=True))
    assert with_pms.ok and "PmsUnavailable" in with_pms.phase("Transfer").warnings


def test_pms_records_chain_in_space_j(net):
    p, c = provider(net, "space-j"), join(net, "cons", "space-j")
    report = run_exchange(p, c, "ds-1", ExchangeOptions(use_pms=True, amount=3))
    assert report.ok
    assert ("Verification:provenance-chain", "Ok") in [(e.event, e.outcome) for e in report.trace]
    assert len(net.space("space-j").pms.chain("ds-1").hops) == 1


def test_contract_mode_auto(net):
    p, c = provider(net, "space-e"), join(net, "cons", "space-e")
    assert run_exchange(p, c, "ds-1").phase("Contract").detail == "Agreed"
    pj, cj = provider(net, "space-j", name="pj"), join(net, "cj", "space-j")
    assert run_exchange(pj, cj, "ds-1").phase("Contract").detail == "ExternallyConcluded"


def test_declined_contract_blocks_transfer(net):
    p, c = provider(net, "space-e"), join(net, "cons", "space-e")
    report = run_exchange(p, c, "ds-1", ExchangeOptions(accept=False))
    assert report.phase("Contract").detail == "Declined"
    assert (report.failed_phase.phase, report.failed_phase.error) == ("Transfer", "ContractNotConcluded")


def test_discover_converts_foreign_records(net):
    provider(net, "space-e", model="pcf-exchange")
    c = join(net, "cons", "space-j")
    hits = discover(c, CatalogQuery(theme="battery"))
    assert [(h.source_space, [str(w) for w in h.warnings]) for h in hits] == [("space-e", ["PortabilityWarning(pcf-exchange)"])]
    net.index.add(IndexEntry(("space-j", "co2-report"), ("space-e", "pcf-exchange"), 0.9))
    hit = discover(c, CatalogQuery(model_id="co2-report"))[0]
    assert hit.record.conforms_to == "co2-report" and hit.warnings == ()
    assert discover(c, CatalogQuery(model_id="pcf-exchange"))[0].record.record_id == "ds-1"


def test_unknown_dataset_fails_planning(net):
    p, c = provider(net, "space-j"), join(net, "cons", "space-j")
    report = run_exchange(p, c, "nope")
    assert report.failed_phase.phase == "Planning" and report.failed_phase.error == "UnknownDataset"


def test_report_json_shape(net):
    p, c = provider(net, "space-j"), join(net, "cons", "space-j")
    data = run_exchange(p, c, "ds-1").to_json()
    assert [ph["phase"] for ph in data["phases"]] == list(EXCHANGE_PHASES)
    assert {"exchange_id", "provider", "consumer", "dataset_id", "phases", "trace"} <= set(data)


def test_options_reject_unknown_keys():
    with pytest.raises(Exception):
        ExchangeOptions.from_dict({"use_ddq": True})
    with pytest.raises(Exception):
        ExchangeOptions(contract_mode="barter")


def test_application_key_replaced_by_connector_key(net):
    c = join(net, "k", "space-j", public_key=b"ignored")
    assert net.key_of("k@space-j") == c.keypair.public_key


@pytest.mark.parametrize("space", SPACES)
def test_externally_concluded_contract_transfers_in_both_spaces(net, space):
    p, c = provider(net, space), join(net, "cons", space)
    report = run_exchange(p, c, "ds-1", ExchangeOptions(contract_mode="external"))
    assert report.phase("Contract").detail == "ExternallyConcluded" and report.ok


def test_dual_stack_consumer_presents_vc_to_e_provider(net):
    p = provider(net, "space-e")
    c = join(net, "cons", "space-j")
    join(net, "cons", "space-e")
    report = run_exchange(p, c, "ds-1")
    outcomes = {e.event: e.outcome for e in report.trace}
    assert outcomes["Transfer:participant-verification:prov@space-e"] == "Accepted(VerifyPresentation)"
