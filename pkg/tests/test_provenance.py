import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chains import KEYS, hop_logs, honest_logs, resolve
from dsb.errors import BadSignature, UnknownActor
from dsb.exchange import LogKind
from dsb.provenance import ProvenanceChain, ProvenanceService, verify_chain
from dsb.trust import sign_record


def pms_with(logs):
    pms = ProvenanceService(resolve)
    for log in logs:
        pms.ingest(log)
    return pms


def test_ingest_rejects_tampered_and_unknown():
    send, _ = hop_logs(0, "alice", "bob")
    pms = ProvenanceService(resolve)
    with pytest.raises(BadSignature):
        pms.ingest(dataclasses.replace(send, timestamp=99))
    with pytest.raises(BadSignature):
        pms.ingest(dataclasses.replace(send, actor="zed"))
    assert pms.logs == {}


def test_duplicate_ingest_is_idempotent():
    send, _ = hop_logs(0, "alice", "bob")
    pms = pms_with([send, send])
    assert pms.ingest(send) == send.log_id and len(pms.logs) == 1


def test_three_party_chain_has_two_hops():
    pms = pms_with(honest_logs(["alice", "bob", "carol"]))
    chain = pms.chain("ds")
    assert [(h.sender, h.receiver) for h in chain.hops] == [("alice", "bob"), ("bob", "carol")]
    assert chain.gaps == ()
    assert verify_chain(chain, resolve).ok


def test_missing_receive_is_a_gap():
    logs = honest_logs(["alice", "bob", "carol"])
    chain = pms_with(logs[:-1]).chain("ds")
    assert chain.gaps == (1,)
    assert str(verify_chain(chain, resolve)) == "BrokenLink(1)"


def test_empty_chain_is_ok():
    chain = ProvenanceService(resolve).chain("nothing")
    assert chain.hops == () and verify_chain(chain, resolve).ok


def test_query_filters():
    pms = pms_with(honest_logs(["alice", "bob", "carol"]) + honest_logs(["dave", "alice"], "other"))
    assert {l.actor for l in pms.query(actor="bob")} == {"bob"}
    assert {l.dataset_id for l in pms.query(dataset_id="other")} == {"other"}
    assert [l.timestamp for l in pms.query()] == sorted(l.timestamp for l in pms.query())


def test_resigned_by_someone_else_is_bad_signature():
    logs = honest_logs(["alice", "bob", "carol"])
    forged = sign_record(dataclasses.replace(logs[2], signature=None), KEYS["dave"])
    chain = ProvenanceChain("ds", pms_with(logs).chain("ds").hops)
    hops = list(chain.hops)
    hops[1] = dataclasses.replace(hops[1], send=forged)
    assert str(verify_chain(ProvenanceChain("ds", tuple(hops)), resolve)) == f"BadSignature({forged.log_id})"


def test_sender_who_never_received_is_actor_mismatch():
    # carol forwards data that only bob ever received
    logs = honest_logs(["alice", "bob"]) + list(hop_logs(1, "carol", "dave"))
    assert str(verify_chain(pms_with(logs).chain("ds"), resolve)) == "ActorMismatch(1)"


def test_unknown_actor_raises():
    logs = honest_logs(["alice", "bob"])
    chain = pms_with(logs).chain("ds")
    with pytest.raises(UnknownActor):
        verify_chain(chain, lambda actor: resolve(actor) if actor == "alice" else resolve("zed"))


def test_latest_claim_wins_per_contract():
    send, receive = hop_logs(0, "alice", "bob")
    later = sign_record(dataclasses.replace(send, log_id="ds-c0/send-2", timestamp=send.timestamp + 5, signature=None),
                        KEYS["alice"])
    chain = pms_with([send, receive, later]).chain("ds")
    assert chain.hops[0].send == later
    assert str(verify_chain(chain, resolve)) == "BrokenLink(0)"


def test_payments_stay_out_of_the_chain():
    send, receive = hop_logs(0, "alice", "bob")
    payment = sign_record(dataclasses.replace(receive, log_id="ds-c0/payment", kind=LogKind.PAYMENT, signature=None),
                          KEYS["bob"])
    assert len(pms_with([send, receive, payment]).chain("ds").hops) == 1


def test_chain_json_round_trip():
    logs = honest_logs(["alice", "bob", "carol"])
    chain = pms_with(logs[:-1]).chain("ds")
    data = chain.to_json()
    assert data["gaps"] == [1]
    assert ProvenanceChain.from_json(data) == chain


paths = st.lists(st.sampled_from(sorted(KEYS)), min_size=2, max_size=6).filter(
    lambda p: all(a != b for a, b in zip(p, p[1:]))
)


@settings(max_examples=100, deadline=None)
@given(paths)
def test_honest_chains_verify(path):
    chain = pms_with(honest_logs(path)).chain("ds")
    assert len(chain.hops) == len(path) - 1
    assert verify_chain(chain, resolve).ok


def test_middle_party_claiming_receipt_from_elsewhere():
    # bob re-signs his receive log naming dave as the sender
    logs = honest_logs(["alice", "bob", "carol"])
    forged = sign_record(dataclasses.replace(logs[1], counterparty="dave", signature=None), KEYS["bob"])
    chain = pms_with(logs[:1] + [forged] + logs[2:]).chain("ds")
    assert str(verify_chain(chain, resolve)) == "ActorMismatch(0)"
