"""End-to-end acceptance criteria; each prints one PASS/FAIL line."""

import contextlib
import itertools
import json
import time

import pytest
from click.testing import CliRunner
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from chains import KEYS, honest_logs, resolve
from dsb.cli import main
from dsb.encoding import canonical_encode
from dsb.errors import UnknownActor
from dsb.exchange import Dataset, LogKind, PackageStatus, package_sign, package_verify
from dsb.identity import IdentityProvider, PresentationStatus, TokenStatus, VerifiableDataRegistry, verify_presentation
from dsb.registry import CertificateAuthority, EndpointStatus, verify_endpoint
from dsb.provenance import ProvenanceService, verify_chain
from dsb.scenario import load_scenario, run_scenario, shipped_scenarios
from dsb.semantics import SemanticIndex, IndexEntry, CatalogRecord, catalog_convert, catalog_validate
from dsb.trust import (
    DidDocument,
    Presentation,
    ValidationLevel,
    did_for_key,
    generate_keypair,
    presentation_challenge,
    sign,
    verify,
)
from dsb.network import Network
from strategies import bump, deep_mutations

CASES = 1000


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def run(number, title):
        start = time.perf_counter()
        status = "FAIL"
        try:
            yield
            status = "PASS"
        finally:
            with capsys.disabled():
                print(f"\n[acceptance] criterion {number} {title}: {status} ({time.perf_counter() - start:.2f} s)")

    return run


# 1 -------------------------------------------------------------------

EXPECTED_NA = {
    ("Contract", "p1", "space-j"),
    ("Contract", "p2", "space-j"),
    ("Contract", "p2", "space-e"),
    ("Dataset", "p2", "space-e"),
    ("Sending & Receiving Log", "p1", "space-e"),
    ("Sending & Receiving Log", "p2", "space-e"),
    ("Data catalog", "p2", "space-j"),
    ("Data catalog", "p2", "space-e"),
}


def test_gap_matrix_reproduction(criterion, tmp_path):
    with criterion(1, "gap-matrix reproduction"):
        start = time.perf_counter()
        result = CliRunner().invoke(main, ["--data-dir", str(tmp_path / "d"), "report", "--out", str(tmp_path / "r")])
        elapsed = time.perf_counter() - start
        assert result.exit_code == 0, result.output
        lines = [l.split(",") for l in result.output.strip().splitlines()]
        header, rows = lines[0], lines[1:]
        assert len(rows) == 6 and all(len(r) == 5 for r in rows)
        columns = [tuple(h.split("/")) for h in header[1:]]
        got_na = {(r[0], p, s) for r in rows for (p, s), v in zip(columns, r[1:]) if v == "NA"}
        others = [v for r in rows for v in r[1:] if v != "NA"]
        assert got_na == EXPECTED_NA
        assert all(v.startswith("Supported(") for v in others) and len(others) == 24 - len(EXPECTED_NA)
        assert (tmp_path / "r" / "gap_matrix.png").exists()
        assert elapsed < 5.0, elapsed


# 2 -------------------------------------------------------------------

def _timed(config, name):
    start = time.perf_counter()
    result = run_scenario(config, load_scenario(name))
    return result, time.perf_counter() - start


def test_topology_claims(criterion, config):
    with criterion(2, "cross-space topology claims"):
        single, t1 = _timed(config, "cross_space_single_stack")
        failed = single.report.failed_phase
        assert single.passed
        assert (failed.phase, failed.error, failed.detail) == (
            "Transfer", "ParticipantVerificationFailed", "UnrecognizedFramework")
        dual, t2 = _timed(config, "cross_space_dual_stack")
        assert dual.passed and dual.report.ok
        mutual, t3 = _timed(config, "cross_space_mutual_recognition")
        assert mutual.passed and mutual.report.ok
        assert any(c["check"]["check"] == "wallet" and c["actual"]["dual_stack"] is False for c in mutual.checks)
        cert, t4 = _timed(config, "cross_space_device_certificate")
        assert cert.passed and cert.report.ok
        statuses = [c["actual"] for c in cert.checks if c["check"]["check"] == "endpoint_status"]
        assert statuses and all(set(s) == {"space-j", "space-e"} for s in statuses)
        assert {v for s in statuses for vs in s.values() for v in vs} == {"Ok"}
        assert max(t1, t2, t3, t4) < 1.0, (t1, t2, t3, t4)


# 3 -------------------------------------------------------------------

POOL = ("alice", "bob", "carol")
KNOWN = sorted(KEYS)


def _paths(max_hops):
    for hops in range(1, max_hops + 1):
        for path in itertools.product(POOL, repeat=hops + 1):
            if all(a != b for a, b in zip(path, path[1:])):
                yield list(path)


def _log_alternatives(path, value):
    if path in ("actor", "counterparty"):
        return [bump(value)] + [k for k in KNOWN if k != value]
    if path == "kind":
        return [k for k in LogKind if k is not value]
    if path in ("timestamp", "amount"):
        return [value + 1] + ([value - 1, 0] if value > 0 else [])
    if path == "prev_hash":
        return [bump(value), ""]
    if path == "signature":
        return [None]
    return [bump(value)]


def _pms_verdict(logs):
    pms = ProvenanceService(resolve)
    pms.logs = {l.log_id: l for l in logs}
    try:
        return str(verify_chain(pms.chain("ds"), resolve))
    except UnknownActor as exc:
        return f"UnknownActor({exc.detail})"


def test_provenance_brute_force(criterion):
    with criterion(3, "provenance brute-force oracle"):
        start = time.perf_counter()
        chains = mutants = 0
        escaped = []
        for path in _paths(4):
            logs = honest_logs(path)
            assert _pms_verdict(logs) == "Ok", path
            chains += 1
            for i, log in enumerate(logs):
                for field_path, mutated in deep_mutations(log, _log_alternatives):
                    mutants += 1
                    tampered = logs[:i] + [mutated] + logs[i + 1:]
                    if _pms_verdict(tampered) == "Ok":
                        escaped.append((path, i, field_path))
        assert chains == 90 and mutants > 10_000
        assert escaped == []
        assert time.perf_counter() - start < 60.0


# 4 -------------------------------------------------------------------

def _counted(strategy_args, check, cases=CASES):
    """Run ``check`` over ``cases`` hypothesis examples and return how many ran."""
    count = [0]

    @settings(max_examples=cases, deadline=None, database=None,
              suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
    @given(st.tuples(*strategy_args))
    def inner(args):
        count[0] += 1
        check(*args)

    inner()
    return count[0]


ISSUER = generate_keypair(b"acc/issuer")
HOLDER = generate_keypair(b"acc/holder")
CA = CertificateAuthority("acc-ca", generate_keypair(b"acc/ca"), ttl=10_000)
labels = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789", min_size=1, max_size=12)
domains = st.lists(labels, min_size=2, max_size=4).map(".".join)


def _vdr():
    vdr = VerifiableDataRegistry("space-e", DidDocument(did_for_key(ISSUER.public_key), ISSUER.public_key, "space-e"))
    vdr.register(DidDocument(did_for_key(HOLDER.public_key), HOLDER.public_key, "space-e"))
    return vdr


def _present(vc, audience, nonce):
    return Presentation(vc, audience, nonce, sign(HOLDER.private_key, presentation_challenge(vc.credential_id, audience, nonce)))


def _pick(mutants, index):
    return mutants[index % len(mutants)]


def test_crypto_and_credential_properties(criterion):
    with criterion(4, "crypto/credential property suite"):
        counts = {}

        def round_trip(seed, payload, other):
            kp = generate_keypair(seed)
            sig = sign(kp.private_key, payload)
            assert verify(kp.public_key, payload, sig)
            if other != payload:
                assert not verify(kp.public_key, other, sig)

        counts["sign/verify"] = _counted((st.binary(min_size=1, max_size=32), st.binary(max_size=256),
                                          st.binary(max_size=256)), round_trip)

        def token_tamper(subject, claims, now, pick):
            idp = IdentityProvider("space-j", ISSUER, token_ttl=3600)
            idp.register(subject, "pw")
            token = idp.issue_token(subject, "pw", now, claims)
            assert idp.introspect(token, now) is TokenStatus.ACTIVE
            _, mutated = _pick(list(deep_mutations(token)), pick)
            assert idp.introspect(mutated, now) is not TokenStatus.ACTIVE

        counts["SignedToken"] = _counted((labels, st.dictionaries(labels, labels, max_size=3),
                                          st.integers(0, 10**6), st.integers(0, 999)), token_tamper)

        def credential_tamper(now, audience, nonce, pick):
            vdr = _vdr()
            vc = vdr.issue_membership_vc(ISSUER, did_for_key(HOLDER.public_key), now)
            assert verify_presentation(audience, _present(vc, audience, nonce), vdr, nonce, now) is PresentationStatus.VALID
            _, mutated = _pick(list(deep_mutations(vc)), pick)
            status = verify_presentation(audience, _present(mutated, audience, nonce), vdr, nonce, now)
            assert status is not PresentationStatus.VALID

        counts["MembershipCredential"] = _counted((st.integers(0, 10**6), labels, st.binary(min_size=1, max_size=16),
                                                   st.integers(0, 999)), credential_tamper)

        def certificate_tamper(domain, seed, level, now, pick):
            key = generate_keypair(seed).public_key
            cert = CA.issue(domain, key, level, now)
            assert verify_endpoint(cert, domain, key, CA.public_key, now) is EndpointStatus.OK
            _, mutated = _pick(list(deep_mutations(cert)), pick)
            status = verify_endpoint(mutated, mutated.domain, mutated.subject_public_key, CA.public_key, now)
            assert status is not EndpointStatus.OK

        counts["EndpointCertificate"] = _counted((domains, st.binary(min_size=1, max_size=8),
                                                  st.sampled_from(list(ValidationLevel)), st.integers(0, 10**6),
                                                  st.integers(0, 999)), certificate_tamper)

        def package_tamper(dataset_id, model_id, payload, now, pick):
            dataset = Dataset(dataset_id, "owner", model_id, payload)
            package = package_sign(dataset, ISSUER, now, ISSUER.public_key)
            assert package_verify(package, ISSUER.public_key) is PackageStatus.OK
            _, mutated = _pick(list(deep_mutations(package)), pick)
            assert package_verify(mutated, ISSUER.public_key) is not PackageStatus.OK

        counts["DataPackage"] = _counted((labels, labels, st.binary(max_size=128), st.integers(0, 10**6),
                                          st.integers(0, 999)), package_tamper)

        def replay(aud_a, aud_b, nonce_a, nonce_b, now):
            vdr = _vdr()
            vc = vdr.issue_membership_vc(ISSUER, did_for_key(HOLDER.public_key), 0)
            pres = _present(vc, aud_a, nonce_a)
            assert verify_presentation(aud_a, pres, vdr, nonce_a, now) is PresentationStatus.VALID
            if aud_b != aud_a:
                assert verify_presentation(aud_b, pres, vdr, nonce_a, now) is PresentationStatus.AUDIENCE_MISMATCH
            if nonce_b != nonce_a:
                assert verify_presentation(aud_a, pres, vdr, nonce_b, now) is PresentationStatus.NONCE_MISMATCH

        counts["presentation replay"] = _counted((labels, labels, st.binary(min_size=1, max_size=16),
                                                  st.binary(min_size=1, max_size=16), st.integers(0, 10**6)), replay)

        def revocation(ops):
            vdr = _vdr()
            vc = vdr.issue_membership_vc(ISSUER, did_for_key(HOLDER.public_key), 0)
            revoked, t = False, 0
            for op, step in ops:
                t += step
                if op == "revoke" and not revoked:
                    vdr.revoke(vc.credential_id)
                    revoked = True
                nonce = t.to_bytes(8, "big")
                status = verify_presentation("aud", _present(vc, "aud", nonce), vdr, nonce, t)
                assert (status is PresentationStatus.REVOKED) == revoked

        counts["revocation monotonicity"] = _counted(
            (st.lists(st.tuples(st.sampled_from(["check", "revoke"]), st.integers(0, 10**4)), min_size=1, max_size=12),),
            revocation,
        )
        short = {k: v for k, v in counts.items() if v < CASES}
        assert short == {}, short


# 5 -------------------------------------------------------------------

def test_catalog_round_trip(criterion, config):
    with criterion(5, "catalog round-trip"):
        net = Network(config)
        j, e = net.space("space-j"), net.space("space-e")
        index = SemanticIndex({"space-j": j.repository, "space-e": e.repository})
        index.add(IndexEntry(("space-j", "co2-report"), ("space-e", "pcf-exchange"), 1.0))
        index.add(IndexEntry(("space-j", "battery-trace"), ("space-e", "battery-passport"), 0.83))
        mapped = {"co2-report", "battery-trace"}
        models = sorted(m.model_id for m in j.repository.latest())
        assert set(models) - mapped, "need an unmapped model"
        filled = st.text(min_size=1, max_size=30).filter(str.strip)
        ext_keys = st.sampled_from(["dex:ddp", "dsb:note", "cx:bpn", "plain"])

        def check(rid, title, description, publisher, theme, model, endpoint, issued, extensions):
            record = CatalogRecord(rid, title, description, publisher, tuple(theme), model, endpoint, issued,
                                   extensions=extensions)
            assert catalog_validate(record, j.repository).ok
            there, w1 = catalog_convert(record, j.definition, e.definition, index)
            back, w2 = catalog_convert(there, e.definition, j.definition, index)
            assert canonical_encode(back.principal()) == canonical_encode(record.principal())
            portability = [w for w in w1 + w2 if w.kind == "PortabilityWarning"]
            if model in mapped:
                assert portability == []
            else:
                assert [w.kind for w in w1 if w.kind == "PortabilityWarning"] == ["PortabilityWarning"]

        n = _counted((filled, filled, filled, filled, st.lists(filled, min_size=1, max_size=3),
                      st.sampled_from(models), filled, st.integers(0, 2**40),
                      st.dictionaries(ext_keys, filled, max_size=3)), check, cases=500)
        assert n >= 500


# 6 -------------------------------------------------------------------

def test_determinism(criterion, config):
    with criterion(6, "determinism"):
        for name in shipped_scenarios():
            scenario = load_scenario(name)
            for seed in (0, 11):
                a = run_scenario(config, scenario, seed).dumps()
                b = run_scenario(config, scenario, seed).dumps()
                assert a == b, name
                json.loads(a)


# 7 -------------------------------------------------------------------

NEGATIVE = {
    "neg_expired_token": ("Transfer", "ParticipantVerificationFailed", "Expired"),
    "neg_revoked_vc": ("Contract", "ParticipantVerificationFailed", "Revoked"),
    "neg_domain_mismatch": ("Transfer", "EndpointVerificationFailed", "DomainMismatch"),
    "neg_declined_contract": ("Transfer", "ContractNotConcluded", "Declined"),
    "neg_unregistered_endpoint": ("Discovery", "EndpointNotRegistered", None),
}


def test_negative_paths(criterion, config):
    with criterion(7, "negative-path coverage"):
        for name, (phase, error, detail) in NEGATIVE.items():
            result = run_scenario(config, load_scenario(name))
            failed = result.report.failed_phase
            assert result.passed, name
            assert (failed.phase, failed.error) == (phase, error), name
            if detail is not None:
                assert failed.detail == detail, name
            later = [p.outcome for p in result.report.phases[result.report.phases.index(failed) + 1:]]
            assert set(later) <= {"Skipped"}
