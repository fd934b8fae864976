import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsb.errors import EmptySeed
from dsb.trust import (
    DidDocument,
    Signature,
    SignedToken,
    did_for_key,
    generate_keypair,
    key_id_for,
    sign,
    sign_record,
    verify,
    verify_record,
)

A = generate_keypair(b"A")
B = generate_keypair(b"B")


def test_same_seed_same_key_id():
    assert generate_keypair(b"A").key_id == generate_keypair(b"A").key_id == A.key_id


def test_distinct_seeds_distinct_keys():
    assert A.public_key != B.public_key


def test_empty_seed_rejected():
    with pytest.raises(EmptySeed):
        generate_keypair(b"")


def test_private_key_hidden_from_repr():
    assert A.private_key.hex() not in repr(A)


def test_key_ids_and_dids_derive_from_public_key():
    assert A.key_id == key_id_for(A.public_key)
    assert did_for_key(A.public_key).startswith("did:sim:")
    assert len(did_for_key(A.public_key)) == len("did:sim:") + 32


def test_empty_payload_round_trip():
    assert verify(A.public_key, b"", sign(A.private_key, b""))


def test_single_character_change_fails():
    sig = sign(A.private_key, b"log")
    assert verify(A.public_key, b"log", sig)
    assert not verify(A.public_key, b"Log", sig)


def test_signatures_bound_to_key():
    sig = sign(A.private_key, b"x")
    assert not verify(B.public_key, b"x", sig)
    forged = dataclasses.replace(sign(B.private_key, b"x"), signer_key_id=A.key_id)
    assert not verify(A.public_key, b"x", forged)


@pytest.mark.parametrize(
    "sig",
    [
        None,
        "not a signature",
        Signature(A.key_id, "ed25519", b""),
        Signature(A.key_id, "ed25519", sign(A.private_key, b"x").value[:-1]),
        Signature(A.key_id, "rsa", sign(A.private_key, b"x").value),
    ],
)
def test_malformed_signatures_fail_without_raising(sig):
    assert verify(A.public_key, b"x", sig) is False


def test_malformed_public_key_fails_without_raising():
    assert verify(b"short", b"x", sign(A.private_key, b"x")) is False


@settings(max_examples=1000, deadline=None)
@given(st.binary(min_size=1, max_size=16), st.binary(max_size=256))
def test_sign_verify_round_trip(seed, payload):
    kp = generate_keypair(seed)
    assert verify(kp.public_key, payload, sign(kp.private_key, payload))


@settings(max_examples=1000, deadline=None)
@given(st.binary(max_size=64), st.binary(max_size=64))
def test_other_payload_never_verifies(p, q):
    if p != q:
        assert not verify(A.public_key, q, sign(A.private_key, p))


def test_token_requires_positive_lifetime():
    with pytest.raises(ValueError):
        SignedToken("t", "s", "i", 10, 10, {})


def test_did_document_requires_key():
    with pytest.raises(ValueError):
        DidDocument("did:sim:x", b"", "space-e")


def test_sign_record_round_trip_and_tamper():
    tok = sign_record(SignedToken("t", "s", "space-j", 0, 5, {"scope": "c"}), A)
    assert verify_record(tok, A.public_key)
    assert not verify_record(dataclasses.replace(tok, claims={"scope": "d"}), A.public_key)
    assert not verify_record(tok, B.public_key)
