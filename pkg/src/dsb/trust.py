"""Keys, detached signatures and the signed credential artifacts.

All values are frozen dataclasses. Signatures are Ed25519 (deterministic),
computed over :func:`dsb.encoding.signing_bytes` of the carrying record.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .encoding import canonical, canonical_encode, signing_bytes
from .errors import EmptySeed

ALGORITHM = "ed25519"
DID_PREFIX = "did:sim:"


def digest(data: bytes) -> str:
    """Hex SHA-256, the content/link digest used throughout."""
    return hashlib.sha256(data).hexdigest()


def key_id_for(public_key: bytes) -> str:
    return "k-" + hashlib.sha256(public_key).hexdigest()[:16]


def did_for_key(public_key: bytes) -> str:
    return DID_PREFIX + hashlib.sha256(public_key).hexdigest()[:32]


@canonical
@dataclass(frozen=True)
class KeyPair:
    key_id: str
    public_key: bytes
    private_key: bytes = field(repr=False)


@canonical
@dataclass(frozen=True)
class Signature:
    signer_key_id: str
    algorithm_label: str
    value: bytes


@canonical
@dataclass(frozen=True)
class PasswordCredential:
    participant_id: str
    secret: str = field(repr=False)


@canonical
@dataclass(frozen=True)
class SignedToken:
    token_id: str
    subject: str
    issuer: str
    issued_at: int
    expires_at: int
    claims: dict = field(default_factory=dict)
    signature: Signature | None = None

    def __post_init__(self):
        if self.expires_at <= self.issued_at:
            raise ValueError("token must expire after it is issued")


@canonical
@dataclass(frozen=True)
class DidDocument:
    did: str
    public_key: bytes
    controller: str

    def __post_init__(self):
        if not self.public_key:
            raise ValueError("DID document needs a public key")


@canonical
@dataclass(frozen=True)
class MembershipCredential:
    credential_id: str
    holder_did: str
    issuer_did: str
    space_id: str
    issued_at: int
    revoked: bool = False
    signature: Signature | None = None


@canonical
@dataclass(frozen=True)
class Presentation:
    credential: MembershipCredential
    audience: str
    nonce: bytes
    holder_proof: Signature | None = None


@canonical
class ValidationLevel(enum.Enum):
    DOMAIN_VALIDATED = "DomainValidated"
    EXTENDED_VALIDATION = "ExtendedValidation"


@canonical
@dataclass(frozen=True)
class EndpointCertificate:
    domain: str
    subject_public_key: bytes
    validation_level: ValidationLevel
    issuer_ca: str
    not_after: int
    signature: Signature | None = None

    def __post_init__(self):
        if not self.domain:
            raise ValueError("certificate domain must be non-empty")


def generate_keypair(seed: bytes) -> KeyPair:
    """Derive an Ed25519 pair from ``seed``; equal seeds give equal pairs."""
    if not seed:
        raise EmptySeed()
    private = hashlib.sha256(b"dsb-key\x00" + bytes(seed)).digest()
    public = (
        Ed25519PrivateKey.from_private_bytes(private)
        .public_key()
        .public_bytes(Encoding.Raw, PublicFormat.Raw)
    )
    return KeyPair(key_id=key_id_for(public), public_key=public, private_key=private)


def sign(private_key: bytes, payload: bytes) -> Signature:
    key = Ed25519PrivateKey.from_private_bytes(private_key)
    public = key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return Signature(key_id_for(public), ALGORITHM, key.sign(bytes(payload)))


def verify(public_key: bytes, payload: bytes, sig: Signature | None) -> bool:
    """True iff ``sig`` was made by the private half of ``public_key`` over ``payload``.

    Never raises: malformed keys or signatures simply fail.
    """
    if not isinstance(sig, Signature):
        return False
    try:
        if sig.algorithm_label != ALGORITHM or sig.signer_key_id != key_id_for(public_key):
            return False
        Ed25519PublicKey.from_public_bytes(bytes(public_key)).verify(bytes(sig.value), bytes(payload))
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


def sign_record(record, keypair: KeyPair, field_name: str = "signature"):
    """Return a copy of ``record`` with ``field_name`` set to a fresh signature."""
    sig = sign(keypair.private_key, signing_bytes(record, field_name))
    return dataclasses.replace(record, **{field_name: sig})


def verify_record(record, public_key: bytes, field_name: str = "signature") -> bool:
    return verify(public_key, signing_bytes(record, field_name), getattr(record, field_name))


def presentation_challenge(credential_id: str, audience: str, nonce: bytes) -> bytes:
    """Bytes the holder signs to bind a presentation to one verifier and nonce."""
    return canonical_encode(("presentation", credential_id, audience, bytes(nonce)))


def record_digest(record) -> str:
    return digest(canonical_encode(record))
