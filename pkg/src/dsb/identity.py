"""The two participant-authentication frameworks and the shared clearing house.

``IdentityProvider`` is the centralized model: accounts with salted secret
hashes, OIDC-style token issuance, and introspection by the issuing
authority only. ``VerifiableDataRegistry`` is the decentralized model: it
resolves DIDs to keys and tracks revocation, while the verifier checks
presentations locally with :func:`verify_presentation`.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import threading
from dataclasses import dataclass, field

from .encoding import canonical
from .errors import (
    DuplicateDid,
    DuplicateParticipant,
    HolderKeyMismatch,
    IssuerKeyMismatch,
    NotFound,
    UnknownHolder,
    UnknownParticipant,
    WrongSecret,
)
from .rules import Application, ValidationReport, check_rule_ids, run_rules
from .trust import (
    DidDocument,
    KeyPair,
    MembershipCredential,
    PasswordCredential,
    Presentation,
    SignedToken,
    did_for_key,
    presentation_challenge,
    sign,
    sign_record,
    verify,
    verify_record,
)

_HASH_ITERATIONS = 2000


@canonical
class TokenStatus(enum.Enum):
    ACTIVE = "Active"
    EXPIRED = "Expired"
    UNKNOWN = "Unknown"
    BAD_SIGNATURE = "BadSignature"


@canonical
class PresentationStatus(enum.Enum):
    VALID = "Valid"
    REVOKED = "Revoked"
    BAD_ISSUER_SIGNATURE = "BadIssuerSignature"
    BAD_HOLDER_PROOF = "BadHolderProof"
    AUDIENCE_MISMATCH = "AudienceMismatch"
    NONCE_MISMATCH = "NonceMismatch"


def _hash_secret(secret: str, salt: bytes) -> str:
    return hashlib.pbkdf2_hmac("sha256", secret.encode("utf-8"), salt, _HASH_ITERATIONS).hex()


class IdentityProvider:
    """Centralized participant registry and authorization server."""

    def __init__(self, space_id: str, issuer_keypair: KeyPair, token_ttl: int = 3600):
        if token_ttl <= 0:
            raise ValueError("token_ttl must be positive")
        self.space_id = space_id
        self.issuer_keypair = issuer_keypair
        self.token_ttl = token_ttl
        self.accounts: dict[str, tuple[str, str]] = {}
        self.issued_tokens: set[str] = set()
        self._counter = 0
        self._lock = threading.RLock()

    @property
    def public_key(self) -> bytes:
        return self.issuer_keypair.public_key

    def _salt(self, participant_id: str) -> bytes:
        return hashlib.sha256(f"salt/{self.space_id}/{participant_id}".encode()).digest()[:16]

    def register(self, participant_id: str, secret: str) -> PasswordCredential:
        with self._lock:
            if participant_id in self.accounts:
                raise DuplicateParticipant(participant_id)
            salt = self._salt(participant_id)
            self.accounts[participant_id] = (salt.hex(), _hash_secret(secret, salt))
        return PasswordCredential(participant_id, secret)

    def authenticate(self, participant_id: str, secret: str) -> None:
        account = self.accounts.get(participant_id)
        if account is None:
            raise UnknownParticipant(participant_id)
        salt_hex, stored = account
        if not hmac.compare_digest(stored, _hash_secret(secret, bytes.fromhex(salt_hex))):
            raise WrongSecret(participant_id)

    def issue_token(self, participant_id: str, secret: str, now: int, claims: dict | None = None) -> SignedToken:
        self.authenticate(participant_id, secret)
        with self._lock:
            self._counter += 1
            token = SignedToken(
                token_id=f"{self.space_id}:tok-{self._counter:06d}",
                subject=participant_id,
                issuer=self.space_id,
                issued_at=now,
                expires_at=now + self.token_ttl,
                claims=dict(claims or {"scope": "connector"}),
            )
            token = sign_record(token, self.issuer_keypair)
            self.issued_tokens.add(token.token_id)
        return token

    def introspect(self, token: SignedToken, now: int) -> TokenStatus:
        """Authority check: only tokens this IdP recorded can be Active."""
        if not isinstance(token, SignedToken):
            return TokenStatus.UNKNOWN
        if token.issuer != self.space_id or token.token_id not in self.issued_tokens:
            return TokenStatus.UNKNOWN
        if not verify_record(token, self.public_key):
            return TokenStatus.BAD_SIGNATURE
        if now >= token.expires_at:
            return TokenStatus.EXPIRED
        return TokenStatus.ACTIVE

    def to_records(self) -> list[dict]:
        with self._lock:
            rows = [
                {"type": "account", "participant_id": pid, "salt": salt, "secret_hash": h}
                for pid, (salt, h) in sorted(self.accounts.items())
            ]
            rows += [{"type": "token", "token_id": t} for t in sorted(self.issued_tokens)]
            rows.append({"type": "counter", "value": self._counter})
        return rows

    def load_records(self, rows) -> None:
        with self._lock:
            for row in rows:
                if row["type"] == "account":
                    self.accounts[row["participant_id"]] = (row["salt"], row["secret_hash"])
                elif row["type"] == "token":
                    self.issued_tokens.add(row["token_id"])
                elif row["type"] == "counter":
                    self._counter = max(self._counter, int(row["value"]))


class VerifiableDataRegistry:
    """DID document registry with the operating company's issuer DID."""

    def __init__(self, space_id: str, issuer_document: DidDocument):
        self.space_id = space_id
        self.documents: dict[str, DidDocument] = {issuer_document.did: issuer_document}
        self.issuer_did = issuer_document.did
        self.revoked: set[str] = set()
        self.issued: dict[str, MembershipCredential] = {}
        self._counter = 0
        self._lock = threading.RLock()

    def register(self, document: DidDocument) -> str:
        with self._lock:
            if document.did in self.documents:
                raise DuplicateDid(document.did)
            self.documents[document.did] = document
        return document.did

    def resolve(self, did: str) -> DidDocument:
        try:
            return self.documents[did]
        except KeyError:
            raise NotFound(did) from None

    def issue_membership_vc(self, issuer_keypair: KeyPair, holder_did: str, now: int) -> MembershipCredential:
        if holder_did not in self.documents:
            raise UnknownHolder(holder_did)
        if self.resolve(self.issuer_did).public_key != issuer_keypair.public_key:
            raise IssuerKeyMismatch(self.issuer_did)
        with self._lock:
            self._counter += 1
            credential = MembershipCredential(
                credential_id=f"{self.space_id}:vc-{self._counter:06d}",
                holder_did=holder_did,
                issuer_did=self.issuer_did,
                space_id=self.space_id,
                issued_at=now,
            )
            credential = sign_record(credential, issuer_keypair)
            self.issued[credential.credential_id] = credential
        return credential

    def revoke(self, credential_id: str) -> None:
        with self._lock:
            if credential_id not in self.issued:
                raise NotFound(credential_id)
            self.revoked.add(credential_id)

    def is_revoked(self, credential_id: str) -> bool:
        return credential_id in self.revoked

    def to_records(self) -> list[dict]:
        with self._lock:
            rows = [
                {
                    "type": "did",
                    "did": d.did,
                    "public_key": d.public_key.hex(),
                    "controller": d.controller,
                    "issuer": d.did == self.issuer_did,
                }
                for d in sorted(self.documents.values(), key=lambda d: d.did)
            ]
            rows += [
                {"type": "credential", "credential_id": c.credential_id, "holder_did": c.holder_did,
                 "issued_at": c.issued_at, "signature": c.signature.value.hex()}
                for c in sorted(self.issued.values(), key=lambda c: c.credential_id)
            ]
            rows += [{"type": "revocation", "credential_id": cid} for cid in sorted(self.revoked)]
        return rows

    def load_records(self, rows) -> None:
        from .trust import Signature, key_id_for

        with self._lock:
            issuer_key = self.documents[self.issuer_did].public_key
            for row in rows:
                if row["type"] == "did" and row["did"] not in self.documents:
                    self.documents[row["did"]] = DidDocument(
                        row["did"], bytes.fromhex(row["public_key"]), row["controller"]
                    )
                elif row["type"] == "credential":
                    self.issued[row["credential_id"]] = MembershipCredential(
                        credential_id=row["credential_id"],
                        holder_did=row["holder_did"],
                        issuer_did=self.issuer_did,
                        space_id=self.space_id,
                        issued_at=row["issued_at"],
                        signature=Signature(key_id_for(issuer_key), "ed25519", bytes.fromhex(row["signature"])),
                    )
                    self._counter = max(self._counter, int(row["credential_id"].rsplit("-", 1)[1]))
                elif row["type"] == "revocation":
                    self.revoked.add(row["credential_id"])


def present(credential: MembershipCredential, holder_keypair: KeyPair, audience: str, nonce: bytes) -> Presentation:
    """Holder-side: bind ``credential`` to one verifier and one nonce."""
    if did_for_key(holder_keypair.public_key) != credential.holder_did:
        raise HolderKeyMismatch(credential.holder_did)
    proof = sign(holder_keypair.private_key, presentation_challenge(credential.credential_id, audience, nonce))
    return Presentation(credential=credential, audience=audience, nonce=bytes(nonce), holder_proof=proof)


def verify_presentation(
    verifier_id: str,
    presentation: Presentation,
    vdr: VerifiableDataRegistry,
    nonce: bytes,
    now: int,
) -> PresentationStatus:
    """Verifier-side check that consults only ``vdr`` and the presentation.

    Checks run in order (issuer signature, holder proof, audience, nonce,
    revocation) and the first failure is returned. Credentials do not
    expire, so ``now`` only matters for interface symmetry with tokens.
    """
    if not isinstance(presentation, Presentation) or not isinstance(presentation.credential, MembershipCredential):
        return PresentationStatus.BAD_ISSUER_SIGNATURE
    credential = presentation.credential
    if credential.issuer_did != vdr.issuer_did or credential.space_id != vdr.space_id:
        return PresentationStatus.BAD_ISSUER_SIGNATURE
    issuer_doc = vdr.documents.get(credential.issuer_did)
    if issuer_doc is None or not verify_record(credential, issuer_doc.public_key):
        return PresentationStatus.BAD_ISSUER_SIGNATURE
    holder_doc = vdr.documents.get(credential.holder_did)
    if not isinstance(presentation.nonce, (bytes, bytearray)) or not isinstance(presentation.audience, str):
        return PresentationStatus.BAD_HOLDER_PROOF
    challenge = presentation_challenge(credential.credential_id, presentation.audience, presentation.nonce)
    if holder_doc is None or not verify(holder_doc.public_key, challenge, presentation.holder_proof):
        return PresentationStatus.BAD_HOLDER_PROOF
    if presentation.audience != verifier_id:
        return PresentationStatus.AUDIENCE_MISMATCH
    if bytes(presentation.nonce) != bytes(nonce):
        return PresentationStatus.NONCE_MISMATCH
    if credential.revoked or vdr.is_revoked(credential.credential_id):
        return PresentationStatus.REVOKED
    return PresentationStatus.VALID


@dataclass
class ClearingHouse:
    """Shared, space-independent organisation validator."""

    id: str
    validation_rules: tuple[str, ...]
    recognized_by: set[str] = field(default_factory=set)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validation_rules = tuple(self.validation_rules)
        if not self.validation_rules:
            raise ValueError("clearing house needs at least one rule")
        check_rule_ids(self.validation_rules, f"clearing house {self.id}")

    def validate(self, application: Application) -> ValidationReport:
        return run_rules(self.validation_rules, application, self.params)

