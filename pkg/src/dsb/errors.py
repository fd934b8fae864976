"""Exception hierarchy.

Every error carries a stable ``code`` (the class name) and an optional
``detail`` string so scenario expectations and JSON reports can match on
them without parsing messages.
"""

from __future__ import annotations


class DsbError(Exception):
    """Base class for all simulator errors."""

    def __init__(self, detail: str | None = None, message: str | None = None):
        self.detail = detail
        super().__init__(message or (f"{self.code}({detail})" if detail else self.code))

    @property
    def code(self) -> str:
        return type(self).__name__


# trust-core
class EmptySeed(DsbError): ...


class UnsupportedType(DsbError): ...


class DecodeError(DsbError): ...


# identity
class DuplicateParticipant(DsbError): ...


class UnknownParticipant(DsbError): ...


class WrongSecret(DsbError): ...


class DuplicateDid(DsbError): ...


class NotFound(DsbError): ...


class UnknownHolder(DsbError): ...


class IssuerKeyMismatch(DsbError): ...


class HolderKeyMismatch(DsbError): ...


class MissingField(DsbError): ...


# registry
class ValidationFailed(DsbError):
    def __init__(self, rule_ids, participant=None):
        self.rule_ids = tuple(rule_ids)
        self.participant = participant
        super().__init__(",".join(self.rule_ids))


class DuplicateApplication(DsbError): ...


class OwnerNotActive(DsbError): ...


class CertificateIssuanceFailed(DsbError): ...


class BadDomain(DsbError): ...


class UnknownDevice(DsbError): ...


# semantics
class DuplicateModel(DsbError): ...


class UnknownModel(DsbError): ...


class SameSpacePair(DsbError): ...


# exchange
class KeyMismatch(DsbError): ...


class NegotiationUnsupported(DsbError): ...


class UnknownDataset(DsbError): ...


class BrokerUnavailable(DsbError): ...


class ContractNotConcluded(DsbError): ...


class InvalidTransition(DsbError): ...


class OrderViolation(DsbError): ...


class EndpointVerificationFailed(DsbError): ...


class EndpointNotRegistered(DsbError): ...


class ParticipantVerificationFailed(DsbError): ...


class PackageVerificationFailed(DsbError): ...


class UnknownContract(DsbError): ...


class CapabilityUnavailable(DsbError): ...


# provenance
class BadSignature(DsbError): ...


class UnknownActor(DsbError): ...


class ProvenanceVerificationFailed(DsbError): ...


# harness
class ParseError(DsbError):
    def __init__(self, line: int, message: str | None = None):
        self.line = line
        super().__init__(str(line), message or f"ParseError(line {line})")


class SemanticError(DsbError): ...


class SetupError(DsbError): ...


class IncompleteProbes(DsbError): ...


class UnknownConnector(DsbError): ...
