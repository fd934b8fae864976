"""Centralized provenance management: ingest signed logs, rebuild and verify chains."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

from .errors import BadSignature, UnknownActor
from .exchange import LogKind, TransferLog, log_hash
from .serial import from_jsonable, to_jsonable
from .trust import verify_record
from .verdict import OK, Verdict

KeyResolver = Callable[[str], bytes]


@dataclass(frozen=True)
class Hop:
    send: TransferLog | None
    receive: TransferLog | None

    @property
    def sender(self) -> str | None:
        return self.send.actor if self.send else None

    @property
    def receiver(self) -> str | None:
        return self.receive.actor if self.receive else None


@dataclass(frozen=True)
class ProvenanceChain:
    dataset_id: str
    hops: tuple[Hop, ...] = ()

    @property
    def gaps(self) -> tuple[int, ...]:
        return tuple(i for i, h in enumerate(self.hops) if h.send is None or h.receive is None)

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "hops": [{"send": to_jsonable(h.send), "receive": to_jsonable(h.receive)} for h in self.hops],
            "gaps": list(self.gaps),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ProvenanceChain":
        def log(raw):
            return None if raw is None else from_jsonable(TransferLog, raw)

        return cls(data["dataset_id"], tuple(Hop(log(h.get("send")), log(h.get("receive"))) for h in data["hops"]))


def _sort_key(log: TransferLog):
    return (log.timestamp, log.log_id)


class ProvenanceService:
    """Stores send/receive logs for anyone whose signatures check out."""

    def __init__(self, key_resolver: KeyResolver, service_id: str = "pms"):
        self.service_id = service_id
        self.key_resolver = key_resolver
        self.logs: dict[str, TransferLog] = {}
        self._lock = threading.RLock()

    def ingest(self, log: TransferLog) -> str:
        try:
            key = self.key_resolver(log.actor)
        except UnknownActor:
            raise BadSignature(log.log_id) from None
        if not verify_record(log, key):
            raise BadSignature(log.log_id)
        with self._lock:
            self.logs.setdefault(log.log_id, log)
        return log.log_id

    def query(self, dataset_id: str | None = None, actor: str | None = None) -> list[TransferLog]:
        with self._lock:
            logs = list(self.logs.values())
        return sorted(
            (l for l in logs if (dataset_id is None or l.dataset_id == dataset_id) and (actor is None or l.actor == actor)),
            key=_sort_key,
        )

    def chain(self, dataset_id: str) -> ProvenanceChain:
        """Pair logs per contract, latest claim winning; order hops by time."""
        per_contract: dict[str, dict[LogKind, TransferLog]] = {}
        for log in self.query(dataset_id=dataset_id):
            if log.kind is LogKind.PAYMENT:
                continue
            per_contract.setdefault(log.contract_id, {})[log.kind] = log
        hops = [Hop(pair.get(LogKind.SEND), pair.get(LogKind.RECEIVE)) for pair in per_contract.values()]
        hops.sort(key=lambda h: _sort_key(h.send or h.receive))
        return ProvenanceChain(dataset_id, tuple(hops))


def verify_chain(chain: ProvenanceChain, key_resolver: KeyResolver) -> Verdict:
    """Walk hops in order; the first failure is reported.

    Raises :class:`UnknownActor` if a log names a participant the
    resolver cannot map to a key.
    """
    previous: Hop | None = None
    for i, hop in enumerate(chain.hops):
        if hop.send is None or hop.receive is None:
            return Verdict("BrokenLink", str(i))
        send, receive = hop.send, hop.receive
        for log in (send, receive):
            if not verify_record(log, key_resolver(log.actor)):
                return Verdict("BadSignature", log.log_id)
        if send.kind is not LogKind.SEND or receive.kind is not LogKind.RECEIVE:
            return Verdict("BrokenLink", str(i))
        if not (send.contract_id == receive.contract_id and send.dataset_id == receive.dataset_id == chain.dataset_id):
            return Verdict("BrokenLink", str(i))
        if receive.prev_hash != log_hash(send) or send.prev_hash != "" or receive.timestamp < send.timestamp:
            return Verdict("BrokenLink", str(i))
        if receive.actor != send.counterparty or receive.counterparty != send.actor:
            return Verdict("ActorMismatch", str(i))
        if previous is not None:
            if send.actor != previous.receive.actor:
                return Verdict("ActorMismatch", str(i))
            if send.timestamp < previous.receive.timestamp:
                return Verdict("BrokenLink", str(i))
        previous = hop
    return OK
