"""Length-prefixed, field-ordered binary encoding for domain values.

The byte layout is documented in ``docs/encoding.md``. Every value is a
one-byte tag followed by a self-delimiting body, which makes the encoding
injective per type. Records emit their fields in dataclass declaration
order; maps emit entries sorted by encoded key, so insertion order never
leaks into signatures.
"""

from __future__ import annotations

import dataclasses
import enum
import struct
from typing import Any, Iterable

from .errors import DecodeError, UnsupportedType

_U32 = struct.Struct(">I")
_F64 = struct.Struct(">d")

_RECORDS: dict[str, type] = {}
_ENUMS: dict[str, type[enum.Enum]] = {}


def canonical(cls):
    """Class decorator registering a dataclass or Enum for encoding."""
    if isinstance(cls, type) and issubclass(cls, enum.Enum):
        _ENUMS[cls.__name__] = cls
    elif dataclasses.is_dataclass(cls):
        _RECORDS[cls.__name__] = cls
    else:
        raise TypeError(f"{cls!r} is neither a dataclass nor an Enum")
    return cls


def registered_types() -> dict[str, type]:
    return dict(_RECORDS)


def _blob(tag: bytes, body: bytes) -> bytes:
    return tag + _U32.pack(len(body)) + body


def _enc(value: Any, out: list[bytes], exclude: Iterable[str] = ()) -> None:
    if value is None:
        out.append(b"N")
    elif isinstance(value, bool):
        out.append(b"B\x01" if value else b"B\x00")
    elif isinstance(value, enum.Enum):
        name = type(value).__name__
        if name not in _ENUMS:
            raise UnsupportedType(name)
        out.append(b"E")
        _enc(name, out)
        _enc(value.value, out)
    elif isinstance(value, int):
        out.append(_blob(b"I", str(value).encode("ascii")))
    elif isinstance(value, float):
        out.append(b"D" + _F64.pack(value))
    elif isinstance(value, str):
        out.append(_blob(b"S", value.encode("utf-8")))
    elif isinstance(value, (bytes, bytearray)):
        out.append(_blob(b"Y", bytes(value)))
    elif isinstance(value, (list, tuple)):
        out.append(b"L" + _U32.pack(len(value)))
        for item in value:
            _enc(item, out)
    elif isinstance(value, dict):
        entries = sorted((canonical_encode(k), canonical_encode(v)) for k, v in value.items())
        out.append(b"M" + _U32.pack(len(entries)))
        for k, v in entries:
            out.append(k)
            out.append(v)
    elif dataclasses.is_dataclass(value) and not isinstance(value, type):
        name = type(value).__name__
        if _RECORDS.get(name) is not type(value):
            raise UnsupportedType(name)
        fields = [f for f in dataclasses.fields(value) if f.name not in exclude]
        out.append(b"R")
        _enc(name, out)
        out.append(_U32.pack(len(fields)))
        for f in fields:
            _enc(f.name, out)
            _enc(getattr(value, f.name), out)
    else:
        raise UnsupportedType(type(value).__name__)


def canonical_encode(value: Any, exclude: Iterable[str] = ()) -> bytes:
    """Encode ``value``; ``exclude`` drops top-level record fields."""
    out: list[bytes] = []
    _enc(value, out, tuple(exclude))
    return b"".join(out)


def signing_bytes(record: Any, signature_field: str = "signature") -> bytes:
    """Bytes a signer commits to: the record minus its own signature."""
    return canonical_encode(record, exclude=(signature_field,))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated input")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def value(self) -> Any:
        tag = self.take(1)
        if tag == b"N":
            return None
        if tag == b"B":
            flag = self.take(1)
            if flag not in (b"\x00", b"\x01"):
                raise DecodeError("bad boolean")
            return flag == b"\x01"
        if tag == b"I":
            return int(self.take(self.u32()).decode("ascii"))
        if tag == b"D":
            return _F64.unpack(self.take(8))[0]
        if tag == b"S":
            return self.take(self.u32()).decode("utf-8")
        if tag == b"Y":
            return self.take(self.u32())
        if tag == b"L":
            return tuple(self.value() for _ in range(self.u32()))
        if tag == b"M":
            n = self.u32()
            return {self.value(): self.value() for _ in range(n)}
        if tag == b"E":
            name, raw = self.value(), self.value()
            if name not in _ENUMS:
                raise DecodeError(f"unknown enum {name}")
            return _ENUMS[name](raw)
        if tag == b"R":
            name = self.value()
            cls = _RECORDS.get(name)
            if cls is None:
                raise DecodeError(f"unknown record {name}")
            kwargs = {}
            for _ in range(self.u32()):
                key = self.value()
                kwargs[key] = self.value()
            return cls(**kwargs)
        raise DecodeError(f"unknown tag {tag!r}")


def canonical_decode(data: bytes) -> Any:
    reader = _Reader(data)
    value = reader.value()
    if reader.pos != len(data):
        raise DecodeError("trailing bytes")
    return value
