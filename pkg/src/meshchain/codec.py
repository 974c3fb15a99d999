"""Canonical binary serialization used for hashing and ledger persistence.

Layout rules:

* integers are 8-byte big-endian (signed),
* floats are 8-byte big-endian IEEE-754 doubles,
* byte strings (and UTF-8 text) carry a 4-byte big-endian length prefix,
* lists carry a 4-byte big-endian count prefix,
* booleans are a single byte, 0 or 1,
* record fields are written in declared order with no tags.

The decoder is strict: any trailing data, out-of-range length or non-0/1
boolean is a :class:`DecodeError`.
"""

from __future__ import annotations

import struct

_I64 = struct.Struct(">q")
_U32 = struct.Struct(">I")
_F64 = struct.Struct(">d")


class DecodeError(ValueError):
    pass


class Encoder:
    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def int(self, value: int) -> "Encoder":
        self._parts.append(_I64.pack(value))
        return self

    def float(self, value: float) -> "Encoder":
        self._parts.append(_F64.pack(value))
        return self

    def bytes(self, value: bytes) -> "Encoder":
        self._parts.append(_U32.pack(len(value)))
        self._parts.append(bytes(value))
        return self

    def str(self, value: str) -> "Encoder":
        return self.bytes(value.encode("utf-8"))

    def bool(self, value: bool) -> "Encoder":
        self._parts.append(b"\x01" if value else b"\x00")
        return self

    def count(self, n: int) -> "Encoder":
        self._parts.append(_U32.pack(n))
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Decoder:
    def __init__(self, data: bytes) -> None:
        self._data = memoryview(data)
        self._pos = 0

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise DecodeError(f"truncated input at offset {self._pos}")
        chunk = self._data[self._pos:end].tobytes()
        self._pos = end
        return chunk

    def int(self) -> int:
        return _I64.unpack(self._take(8))[0]

    def float(self) -> float:
        return _F64.unpack(self._take(8))[0]

    def bytes(self) -> bytes:
        n = _U32.unpack(self._take(4))[0]
        return self._take(n)

    def str(self) -> str:
        raw = self.bytes()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"invalid UTF-8 near offset {self._pos}") from exc

    def bool(self) -> bool:
        b = self._take(1)
        if b == b"\x00":
            return False
        if b == b"\x01":
            return True
        raise DecodeError(f"invalid boolean byte {b!r} at offset {self._pos - 1}")

    def count(self) -> int:
        n = _U32.unpack(self._take(4))[0]
        # every list element occupies at least one byte
        if n > len(self._data) - self._pos:
            raise DecodeError(f"implausible list length {n} at offset {self._pos - 4}")
        return n

    def finish(self) -> None:
        if self._pos != len(self._data):
            raise DecodeError(f"{len(self._data) - self._pos} trailing bytes")
