"""Byte-level encoding helpers.

Register values and message payloads are opaque bytes in the model, so
every protocol structure that lands in a register or a proof has an
explicit packed layout here. Lengths are little-endian u32, short
strings carry a u8 length. Packing is canonical: equal structures pack
to equal bytes, which is what lets proofs be compared byte-wise.
"""

from __future__ import annotations

import struct

from .errors import SimError


class DecodeError(SimError):
    """Bytes did not parse as the expected structure."""


def pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFF:
        raise SimError(f"identifier too long: {s!r}")
    return bytes([len(raw)]) + raw


def pack_bytes(b: bytes) -> bytes:
    return struct.pack("<I", len(b)) + b


def pack_u32(v: int) -> bytes:
    return struct.pack("<I", v)


def pack_u64(v: int) -> bytes:
    return struct.pack("<Q", v)


class Cursor:
    """Sequential reader over a bytes value; raises DecodeError on underrun."""

    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated input")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        n = self.u8()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError("bad identifier encoding") from exc

    def blob(self) -> bytes:
        n = self.u32()
        return self.take(n)

    def done(self) -> bool:
        return self.pos == len(self.data)

    def expect_end(self) -> None:
        if not self.done():
            raise DecodeError("trailing bytes")
