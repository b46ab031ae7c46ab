"""Unforgeable-signature oracle.

Signatures are keyed MACs computed with a key derived from the run
seed. The key lives inside the simulation; protocol code and adversary
scripts only reach `sign` through their runtime, which always signs as
the calling process. A script can therefore replay or transplant signed
values it has seen, but cannot mint a tag that verifies for a payload
the claimed signer never signed.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

from .wire import Cursor, DecodeError, pack_bytes, pack_str

TAG_LEN = 16


@dataclass(frozen=True)
class SignedValue:
    signer: str
    payload: bytes
    tag: bytes

    def pack(self) -> bytes:
        return pack_str(self.signer) + pack_bytes(self.payload) + self.tag

    @classmethod
    def unpack(cls, data: bytes) -> "SignedValue":
        cur = Cursor(data)
        sv = cls.read_from(cur)
        cur.expect_end()
        return sv

    @classmethod
    def read_from(cls, cur: Cursor) -> "SignedValue":
        signer = cur.string()
        payload = cur.blob()
        tag = cur.take(TAG_LEN)
        return cls(signer, payload, tag)


class SignatureOracle:
    def __init__(self, seed: int):
        self._key = hashlib.sha256(b"mmsim-sig-" + str(seed).encode()).digest()

    def _tag(self, signer: str, payload: bytes) -> bytes:
        msg = pack_str(signer) + payload
        return hmac.new(self._key, msg, hashlib.sha256).digest()[:TAG_LEN]

    def sign(self, signer: str, payload: bytes) -> SignedValue:
        return SignedValue(signer, payload, self._tag(signer, payload))

    def valid(self, sv: SignedValue) -> bool:
        if not isinstance(sv, SignedValue):
            return False
        return hmac.compare_digest(sv.tag, self._tag(sv.signer, sv.payload))

    def valid_from(self, signer: str, sv: SignedValue) -> bool:
        return sv.signer == signer and self.valid(sv)

    def try_unpack(self, data: bytes) -> SignedValue | None:
        """Parse and verify in one step; None if either fails."""
        try:
            sv = SignedValue.unpack(data)
        except DecodeError:
            return None
        return sv if self.valid(sv) else None
