"""Input classification for the backup path.

When a fast-path instance aborts, each process carries its abort value
into the backup tagged by the strength of its evidence:

  T -- the value is backed by a unanimity proof: one copy per process,
       every copy signed by a distinct process, all copies of the same
       leader-signed value.
  M -- the value carries a valid leader signature but no unanimity proof.
  B -- everything else, including malformed evidence.

Tags are never trusted from the wire: receivers recompute them from the
evidence. Priority is T > M > B; ties break lexicographically on
(value bytes, origin id), lower sorting first.
"""

from __future__ import annotations

from typing import Optional

from .signing import SignatureOracle, SignedValue
from .wire import Cursor, DecodeError

TAG_B = 0
TAG_M = 1
TAG_T = 2
TAG_NAMES = {TAG_B: "B", TAG_M: "M", TAG_T: "T"}

EVID_NONE = 0
EVID_LEADER_SIGNED = 1
EVID_UNANIMITY = 2


def pack_evidence(kind: int, body: bytes = b"") -> bytes:
    return bytes([kind]) + body


def split_evidence(evidence: bytes):
    if not evidence:
        return EVID_NONE, b""
    return evidence[0], evidence[1:]


def parse_unanimity(oracle: SignatureOracle, processes, leader: str,
                    value: bytes, body: bytes) -> bool:
    """True iff body is a correct unanimity proof for `value`."""
    copies = []
    try:
        cur = Cursor(body)
        count = cur.u8()
        for _ in range(count):
            copies.append(SignedValue.read_from(cur))
        cur.expect_end()
    except DecodeError:
        return False
    if {c.signer for c in copies} != set(processes):
        return False
    inner_payloads = {c.payload for c in copies}
    if len(inner_payloads) != 1:
        return False
    if not all(oracle.valid(c) for c in copies):
        return False
    inner = oracle.try_unpack(inner_payloads.pop())
    return inner is not None and inner.signer == leader and inner.payload == value


def leader_signed(oracle: SignatureOracle, leader: str, value: bytes,
                  body: bytes) -> bool:
    sv = oracle.try_unpack(body)
    return sv is not None and sv.signer == leader and sv.payload == value


def classify(oracle: SignatureOracle, processes, leader: str,
             value: bytes, evidence: bytes) -> int:
    kind, body = split_evidence(evidence)
    if kind == EVID_UNANIMITY and parse_unanimity(oracle, processes, leader, value, body):
        return TAG_T
    if kind == EVID_LEADER_SIGNED and leader_signed(oracle, leader, value, body):
        return TAG_M
    return TAG_B


class EvidencePriority:
    """Default scheme: rank by recomputed evidence tag."""

    def __init__(self, oracle: SignatureOracle, processes, leader: str):
        self.oracle = oracle
        self.processes = list(processes)
        self.leader = leader

    def tag(self, value: bytes, evidence: bytes) -> int:
        return classify(self.oracle, self.processes, self.leader, value, evidence)

    def key(self, origin: str, value: bytes, evidence: bytes):
        """Sort key; min() is the highest-priority input."""
        return (-self.tag(value, evidence), value, origin)


class LabelPriority:
    """Test scheme: explicit numeric rank per value (higher rank wins)."""

    def __init__(self, ranks: dict):
        self.ranks = dict(ranks)

    def tag(self, value: bytes, evidence: bytes) -> int:
        return self.ranks.get(value, 0)

    def key(self, origin: str, value: bytes, evidence: bytes):
        return (-self.tag(value, evidence), value, origin)


def best_input(scheme, inputs) -> Optional[tuple]:
    """inputs: iterable of (origin, value, evidence); returns the best one."""
    ranked = sorted(inputs, key=lambda e: scheme.key(*e))
    return ranked[0] if ranked else None


def eligible_values(scheme, inputs, f: int) -> set:
    """Brute-force oracle: the values holding the top f+1 priority ranks."""
    ranked = sorted(inputs, key=lambda e: scheme.key(*e))
    return {value for (_, value, _) in ranked[: f + 1]}
