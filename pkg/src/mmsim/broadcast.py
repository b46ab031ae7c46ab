"""Reliable broadcast over replicated single-writer registers.

Each process owns three slot families per (sender, key): a value slot
holding its signed copy of the sender's (key, message) pair, an L1 slot
holding a first-level proof (a majority of signed copies of the same
pair, compiled and signed by the slot owner), and an L2 slot holding a
second-level proof (a majority of valid L1 proofs for the same pair).

An observer advances per sender through stages: wait for the sender's
signed pair, countersign and replicate it, compile an L1 proof from a
majority of matching copies, compile an L2 proof from a majority of
matching L1 proofs. Every pass begins by scanning all L2 slots for that
(sender, key); the first valid proof found is copied into the
observer's own slot and the message is delivered. Delivery is therefore
justified by a transferable proof, which is what makes two conflicting
deliveries impossible: two valid L2 proofs for the same key would need
two majorities of L1 proofs, hence two majorities of signed copies, and
some correct process would have had to countersign both pairs, which it
never does. An observer that sees two different signed copies parks
that sender's stream at that key and never compiles a proof for it.

Slots are written at most once by correct processes, so an observer may
cache any slot content it has accepted; a Byzantine owner rewriting its
slot only makes observers disagree about its content, which the proof
checks already tolerate.
"""

from __future__ import annotations

from typing import Callable, Optional

from .replicate import majority, rep_read, rep_write
from .signing import SignatureOracle, SignedValue
from .wire import Cursor, DecodeError, pack_bytes, pack_str, pack_u32


def value_slot(owner: str, sender: str, k: int) -> str:
    return f"{owner}/bc/v/{sender}/{k}"


def l1_slot(owner: str, sender: str, k: int) -> str:
    return f"{owner}/bc/l1/{sender}/{k}"


def l2_slot(owner: str, sender: str, k: int) -> str:
    return f"{owner}/bc/l2/{sender}/{k}"


def pack_pair(k: int, msg: bytes) -> bytes:
    return pack_u32(k) + pack_bytes(msg)


def parse_pair(payload: bytes):
    try:
        cur = Cursor(payload)
        k = cur.u32()
        msg = cur.blob()
        cur.expect_end()
        return k, msg
    except DecodeError:
        return None


def _pack_proof(sender: str, k: int, parts: list) -> bytes:
    out = [pack_str(sender), pack_u32(k), bytes([len(parts)])]
    out.extend(sv.pack() for sv in parts)
    return b"".join(out)


def _parse_proof(payload: bytes):
    try:
        cur = Cursor(payload)
        sender = cur.string()
        k = cur.u32()
        count = cur.u8()
        parts = [SignedValue.read_from(cur) for _ in range(count)]
        cur.expect_end()
        return sender, k, parts
    except DecodeError:
        return None


def check_l1(oracle: SignatureOracle, n: int, sender: str, k: int,
             proof: SignedValue) -> Optional[bytes]:
    """Returns the message a valid L1 proof for (sender, k) supports, else None."""
    if not oracle.valid(proof):
        return None
    parsed = _parse_proof(proof.payload)
    if parsed is None:
        return None
    psender, pk, copies = parsed
    if psender != sender or pk != k:
        return None
    signers = {c.signer for c in copies}
    if len(signers) != len(copies) or len(copies) < majority(n):
        return None
    pairs = {c.payload for c in copies}
    if len(pairs) != 1:
        return None
    pair = parse_pair(pairs.pop())
    if pair is None or pair[0] != k:
        return None
    if not all(oracle.valid(c) for c in copies):
        return None
    return pair[1]


def check_l2(oracle: SignatureOracle, n: int, sender: str, k: int,
             proof: SignedValue) -> Optional[bytes]:
    """Returns the message a valid L2 proof for (sender, k) supports, else None."""
    if not oracle.valid(proof):
        return None
    parsed = _parse_proof(proof.payload)
    if parsed is None:
        return None
    psender, pk, l1s = parsed
    if psender != sender or pk != k:
        return None
    compilers = {p.signer for p in l1s}
    if len(compilers) != len(l1s) or len(l1s) < majority(n):
        return None
    msgs = set()
    for p in l1s:
        msg = check_l1(oracle, n, sender, k, p)
        if msg is None:
            return None
        msgs.add(msg)
    if len(msgs) != 1:
        return None
    return msgs.pop()


class BroadcastNode:
    """Per-process endpoint: sender side plus one observer lane per peer."""

    def __init__(self, rt, on_deliver: Optional[Callable] = None, poll: int = 4):
        self.rt = rt
        self.procs = rt.processes
        self.n = len(self.procs)
        self.maj = majority(self.n)
        self.poll = poll
        self.on_deliver = on_deliver
        self.last = {q: 1 for q in self.procs}
        self.stage = {q: "sender" for q in self.procs}
        self.pair = {q: None for q in self.procs}      # accepted pair payload per sender
        self.copies = {q: {} for q in self.procs}      # signer -> SignedValue for current key
        self.l1s = {q: {} for q in self.procs}         # compiler -> SignedValue for current key
        self.parked = set()                            # (sender, k) with conflicting copies
        self.delivered = {q: {} for q in self.procs}   # k -> msg
        self.sent = {}                                 # own k -> pair payload
        self.own_l1 = {}                               # (sender, k) -> SignedValue
        self.own_l2 = {}                               # (sender, k) -> SignedValue
        self.next_key = 1
        self._cache = {}                               # register -> accepted SignedValue

    # -- sender side -------------------------------------------------------

    def broadcast(self, msg: bytes):
        k = self.next_key
        self.next_key += 1
        pair = pack_pair(k, msg)
        self.sent[k] = pair
        sv = self.rt.sign(pair)
        self.rt.note("bc-broadcast", k=k, msg=msg)
        yield from rep_write(self.rt, value_slot(self.rt.pid, self.rt.pid, k), sv.pack())
        return k

    # -- observer side -----------------------------------------------------

    def observer(self, q: str):
        """Infinite lane: one delivery attempt per pass, paced when idle."""
        while True:
            progress = yield from self.attempt(q)
            if not progress:
                yield self.rt.sleep(self.poll)

    def attempt(self, q: str):
        """One try_deliver pass for sender q at its current key."""
        rt = self.rt
        k = self.last[q]
        msg = yield from self._scan_l2(q, k, copy=True)
        if msg is not None:
            self._deliver(q, k, msg)
            return True
        if (q, k) in self.parked:
            return False
        stage = self.stage[q]
        if stage == "sender":
            accepted = yield from self._await_sender(q, k)
            if not accepted:
                return False
            self.stage[q] = "l1"
            return True
        if stage == "l1":
            return (yield from self._compile_l1(q, k))
        if stage == "l2":
            return (yield from self._compile_l2(q, k))
        return False  # own proof written; next pass scans and delivers

    def _await_sender(self, q: str, k: int):
        rt = self.rt
        if q == rt.pid:
            pair = self.sent.get(k)
            if pair is None:
                return False
            self.pair[q] = pair
            self.copies[q] = {rt.pid: rt.sign(pair)}
            return True
        raw = yield from rep_read(rt, value_slot(q, q, k))
        if raw is None:
            return False
        sv = rt.sim.signer.try_unpack(raw)
        if sv is None or sv.signer != q:
            return False
        parsed = parse_pair(sv.payload)
        if parsed is None or parsed[0] != k:
            return False
        self.pair[q] = sv.payload
        copy = rt.sign(sv.payload)
        self.copies[q] = {q: sv, rt.pid: copy}
        yield from rep_write(rt, value_slot(rt.pid, q, k), copy.pack())
        return True

    def _read_signed(self, register: str, expect_signer: str) -> Optional[SignedValue]:
        cached = self._cache.get(register)
        if cached is not None:
            return cached
        raw = yield from rep_read(self.rt, register)
        if raw is None:
            return None
        sv = self.rt.sim.signer.try_unpack(raw)
        if sv is None or sv.signer != expect_signer:
            return None
        self._cache[register] = sv
        return sv

    def _compile_l1(self, q: str, k: int):
        rt = self.rt
        collected = self.copies[q]
        for i in self.procs:
            if i in collected:
                continue
            sv = yield from self._read_signed(value_slot(i, q, k), i)
            if sv is None:
                continue
            parsed = parse_pair(sv.payload)
            if parsed is None or parsed[0] != k:
                continue
            collected[i] = sv
        payloads = {sv.payload for sv in collected.values()}
        if len(payloads) > 1:
            self.parked.add((q, k))
            rt.note("bc-conflict", sender=q, k=k)
            return False
        if len(collected) < self.maj:
            return False
        proof = rt.sign(_pack_proof(q, k, [collected[i] for i in self.procs if i in collected]))
        self.own_l1[(q, k)] = proof
        self.l1s[q] = {rt.pid: proof}
        yield from rep_write(rt, l1_slot(rt.pid, q, k), proof.pack())
        self.stage[q] = "l2"
        return True

    def _compile_l2(self, q: str, k: int):
        rt = self.rt
        collected = self.l1s[q]
        for i in self.procs:
            if i in collected:
                continue
            sv = yield from self._read_signed(l1_slot(i, q, k), i)
            if sv is None:
                continue
            msg = check_l1(rt.sim.signer, self.n, q, k, sv)
            if msg is None or pack_pair(k, msg) != self.pair[q]:
                continue
            collected[i] = sv
        if len(collected) < self.maj:
            return False
        proof = rt.sign(_pack_proof(q, k, [collected[i] for i in self.procs if i in collected]))
        self.own_l2[(q, k)] = proof
        yield from rep_write(rt, l2_slot(rt.pid, q, k), proof.pack())
        self.stage[q] = "done"
        return True

    def _scan_l2(self, q: str, k: int, copy: bool):
        rt = self.rt
        own = self.own_l2.get((q, k))
        if own is not None:
            return check_l2(rt.sim.signer, self.n, q, k, own)
        for i in self.procs:
            if i == rt.pid:
                continue  # own slot is only ever written by us
            sv = yield from self._read_signed(l2_slot(i, q, k), i)
            if sv is None:
                continue
            msg = check_l2(rt.sim.signer, self.n, q, k, sv)
            if msg is None:
                continue
            if copy:
                self.own_l2[(q, k)] = sv
                yield from rep_write(rt, l2_slot(rt.pid, q, k), sv.pack())
            return msg
        return None

    def validate(self, q: str, k: int, msg: bytes):
        """Non-blocking check: does some valid L2 proof support (q, k, msg)?"""
        if k < self.last[q]:
            return self.delivered[q].get(k) == msg
        found = yield from self._scan_l2(q, k, copy=False)
        return found == msg

    def _deliver(self, q: str, k: int, msg: bytes):
        self.delivered[q][k] = msg
        self.last[q] = k + 1
        self.stage[q] = "sender"
        self.pair[q] = None
        self.copies[q] = {}
        self.l1s[q] = {}
        self.rt.note("bc-deliver", sender=q, k=k, msg=msg)
        if self.on_deliver is not None:
            self.on_deliver(q, k, msg)

    def spawn_observers(self):
        for q in self.procs:
            self.rt.spawn(self.observer(q), name=f"bc-{q}")
