"""Trusted message passing and the consensus that runs on it.

Every trusted send is broadcast to everyone over the reliable-broadcast
layer together with the sender's full communication history: one record
per prior send or t-receive, each carrying a digest of the referenced
message. Receivers replay that history against their own copy of every
stream. A sender whose history is not an extension of its previous one,
cites a message that never existed (or fails its own checks), or takes a
protocol step its state does not justify is silenced forever. Surviving
messages are t-received in stream order.

On top of this runs a Paxos whose every transition is conformance-checked
by every receiver, so faulty processes cannot lie about their state —
they can only stay silent. ECHO messages carry each process's input into
the instance; in preferential mode proposers must adopt the best-priority
value among n-f echoes rather than their own.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional

from .broadcast import BroadcastNode
from .replicate import majority
from .sim import ProcessRuntime
from .wire import Cursor, DecodeError, pack_bytes, pack_str, pack_u32, pack_u64

DIGEST_LEN = 16

SENT = 0
RECEIVED = 1

# consensus body kinds
ECHO = 1
PREPARE = 2
PROMISE = 3
ACCEPT = 4
ACCEPTED = 5

KIND_NAMES = {ECHO: "echo", PREPARE: "prepare", PROMISE: "promise",
              ACCEPT: "accept", ACCEPTED: "accepted"}


def digest(payload: bytes) -> bytes:
    return hashlib.sha256(payload).digest()[:DIGEST_LEN]


@dataclass(frozen=True)
class HistoryRecord:
    direction: int          # SENT or RECEIVED
    peer: str               # addressee for sends, stream owner for receives
    key: int                # sequence number in the peer's (or own) stream
    body_digest: bytes

    def pack(self) -> bytes:
        return (bytes([self.direction]) + pack_str(self.peer)
                + pack_u32(self.key) + self.body_digest)

    @classmethod
    def read_from(cls, cur: Cursor) -> "HistoryRecord":
        direction = cur.u8()
        if direction not in (SENT, RECEIVED):
            raise DecodeError("bad direction")
        peer = cur.string()
        key = cur.u32()
        return cls(direction, peer, key, cur.take(DIGEST_LEN))


@dataclass(frozen=True)
class TrustedMessage:
    to: str                 # "*" for everyone
    body: bytes
    history: tuple

    def pack(self) -> bytes:
        out = [pack_str(self.to), pack_bytes(self.body), pack_u32(len(self.history))]
        out += [r.pack() for r in self.history]
        return b"".join(out)

    @classmethod
    def unpack(cls, raw: bytes) -> "TrustedMessage":
        cur = Cursor(raw)
        to = cur.string()
        body = cur.blob()
        count = cur.u32()
        history = tuple(HistoryRecord.read_from(cur) for _ in range(count))
        cur.expect_end()
        return cls(to, body, history)


# ---------------------------------------------------------------------------
# consensus bodies

def ballot(round_no: int, pid_index: int) -> int:
    return (round_no << 16) | pid_index


def ballot_round(b: int) -> int:
    return b >> 16


def ballot_owner(b: int, processes: List[str]) -> Optional[str]:
    idx = b & 0xFFFF
    if 1 <= idx <= len(processes):
        return processes[idx - 1]
    return None


@dataclass(frozen=True)
class Body:
    kind: int
    ballot: int = 0
    value: bytes = b""
    evidence: bytes = b""
    acc_ballot: int = 0
    acc_value: bytes = b""

    def pack(self) -> bytes:
        if self.kind == ECHO:
            return bytes([ECHO]) + pack_bytes(self.value) + pack_bytes(self.evidence)
        if self.kind == PREPARE:
            return bytes([PREPARE]) + pack_u64(self.ballot)
        if self.kind == PROMISE:
            return (bytes([PROMISE]) + pack_u64(self.ballot)
                    + pack_u64(self.acc_ballot) + pack_bytes(self.acc_value))
        if self.kind in (ACCEPT, ACCEPTED):
            return bytes([self.kind]) + pack_u64(self.ballot) + pack_bytes(self.value)
        raise ValueError(f"unknown kind {self.kind}")

    @classmethod
    def unpack(cls, raw: bytes) -> "Body":
        cur = Cursor(raw)
        kind = cur.u8()
        if kind == ECHO:
            out = cls(ECHO, value=cur.blob(), evidence=cur.blob())
        elif kind == PREPARE:
            out = cls(PREPARE, ballot=cur.u64())
        elif kind == PROMISE:
            out = cls(PROMISE, ballot=cur.u64(), acc_ballot=cur.u64(),
                      acc_value=cur.blob())
        elif kind in (ACCEPT, ACCEPTED):
            out = cls(kind, ballot=cur.u64(), value=cur.blob())
        else:
            raise DecodeError(f"unknown body kind {kind}")
        cur.expect_end()
        return out


# ---------------------------------------------------------------------------
# replayed per-sender state

class _Replay:
    """What a sender's stream has committed it to so far."""

    def __init__(self):
        self.processed = 0                  # messages t-received from this sender
        self.history: List[HistoryRecord] = []  # verified history incl. its sends
        self.promised = 0
        self.accepted = (0, b"")
        self.prepared_max = 0
        self.echoed: Optional[Body] = None
        self.accept_ballots: set = set()


class Silenced(Exception):
    def __init__(self, reason: str):
        self.reason = reason


class _Unresolved(Exception):
    """A cited message has not been validated locally yet; retry later."""


class TrustedNode:
    """T-send / t-receive endpoint for one process.

    `handler(sender, body)` is a generator hook invoked (from the pump
    lane) for every t-received message; it may itself t-send.
    """

    def __init__(self, rt: ProcessRuntime, scheme, f: int):
        self.rt = rt
        self.scheme = scheme                 # priority scheme for echo adoption
        self.f = f
        self.preferential = False
        self.bc = BroadcastNode(rt, on_deliver=self._on_deliver)
        self.log: List[HistoryRecord] = []
        self.sent_payloads: List[bytes] = []
        self.pending: Dict[str, deque] = {p: deque() for p in rt.processes}
        # stream store: sender -> key -> [payload, verdict(None/True/False)]
        self.store: Dict[str, Dict[int, list]] = {p: {} for p in rt.processes}
        self.replay: Dict[str, _Replay] = {p: _Replay() for p in rt.processes}
        self.silenced: set = set()
        self.handler = None
        self._wakeup = None

    # -- sending ------------------------------------------------------------

    def t_send(self, to: str, body: Body):
        tm = TrustedMessage(to, body.pack(), tuple(self.log))
        payload = tm.pack()
        k = self.bc.next_key
        self.log.append(HistoryRecord(SENT, to, k, digest(payload)))
        self.sent_payloads.append(payload)
        yield from self.bc.broadcast(payload)

    # -- receiving ----------------------------------------------------------

    def _on_deliver(self, sender: str, key: int, payload: bytes):
        self.store[sender][key] = [payload, None]
        if sender not in self.silenced:
            self.pending[sender].append(key)
        if self._wakeup is not None:
            self.rt.open_gate(self._wakeup)
            self._wakeup = None

    def pump(self):
        """Lane: validate and t-receive pending messages in stream order."""
        self.bc.spawn_observers()
        while True:
            moved = True
            while moved:
                moved = False
                for sender in self.rt.processes:
                    if sender in self.silenced or not self.pending[sender]:
                        continue
                    key = self.pending[sender][0]
                    payload, _ = self.store[sender][key]
                    try:
                        tm = self._validate(sender, key, payload)
                    except _Unresolved:
                        continue
                    except Silenced as s:
                        self._silence(sender, key, s.reason)
                        moved = True
                        continue
                    self.pending[sender].popleft()
                    self.store[sender][key][1] = True
                    self.log.append(HistoryRecord(RECEIVED, sender, key,
                                                  digest(payload)))
                    moved = True
                    body = Body.unpack(tm.body)
                    self.rt.note("t-receive", sender=sender, key=key,
                                 kind=KIND_NAMES[body.kind])
                    if self.handler is not None:
                        yield from self.handler(sender, body)
            self._wakeup = self.rt.gate()
            yield self.rt.wait(self._wakeup)

    def _silence(self, sender: str, key: int, reason: str):
        self.silenced.add(sender)
        self.pending[sender].clear()
        self.store[sender][key][1] = False
        self.rt.note("t-silence", sender=sender, key=key, reason=reason)

    # -- validation ---------------------------------------------------------

    def _validate(self, sender: str, key: int, payload: bytes) -> TrustedMessage:
        try:
            tm = TrustedMessage.unpack(payload)
            body = Body.unpack(tm.body)
        except DecodeError as e:
            raise Silenced(f"malformed: {e}")
        rep = self.replay[sender]

        expected = list(rep.history)
        if len(tm.history) < len(expected) or list(tm.history[: len(expected)]) != expected:
            raise Silenced("history not an extension")
        fresh = tm.history[len(expected):]
        for rec in fresh:
            if rec.direction != RECEIVED:
                raise Silenced("claimed send outside own stream")
            self._resolve(rec)

        self._check_transition(sender, rep, body, tm.history)

        # commit: the sender is now bound to this send as well
        rep.history = list(tm.history)
        rep.history.append(HistoryRecord(SENT, tm.to, key, digest(payload)))
        rep.processed += 1
        return tm

    def _resolve(self, rec: HistoryRecord) -> bytes:
        """Return the payload a receive record refers to, or raise."""
        if rec.peer not in self.store:
            raise Silenced("receive from unknown process")
        slot = self.store[rec.peer].get(rec.key)
        if slot is None:
            raise _Unresolved()
        payload, verdict = slot
        if digest(payload) != rec.body_digest:
            raise Silenced("receive digest mismatch")
        if verdict is None:
            raise _Unresolved()     # we have not judged that message yet
        if verdict is False:
            raise Silenced("cites a non-conformant message")
        return payload

    def _cited_bodies(self, history) -> List[tuple]:
        """(origin, Body) for each receive record in a history."""
        out = []
        for rec in history:
            if rec.direction != RECEIVED:
                continue
            payload = self._resolve(rec)
            out.append((rec.peer, Body.unpack(TrustedMessage.unpack(payload).body)))
        return out

    def _check_transition(self, sender: str, rep: _Replay, body: Body, history):
        procs = self.rt.processes
        if body.kind == ECHO:
            if rep.echoed is not None:
                raise Silenced("second echo")
            rep.echoed = body
            return
        if body.kind == PREPARE:
            if ballot_owner(body.ballot, procs) != sender:
                raise Silenced("prepare with foreign ballot")
            if body.ballot <= rep.prepared_max:
                raise Silenced("prepare ballot not increasing")
            rep.prepared_max = body.ballot
            return

        cited = self._cited_bodies(history)
        if body.kind == PROMISE:
            owner = ballot_owner(body.ballot, procs)
            if owner is None:
                raise Silenced("promise for unowned ballot")
            if not any(o == owner and b.kind == PREPARE and b.ballot == body.ballot
                       for o, b in cited):
                raise Silenced("promise without prepare")
            if body.ballot <= rep.promised:
                raise Silenced("promise below promised")
            if (body.acc_ballot, body.acc_value) != rep.accepted:
                raise Silenced("promise misreports accepted state")
            rep.promised = body.ballot
            return
        if body.kind == ACCEPT:
            if ballot_owner(body.ballot, procs) != sender:
                raise Silenced("accept with foreign ballot")
            if body.ballot in rep.accept_ballots:
                raise Silenced("second accept for ballot")
            promises = {o: b for o, b in cited
                        if b.kind == PROMISE and b.ballot == body.ballot}
            if len(promises) < majority(len(procs)):
                raise Silenced("accept without promise quorum")
            top = max(promises.values(), key=lambda b: b.acc_ballot)
            if top.acc_ballot > 0:
                if body.value != top.acc_value:
                    raise Silenced("accept ignores prior accepted value")
            else:
                self._check_fresh_value(sender, body.value, cited)
            rep.accept_ballots.add(body.ballot)
            return
        if body.kind == ACCEPTED:
            owner = ballot_owner(body.ballot, procs)
            if not any(o == owner and b.kind == ACCEPT
                       and b.ballot == body.ballot and b.value == body.value
                       for o, b in cited):
                raise Silenced("accepted without matching accept")
            if body.ballot < rep.promised:
                raise Silenced("accepted below promised")
            rep.promised = body.ballot
            rep.accepted = (body.ballot, body.value)
            return
        raise Silenced("unknown transition")

    def _check_fresh_value(self, sender: str, value: bytes, cited):
        """No prior accepted value: the proposal must be justified by echoes."""
        echoes = {}
        for origin, b in cited:
            if b.kind == ECHO and origin not in echoes:
                echoes[origin] = b
        if self.preferential:
            n = len(self.rt.processes)
            if len(echoes) < n - self.f:
                raise Silenced("fresh accept without enough echoes")
            best = min(echoes.items(),
                       key=lambda kv: self.scheme.key(kv[0], kv[1].value, kv[1].evidence))
            if value != best[1].value:
                raise Silenced("fresh accept skips higher-priority input")
        else:
            own = echoes.get(sender)
            if own is None or own.value != value:
                raise Silenced("fresh accept not the proposer's own input")


# ---------------------------------------------------------------------------
# consensus driver

class BackupConsensus:
    """Conformance-checked Paxos over trusted messages.

    Roles run in every process: the pump lane plays acceptor and learner
    through `_on`, and `run` plays proposer whenever the leader oracle
    points here. `decision` is set exactly once, when a majority of
    distinct processes is seen to have accepted the same ballot.
    """

    RETRY = 300     # must exceed a broadcast round trip, else rounds starve
    POLL = 4

    def __init__(self, rt: ProcessRuntime, node: TrustedNode,
                 preferential: bool = False):
        self.rt = rt
        self.node = node
        node.preferential = preferential
        node.handler = self._on
        self.preferential = preferential
        self.promised = 0
        self.accepted = (0, b"")
        self.promises: Dict[int, Dict[str, Body]] = {}
        self.accepteds: Dict[int, Dict[str, bytes]] = {}
        self.echoes: Dict[str, Body] = {}
        self.decision: Optional[bytes] = None
        self.decided = rt.gate()

    def _on(self, sender: str, body: Body):
        rt = self.rt
        if body.kind == ECHO:
            self.echoes.setdefault(sender, body)
        elif body.kind == PREPARE:
            if body.ballot > self.promised:
                self.promised = body.ballot
                owner = ballot_owner(body.ballot, rt.processes)
                yield from self.node.t_send(
                    owner, Body(PROMISE, ballot=body.ballot,
                                acc_ballot=self.accepted[0],
                                acc_value=self.accepted[1]))
        elif body.kind == PROMISE:
            self.promises.setdefault(body.ballot, {})[sender] = body
        elif body.kind == ACCEPT:
            if body.ballot >= self.promised:
                self.promised = body.ballot
                self.accepted = (body.ballot, body.value)
                yield from self.node.t_send(
                    "*", Body(ACCEPTED, ballot=body.ballot, value=body.value))
        elif body.kind == ACCEPTED:
            seen = self.accepteds.setdefault(body.ballot, {})
            seen[sender] = body.value
            if (self.decision is None
                    and len(seen) >= majority(len(rt.processes))):
                self.decision = body.value
                rt.open_gate(self.decided)

    def run(self, value: bytes, evidence: bytes = b""):
        """Echo the input, then drive proposals while leader. Returns decision."""
        rt = self.rt
        rt.spawn(self.node.pump(), name="pump")
        yield from self.node.t_send("*", Body(ECHO, value=value, evidence=evidence))
        round_no = 0
        my_index = rt.processes.index(rt.pid) + 1
        while self.decision is None:
            if rt.omega() != rt.pid:
                yield rt.sleep(self.POLL)
                continue
            if not self._ready_to_propose():
                yield rt.sleep(self.POLL)
                continue
            round_no = max(round_no + 1, ballot_round(self.promised) + 1)
            b = ballot(round_no, my_index)
            yield from self.node.t_send("*", Body(PREPARE, ballot=b))
            deadline = rt.now + self.RETRY
            need = majority(len(rt.processes))
            while (rt.now < deadline and self.decision is None
                   and len(self.promises.get(b, {})) < need):
                yield rt.sleep(self.POLL)
            got = self.promises.get(b, {})
            if self.decision is not None or len(got) < need:
                continue
            proposal = self._choose(b)
            yield from self.node.t_send("*", Body(ACCEPT, ballot=b, value=proposal))
            deadline = rt.now + self.RETRY
            while rt.now < deadline and self.decision is None:
                if self.rt.omega() != rt.pid:
                    break
                yield rt.sleep(self.POLL)
        return self.decision

    def _ready_to_propose(self) -> bool:
        n = len(self.rt.processes)
        if self.preferential:
            return len(self.echoes) >= n - self.node.f
        return self.rt.pid in self.echoes

    def _choose(self, b: int) -> bytes:
        promises = self.promises[b]
        top = max(promises.values(), key=lambda body: body.acc_ballot)
        if top.acc_ballot > 0:
            return top.acc_value
        if self.preferential:
            best = min(self.echoes.items(),
                       key=lambda kv: self.node.scheme.key(
                           kv[0], kv[1].value, kv[1].evidence))
            return best[1].value
        return self.echoes[self.rt.pid].value
