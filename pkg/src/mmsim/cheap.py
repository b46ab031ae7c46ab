"""Leader fast path: decide in two delays while nothing goes wrong.

One fixed leader signs its proposal and replicates it to a dedicated
region it alone may write; a successful write is a decision. Followers
copy the leader's signed value into their own regions, assemble a
unanimity proof once all n copies agree, replicate the proof, and
decide when all n proofs are up. Any timeout, bad signature, or failed
write sends a process into panic: it raises its panic flag, strips the
leader's write permission (the region admits exactly that change), and
aborts carrying the best value it can justify — its own copy with its
proof if it has one, else a fresh read of the leader's slot, else its
raw input. The abort evidence feeds the backup's priority classes.
"""

from __future__ import annotations

from typing import Optional

from .memory import read_only_for_all
from .priority import (EVID_LEADER_SIGNED, EVID_NONE, EVID_UNANIMITY,
                       pack_evidence)
from .replicate import majority, rep_read, rep_write
from .signing import SignedValue

LEAD_REGION = "lead"
LEAD_VAL = "lead/val"


def val_slot(p: str) -> str:
    return f"{p}/cq/val"


def panic_slot(p: str) -> str:
    return f"{p}/cq/panic"


def proof_slot(p: str) -> str:
    return f"{p}/cq/prf"


def pack_unanimity(copies: list) -> bytes:
    out = [bytes([len(copies)])]
    out.extend(sv.pack() for sv in copies)
    return b"".join(out)


class CheapQuorum:
    """One instance for one process. `run` resolves to the fast outcome:
    ("decided", value, evidence) or ("abort", value, evidence)."""

    def __init__(self, rt, leader: str = "p1", timeout: int = 160, poll: int = 6):
        self.rt = rt
        self.leader = leader
        self.timeout = timeout
        self.poll = poll
        self.procs = rt.processes
        self.n = len(self.procs)
        self.lval: Optional[SignedValue] = None
        self.copied = False
        self.own_proof: Optional[bytes] = None
        self.saw_panic = False
        self.want_panic = False
        self.panicked = False
        self.outcome = None
        self._gate = None
        self._copies = {}
        self._proofs = set()

    # -- main driver ---------------------------------------------------------

    def run(self, raw: Optional[bytes]):
        rt = self.rt
        self.raw = raw
        rt.spawn(self._watch_panic(), name="cq-watch")
        rt.spawn(self._follower(), name="cq-follower")
        if rt.pid == self.leader and raw is not None:
            lv = rt.sign(raw)
            self.lval = lv
            verdict = yield from rep_write(rt, LEAD_VAL, lv.pack())
            if verdict == "ack":
                self._resolve(("decided", raw,
                               pack_evidence(EVID_LEADER_SIGNED, lv.pack())))
            else:
                self._poke(panic=True)
        while self.outcome is None:
            if self.want_panic and not self.panicked:
                out = yield from self._panic()
                self._resolve(out)
                break
            self._gate = rt.gate()
            if self.outcome is None and not self.want_panic:
                yield rt.wait(self._gate)
        return self.outcome

    def await_abort(self):
        """After a fast decision: block until a panic appears, then abort too."""
        rt = self.rt
        while not (self.saw_panic or self.want_panic):
            self._gate = rt.gate()
            if not (self.saw_panic or self.want_panic):
                yield rt.wait(self._gate)
        return (yield from self._panic())

    def _resolve(self, outcome):
        if self.outcome is None:
            self.outcome = outcome
        self._poke()

    def _poke(self, panic: bool = False):
        if panic:
            self.want_panic = True
        gate, self._gate = self._gate, None
        if gate is not None:
            self.rt.open_gate(gate)

    # -- follower work -------------------------------------------------------

    def _follower(self):
        rt = self.rt
        deadline = rt.now + self.timeout
        sv = None
        while rt.now < deadline and not self.panicked:
            if self.saw_panic:
                self._poke(panic=True)
                return
            sv = yield from self._read_lead()
            if sv is not None:
                break
            yield rt.sleep(self.poll)
        if sv is None:
            self._poke(panic=True)
            return
        if self.lval is None:
            self.lval = sv
        copy = rt.sign(sv.pack())
        yield from rep_write(rt, val_slot(rt.pid), copy.pack())
        self.copied = True
        self._copies[rt.pid] = copy
        deadline = rt.now + self.timeout
        wrote_proof = False
        while rt.now < deadline and not self.panicked:
            if self.saw_panic:
                self._poke(panic=True)
                return
            if not wrote_proof:
                yield from self._collect_copies(sv)
                if len(self._copies) >= self.n:
                    body = pack_unanimity([self._copies[q] for q in self.procs])
                    self.own_proof = body
                    yield from rep_write(rt, proof_slot(rt.pid),
                                         rt.sign(body).pack())
                    wrote_proof = True
                    continue
            else:
                yield from self._collect_proofs(sv)
                if len(self._proofs) >= self.n:
                    self._resolve(("decided", sv.payload,
                                   pack_evidence(EVID_UNANIMITY, body)))
                    return
            yield rt.sleep(self.poll)
        self._poke(panic=True)

    def _read_lead(self):
        raw = yield from rep_read(self.rt, LEAD_VAL)
        if raw is None:
            return None
        sv = self.rt.sim.signer.try_unpack(raw)
        if sv is None or sv.signer != self.leader:
            return None
        return sv

    def _collect_copies(self, lv: SignedValue):
        want = lv.pack()
        for q in self.procs:
            if q in self._copies:
                continue
            raw = yield from rep_read(self.rt, val_slot(q))
            if raw is None:
                continue
            sv = self.rt.sim.signer.try_unpack(raw)
            if sv is not None and sv.signer == q and sv.payload == want:
                self._copies[q] = sv

    def _collect_proofs(self, lv: SignedValue):
        from .priority import parse_unanimity
        for q in self.procs:
            if q in self._proofs:
                continue
            raw = yield from rep_read(self.rt, proof_slot(q))
            if raw is None:
                continue
            sv = self.rt.sim.signer.try_unpack(raw)
            if (sv is not None and sv.signer == q
                    and parse_unanimity(self.rt.sim.signer, self.procs,
                                        self.leader, lv.payload, sv.payload)):
                self._proofs.add(q)

    # -- panic ----------------------------------------------------------------

    def _watch_panic(self):
        rt = self.rt
        while not self.saw_panic:
            for q in self.procs:
                raw = yield from rep_read(rt, panic_slot(q))
                if raw is not None:
                    self.saw_panic = True
                    self._poke(panic=True)
                    return
            yield rt.sleep(self.poll)

    def _panic(self):
        rt = self.rt
        self.panicked = True
        rt.note("cq-panic")
        yield from rep_write(rt, panic_slot(rt.pid), b"\x01")
        perm = read_only_for_all(self.procs)
        need = majority(len(rt.memory_ids))
        yield rt.gather(
            [rt.op_change(mem, LEAD_REGION, perm) for mem in rt.memory_ids],
            lambda rs: "done" if len(rs) >= need else None)
        # local state mirrors our own registers: copied ⇒ Value[p]=lval copy,
        # own_proof ⇒ Proof[p] written, so no self-read is needed
        if self.copied:
            if self.own_proof is not None:
                evid = pack_evidence(EVID_UNANIMITY, self.own_proof)
            else:
                evid = pack_evidence(EVID_LEADER_SIGNED, self.lval.pack())
            out = ("abort", self.lval.payload, evid)
        else:
            sv = yield from self._read_lead()
            if sv is not None:
                out = ("abort", sv.payload,
                       pack_evidence(EVID_LEADER_SIGNED, sv.pack()))
            else:
                out = ("abort", self.raw if self.raw is not None else b"",
                       pack_evidence(EVID_NONE))
        rt.note("cq-abort", value=out[1], evidence_kind=out[2][0])
        return out
