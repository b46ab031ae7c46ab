"""Crash-only consensus on fail-prone memories, two delays in the common case.

One region per memory, writable by exactly one process at a time; a new
leader takes the permission, which makes the old leader's next write
fail. That nak replaces the second read round of the disk-based
original: a leader whose phase-2 writes all ack knows nobody took over,
so it decides immediately. The initial leader holds the permission from
the start and skips phase 1 entirely on its first attempt — one write
wave, two delays.

Each attempt runs one session lane per memory: acquire permission,
write (propNr, 0, ⊥), read every slot, adopt the highest accepted value
at a majority barrier, then write (propNr, propNr, value). Stragglers
finishing phase 1 late may still help in phase 2, but must abort the
attempt if they bring in a higher accepted value after the barrier.

The disk baseline keeps static all-writer permissions and instead
re-reads every other slot after writing, which costs two extra delays
per phase. Learners: deciders flood a message when links exist;
otherwise they write a decided marker to a static region that everyone
polls.
"""

from __future__ import annotations

from typing import Optional

from .memory import MemoryRegion, exclusive_writer, perm
from .regions import install_shared
from .replicate import majority, rep_read, rep_write
from .wire import Cursor, pack_bytes, pack_u64

PMP_REGION = "pmp"
DISK_REGION = "disk"
LEARN_REGION = "learn"
LEARN_REG = "learn/decided"


def pmp_slot(p: str) -> str:
    return f"pmp/slot/{p}"


def disk_slot(p: str) -> str:
    return f"disk/slot/{p}"


def prop_nr(round_no: int, pid_index: int) -> int:
    return (round_no << 16) | pid_index


def pack_slot(minp: int, accp: int, value: Optional[bytes]) -> bytes:
    flag = b"\x01" if value is not None else b"\x00"
    return pack_u64(minp) + pack_u64(accp) + flag + pack_bytes(value or b"")


def parse_slot(raw: Optional[bytes]):
    """(minProposal, accProposal, value|None); unwritten slots are empty."""
    if raw is None:
        return (0, 0, None)
    cur = Cursor(raw)
    minp = cur.u64()
    accp = cur.u64()
    flag = cur.u8()
    value = cur.blob()
    cur.expect_end()
    return (minp, accp, value if flag else None)


def install_pmp_regions(sim, leader: str = "p1") -> None:
    procs = sim.config.processes
    for mem in sim.memories.values():
        mem.add_region(MemoryRegion(
            region_id=PMP_REGION, memory_id=mem.memory_id, prefix="pmp/",
            permission=exclusive_writer(procs, leader),
            legal_change="exclusive-writer"))
    install_shared(sim, "learn/", perm(readwrite=procs), "static", LEARN_REGION)


def install_disk_regions(sim) -> None:
    procs = sim.config.processes
    install_shared(sim, "disk/", perm(readwrite=procs), "static", DISK_REGION)
    install_shared(sim, "learn/", perm(readwrite=procs), "static", LEARN_REGION)


class _Attempt:
    def __init__(self, propnr: int, value: bytes, skip_phase1: bool):
        self.propnr = propnr
        self.current_val = value
        self.current_max = 0
        self.phase2_started = skip_phase1
        self.skip_phase1 = skip_phase1
        self.ready: set = set()
        self.acked: set = set()
        self.aborted = False


class PmpProposer:
    def __init__(self, rt, leader: str = "p1", poll: int = 4):
        self.rt = rt
        self.leader = leader
        self.poll = poll
        self.seen_max = 0
        self._wake = None

    def _poke(self):
        gate, self._wake = self._wake, None
        if gate is not None:
            self.rt.open_gate(gate)

    def propose(self, value: bytes):
        """Drive attempts while leader; returns the decided value."""
        rt = self.rt
        first = True
        my_index = rt.processes.index(rt.pid) + 1
        need = majority(len(rt.memory_ids))
        while True:
            learned = check_decide_message(rt)
            if learned is not None:
                return learned
            if rt.omega() != rt.pid:
                learned = yield from poll_marker(rt)
                if learned is not None:
                    return learned
                yield rt.sleep(self.poll)
                continue
            round_no = (self.seen_max >> 16) + 1
            att = _Attempt(prop_nr(round_no, my_index), value,
                           skip_phase1=first and rt.pid == self.leader)
            first = False
            self.seen_max = max(self.seen_max, att.propnr)
            rt.note("pmp-attempt", propnr=att.propnr, skip_phase1=att.skip_phase1)
            for mem in rt.memory_ids:
                rt.spawn(self._session(mem, att), name=f"pmp-{mem}")
            while not att.aborted and len(att.acked) < need:
                self._wake = rt.gate()
                if att.aborted or len(att.acked) >= need:
                    break
                yield rt.wait(self._wake)
            if not att.aborted and len(att.acked) >= need:
                rt.note("pmp-decide", propnr=att.propnr, value=att.current_val)
                return att.current_val

    def _session(self, mem: str, att: _Attempt):
        rt = self.rt
        if not att.skip_phase1:
            yield rt.change_permission(
                mem, PMP_REGION, exclusive_writer(rt.processes, rt.pid))
            if att.aborted:
                return
            r = yield rt.write(mem, pmp_slot(rt.pid),
                               pack_slot(att.propnr, 0, None))
            if r.status != "ack":
                return self._abort(att)
            if att.aborted:
                return
            best_acc, best_val = 0, None
            for q in rt.processes:
                r = yield rt.read(mem, pmp_slot(q))
                if att.aborted:
                    return
                if r.status != "ok":
                    return self._abort(att)
                minp, accp, val = parse_slot(r.value)
                self.seen_max = max(self.seen_max, minp)
                if minp > att.propnr:
                    return self._abort(att)
                if val is not None and accp > best_acc:
                    best_acc, best_val = accp, val
            # adoption must be atomic with the barrier check: no yields here
            if best_acc > att.current_max:
                if att.phase2_started:
                    return self._abort(att)
                att.current_val = best_val
                att.current_max = best_acc
            att.ready.add(mem)
            if len(att.ready) >= majority(len(rt.memory_ids)):
                att.phase2_started = True
            while not att.phase2_started:
                if att.aborted:
                    return
                yield rt.sleep(2)
        if att.aborted:
            return
        r = yield rt.write(mem, pmp_slot(rt.pid),
                           pack_slot(att.propnr, att.propnr, att.current_val))
        if r.status != "ack":
            return self._abort(att)
        att.acked.add(mem)
        self._poke()

    def _abort(self, att: _Attempt):
        att.aborted = True
        self._poke()


def check_decide_message(rt):
    if not rt.config.links:
        return None
    msg = rt.try_receive(lambda mg: mg.payload.startswith(b"D"))
    return msg.payload[1:] if msg is not None else None


def poll_marker(rt):
    """One replicated read of the decided marker; None while unset or in
    links mode (where the flood makes polling pointless)."""
    if rt.config.links:
        return None
    raw = yield from rep_read(rt, LEARN_REG)
    return raw


def announce(rt, value: bytes):
    if rt.config.links:
        for q in rt.processes:
            if q != rt.pid:
                rt.send(q, b"D" + value)
        return
    yield from rep_write(rt, LEARN_REG, value)


def pmp_main(rt, raw, poll: int = 4):
    prop = PmpProposer(rt, poll=poll)
    out = yield from prop.propose(raw if raw is not None else b"")
    rt.decide(out)
    yield from announce(rt, out)


class DiskProposer:
    """Baseline without dynamic permissions: every phase is write-then-read,
    so even the initial leader pays two round trips (4 delays at n=2)."""

    def __init__(self, rt, leader: str = "p1", poll: int = 4):
        self.rt = rt
        self.leader = leader
        self.poll = poll
        self.seen_max = 0
        self._wake = None

    def _poke(self):
        gate, self._wake = self._wake, None
        if gate is not None:
            self.rt.open_gate(gate)

    def propose(self, value: bytes):
        rt = self.rt
        first = True
        my_index = rt.processes.index(rt.pid) + 1
        while True:
            learned = check_decide_message(rt)
            if learned is not None:
                return learned
            if rt.omega() != rt.pid:
                learned = yield from poll_marker(rt)
                if learned is not None:
                    return learned
                yield rt.sleep(self.poll)
                continue
            round_no = (self.seen_max >> 16) + 1
            propnr = prop_nr(round_no, my_index)
            self.seen_max = propnr
            current = value
            if not (first and rt.pid == self.leader):
                outcome = yield from self._phase(propnr, 0, None)
                if outcome is None:
                    continue
                _, best = outcome
                if best is not None:
                    current = best
            first = False
            outcome = yield from self._phase(propnr, propnr, current)
            if outcome is None:
                continue
            rt.note("disk-decide", propnr=propnr, value=current)
            return current

    def _phase(self, minp: int, accp: int, val: Optional[bytes]):
        """Write own block then read the others, per memory; None = abort."""
        rt = self.rt
        need = majority(len(rt.memory_ids))
        payload = pack_slot(minp, accp, val if accp else None)
        results: dict = {}
        for mem in rt.memory_ids:
            rt.spawn(self._disk_session(mem, payload, minp, results),
                     name=f"disk-{mem}")
        while True:
            if any(r == "abort" for r in results.values()):
                return None
            if len(results) >= need:
                break
            self._wake = rt.gate()
            if len(results) >= need or any(r == "abort" for r in results.values()):
                continue
            yield rt.wait(self._wake)
        best_acc, best_val = 0, None
        for r in results.values():
            acc, v = r
            if v is not None and acc > best_acc:
                best_acc, best_val = acc, v
        return (best_acc, best_val)

    def _disk_session(self, mem: str, payload: bytes, minp: int, results: dict):
        rt = self.rt
        r = yield rt.write(mem, disk_slot(rt.pid), payload)
        if r.status != "ack":
            results[mem] = "abort"
            return self._poke()
        best_acc, best_val = 0, None
        for q in rt.processes:
            if q == rt.pid:
                continue
            r = yield rt.read(mem, disk_slot(q))
            if r.status != "ok":
                results[mem] = "abort"
                return self._poke()
            other_min, accp, val = parse_slot(r.value)
            self.seen_max = max(self.seen_max, other_min)
            if other_min > minp:
                results[mem] = "abort"
                return self._poke()
            if val is not None and accp > best_acc:
                best_acc, best_val = accp, val
        results[mem] = (best_acc, best_val)
        self._poke()


def disk_main(rt, raw, poll: int = 4):
    prop = DiskProposer(rt, poll=poll)
    out = yield from prop.propose(raw if raw is not None else b"")
    rt.decide(out)
    yield from announce(rt, out)
