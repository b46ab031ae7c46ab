"""Paxos over a combined acceptor set: processes and memories together.

Any majority of the union P ∪ M suffices for both phases, so the
protocol rides out crashes of either kind as long as the combined
correct count stays above half. Memories answer through slot reads and writes
(the permission dance keeps them safe against stale proposers);
process acceptors answer prepare/accept messages like classic Paxos.
A promise carries (promised, accProposal, value) so adoption can
compare across both kinds uniformly.

The permission-free flavour drops the acquire step and instead
re-reads every slot after the phase-2 write, aborting on any higher
proposal number it finds — slower, but safe without any permission
machinery at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .memory import MemoryRegion, exclusive_writer, perm
from .regions import install_shared
from .pmp import pack_slot, parse_slot, prop_nr
from .wire import Cursor, pack_bytes, pack_u64

AL_REGION = "al"

MSG_PREPARE = 1
MSG_PROMISE = 2
MSG_ACCEPT = 3
MSG_ACCEPTED = 4
MSG_NAK = 5
MSG_DECIDE = 6

RESTART = "restart"


def al_slot(p: str) -> str:
    return f"al/slot/{p}"


def quorum(n_agents: int) -> int:
    return n_agents // 2 + 1


def install_aligned_regions(sim, leader: str = "p1") -> None:
    procs = sim.config.processes
    for mem in sim.memories.values():
        mem.add_region(MemoryRegion(
            region_id=AL_REGION, memory_id=mem.memory_id, prefix="al/",
            permission=exclusive_writer(procs, leader),
            legal_change="exclusive-writer"))


def install_aligned_free_regions(sim) -> None:
    """No-permission variant: every process may write every slot."""
    procs = sim.config.processes
    install_shared(sim, "al/", perm(readwrite=procs), "static", AL_REGION)


def pack_msg(kind: int, nr: int, acc_nr: int = 0,
             value: Optional[bytes] = None) -> bytes:
    flag = b"\x01" if value is not None else b"\x00"
    return bytes([kind]) + pack_u64(nr) + pack_u64(acc_nr) + flag + \
        pack_bytes(value or b"")


def parse_msg(raw: bytes):
    cur = Cursor(raw)
    kind = cur.u8()
    nr = cur.u64()
    acc_nr = cur.u64()
    flag = cur.u8()
    value = cur.blob()
    cur.expect_end()
    return (kind, nr, acc_nr, value if flag else None)


@dataclass
class PhaseResponse:
    """One agent's answer in a phase.

    Memories snapshot their whole slot array; process acceptors report a
    promise triple. `nak` carries the higher number that refused us.
    `ack` is only meaningful in phase 2.
    """

    agent: str
    slots: Optional[List[Tuple[int, int, Optional[bytes]]]] = None
    promised: int = 0
    acc_nr: int = 0
    value: Optional[bytes] = None
    nak: Optional[int] = None
    ack: bool = False


def analyze1(propnr: int, resps: List[PhaseResponse], own_value: bytes):
    """RESTART on any sign of a higher proposal, else the value to push in
    phase 2: the one attached to the highest accProposal across every
    response of either kind, falling back to the proposer's own."""
    best_acc = 0
    best_val = own_value
    for r in resps:
        if r.nak is not None and r.nak > propnr:
            return RESTART
        if r.slots is not None:
            for minp, accp, val in r.slots:
                if minp > propnr:
                    return RESTART
                if val is not None and accp > best_acc:
                    best_acc, best_val = accp, val
        elif r.value is not None and r.acc_nr > best_acc:
            best_acc, best_val = r.acc_nr, r.value
    return best_val


def analyze2(resps: List[PhaseResponse], need: int):
    """The phase-2 verdict: enough acks means the value is decided;
    individual naks are survivable as long as a quorum acked."""
    acks = sum(1 for r in resps if r.ack)
    return "decide" if acks >= need else RESTART


class ProcessAcceptor:
    """Classic single-decree acceptor, message-driven."""

    def __init__(self, rt):
        self.rt = rt
        self.promised = 0
        self.acc_nr = 0
        self.acc_val: Optional[bytes] = None

    def loop(self):
        rt = self.rt
        while True:
            msg = yield rt.recv(match=lambda m: m.payload[0] in
                                (MSG_PREPARE, MSG_ACCEPT))
            kind, nr, _, value = parse_msg(msg.payload)
            if kind == MSG_PREPARE:
                if nr > self.promised:
                    self.promised = nr
                    rt.send(msg.sender, pack_msg(MSG_PROMISE, nr, self.acc_nr,
                                                 self.acc_val))
                else:
                    rt.send(msg.sender, pack_msg(MSG_NAK, self.promised))
            else:
                if nr >= self.promised:
                    self.promised = nr
                    self.acc_nr = nr
                    self.acc_val = value
                    rt.send(msg.sender, pack_msg(MSG_ACCEPTED, nr))
                else:
                    rt.send(msg.sender, pack_msg(MSG_NAK, self.promised))


@dataclass
class _Phase:
    propnr: int
    resps: List[PhaseResponse] = field(default_factory=list)
    restart: bool = False
    # cleared when the proposer moves on; sessions must not issue further
    # ops afterwards, or a stale write could mask a newer proposal number
    live: bool = True


class AlignedProposer:
    def __init__(self, rt, use_permissions: bool = True, poll: int = 4,
                 phase_timeout: int = 120):
        self.rt = rt
        self.use_permissions = use_permissions
        self.poll = poll
        self.phase_timeout = phase_timeout
        self.seen_max = 0
        self.agents = list(rt.processes) + list(rt.memory_ids)
        self.need = quorum(len(self.agents))

    def propose(self, value: bytes):
        rt = self.rt
        my_index = rt.processes.index(rt.pid) + 1
        while True:
            msg = rt.try_receive(lambda m: m.payload[0] == MSG_DECIDE)
            if msg is not None:
                return parse_msg(msg.payload)[3]
            if rt.omega() != rt.pid:
                yield rt.sleep(self.poll)
                continue
            round_no = (self.seen_max >> 16) + 1
            propnr = prop_nr(round_no, my_index)
            self.seen_max = max(self.seen_max, propnr)
            rt.note("al-attempt", propnr=propnr)

            ph1 = _Phase(propnr)
            for a in self.agents:
                rt.spawn(self._phase1_session(a, ph1), name=f"al1-{a}")
            ok = yield from self._await(
                ph1, lambda: len(ph1.resps) >= self.need, halt_on_restart=True)
            ph1.live = False
            if not ok:
                continue
            picked = analyze1(propnr, ph1.resps, value)
            if picked is RESTART:
                continue

            ph2 = _Phase(propnr)
            for a in self.agents:
                rt.spawn(self._phase2_session(a, ph2, picked), name=f"al2-{a}")
            ok = yield from self._await(
                ph2, lambda: sum(1 for r in ph2.resps if r.ack) >= self.need
                or len(ph2.resps) == len(self.agents))
            ph2.live = False
            if not ok or analyze2(ph2.resps, self.need) is RESTART:
                continue
            rt.note("al-decide", propnr=propnr, value=picked)
            return picked

    def _await(self, ph: _Phase, ready, halt_on_restart: bool = False):
        """Poll until the phase met its bar, failed, or timed out."""
        rt = self.rt
        deadline = rt.now + self.phase_timeout
        while True:
            if ph.restart and halt_on_restart:
                return False
            if ready():
                return True
            if rt.now >= deadline:
                return ready()
            yield rt.sleep(self.poll)

    # -- per-agent sessions -------------------------------------------------

    def _phase1_session(self, agent: str, ph: _Phase):
        rt = self.rt
        if agent in rt.processes:
            rt.send(agent, pack_msg(MSG_PREPARE, ph.propnr))
            msg = yield rt.recv(match=self._reply(agent, ph.propnr))
            kind, nr, acc_nr, val = parse_msg(msg.payload)
            if kind == MSG_NAK:
                self.seen_max = max(self.seen_max, nr)
                ph.restart = True
                ph.resps.append(PhaseResponse(agent, nak=nr))
            else:
                ph.resps.append(PhaseResponse(agent, promised=nr,
                                              acc_nr=acc_nr, value=val))
            return
        mem = agent
        if self.use_permissions:
            yield rt.change_permission(
                mem, AL_REGION, exclusive_writer(rt.processes, rt.pid))
        if not ph.live:
            return
        r = yield rt.write(mem, al_slot(rt.pid), pack_slot(ph.propnr, 0, None))
        if r.status != "ack":
            ph.restart = True
            ph.resps.append(PhaseResponse(mem, nak=ph.propnr + 1))
            return
        slots = []
        for q in rt.processes:
            if not ph.live:
                return
            r = yield rt.read(mem, al_slot(q))
            if r.status != "ok":
                ph.restart = True
                ph.resps.append(PhaseResponse(mem, nak=ph.propnr + 1))
                return
            minp, accp, val = parse_slot(r.value)
            self.seen_max = max(self.seen_max, minp)
            if minp > ph.propnr:
                ph.restart = True
            slots.append((minp, accp, val))
        ph.resps.append(PhaseResponse(mem, slots=slots))

    def _phase2_session(self, agent: str, ph: _Phase, value: bytes):
        rt = self.rt
        if agent in rt.processes:
            rt.send(agent, pack_msg(MSG_ACCEPT, ph.propnr, value=value))
            msg = yield rt.recv(match=self._reply(agent, ph.propnr))
            kind, nr, _, _ = parse_msg(msg.payload)
            if kind == MSG_ACCEPTED:
                ph.resps.append(PhaseResponse(agent, ack=True))
            else:
                self.seen_max = max(self.seen_max, nr)
                ph.resps.append(PhaseResponse(agent, nak=nr))
            return
        mem = agent
        if not ph.live:
            return
        r = yield rt.write(mem, al_slot(rt.pid),
                           pack_slot(ph.propnr, ph.propnr, value))
        if r.status != "ack":
            ph.resps.append(PhaseResponse(mem, nak=ph.propnr + 1))
            return
        if not self.use_permissions:
            # nobody was fenced out, so confirm no higher proposal slipped in
            for q in rt.processes:
                if not ph.live:
                    return
                r = yield rt.read(mem, al_slot(q))
                if r.status != "ok":
                    ph.resps.append(PhaseResponse(mem, nak=ph.propnr + 1))
                    return
                minp, _, _ = parse_slot(r.value)
                self.seen_max = max(self.seen_max, minp)
                if minp > ph.propnr:
                    ph.resps.append(PhaseResponse(mem, nak=minp))
                    return
        ph.resps.append(PhaseResponse(mem, ack=True))

    @staticmethod
    def _reply(agent: str, propnr: int):
        def match(m):
            if m.sender != agent:
                return False
            kind, nr, _, _ = parse_msg(m.payload)
            if kind == MSG_NAK:
                return True
            return nr == propnr and kind in (MSG_PROMISE, MSG_ACCEPTED)
        return match


def aligned_main(rt, raw, use_permissions: bool = True, poll: int = 4):
    acceptor = ProcessAcceptor(rt)
    rt.spawn(acceptor.loop(), name="al-acceptor")
    prop = AlignedProposer(rt, use_permissions=use_permissions, poll=poll)
    out = yield from prop.propose(raw if raw is not None else b"")
    rt.decide(out)
    for q in rt.processes:
        if q != rt.pid:
            rt.send(q, pack_msg(MSG_DECIDE, 0, value=out))


def aligned_free_main(rt, raw, poll: int = 4):
    yield from aligned_main(rt, raw, use_permissions=False, poll=poll)
