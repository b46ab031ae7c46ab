"""Composition of the leader fast path with the robust backup.

Every process first runs the fast path. A process that decides there
keeps its decision and watches for panics; if one appears it aborts too
and joins the backup, feeding its decided value with its evidence, so
the backup's priority adoption is forced onto that value. Processes
that abort feed their abort values directly. The backup is the
conformance-checked Paxos in preferential mode with T > M > B ranks
recomputed from evidence.
"""

from __future__ import annotations

from .cheap import LEAD_REGION, CheapQuorum
from .memory import MemoryRegion, exclusive_writer
from .priority import EvidencePriority, LabelPriority
from .regions import install_swmr
from .trusted import BackupConsensus, TrustedNode

LEADER = "p1"   # the fast path assumes a fixed leader


def install_fast_regions(sim) -> None:
    install_swmr(sim)
    procs = sim.config.processes
    for mem in sim.memories.values():
        mem.add_region(MemoryRegion(
            region_id=LEAD_REGION, memory_id=mem.memory_id, prefix="lead/",
            permission=exclusive_writer(procs, LEADER),
            legal_change="revoke-only"))


def fast_robust_main(rt, raw, timeout: int = 160, poll: int = 6):
    cq = CheapQuorum(rt, leader=LEADER, timeout=timeout, poll=poll)
    kind, value, evidence = yield from cq.run(raw)
    fast_decided = kind == "decided"
    if fast_decided:
        rt.note("path", which="fast")
        rt.decide(value)
        kind, value, evidence = yield from cq.await_abort()
    rt.note("path", which="backup")
    scheme = EvidencePriority(rt.sim.signer, rt.processes, LEADER)
    node = TrustedNode(rt, scheme, f=rt.config.f_p)
    cons = BackupConsensus(rt, node, preferential=True)
    out = yield from cons.run(value, evidence)
    if fast_decided:
        rt.note("backup-decision", value=out)
    else:
        rt.decide(out)


def cheap_quorum_main(rt, raw, timeout: int = 160, poll: int = 6):
    """Fast path alone; aborts end the instance without a decision."""
    cq = CheapQuorum(rt, leader=LEADER, timeout=timeout, poll=poll)
    kind, value, evidence = yield from cq.run(raw)
    if kind == "decided":
        rt.decide(value)


def robust_backup_main(rt, raw, f=None):
    scheme = EvidencePriority(rt.sim.signer, rt.processes, LEADER)
    node = TrustedNode(rt, scheme, f=rt.config.f_p if f is None else f)
    cons = BackupConsensus(rt, node, preferential=False)
    out = yield from cons.run(raw if raw is not None else b"")
    rt.decide(out)


def preferential_main(rt, raw, ranks: dict, f=None):
    """Label-ranked variant: adoption order is given explicitly per value."""
    scheme = LabelPriority(ranks)
    node = TrustedNode(rt, scheme, f=rt.config.f_p if f is None else f)
    cons = BackupConsensus(rt, node, preferential=True)
    out = yield from cons.run(raw if raw is not None else b"")
    rt.decide(out)
