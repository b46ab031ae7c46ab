from __future__ import annotations

import pytest

from mmsim.aligned import RESTART, PhaseResponse, analyze1, analyze2, quorum
from mmsim.protocols import PROTOCOLS
from mmsim.sim import (OmegaSchedule, Simulation, SystemConfig, TrailChoice,
                       enumerate_trails)

from conftest import failures, run_all


def mem(agent, slots, nak=None):
    return PhaseResponse(agent, slots=slots, nak=nak)


def proc(agent, promised=0, acc_nr=0, value=None, nak=None):
    return PhaseResponse(agent, promised=promised, acc_nr=acc_nr, value=value,
                         nak=nak)


def test_quorum_is_combined_majority():
    assert [quorum(k) for k in (3, 4, 5)] == [2, 3, 3]


def test_analyze1_all_empty_keeps_own_value():
    resps = [mem("m1", [(5, 0, None), (5, 0, None)]), proc("p2", promised=5)]
    assert analyze1(5, resps, b"mine") == b"mine"


def test_analyze1_adopts_highest_accepted_across_kinds():
    resps = [mem("m1", [(4, 4, b"w")]), proc("p2", promised=4, acc_nr=3,
                                             value=b"u")]
    assert analyze1(6, resps, b"mine") == b"w"
    # and the other way around
    resps = [mem("m1", [(4, 2, b"w")]), proc("p2", promised=4, acc_nr=3,
                                             value=b"u")]
    assert analyze1(6, resps, b"mine") == b"u"


def test_analyze1_restarts_on_higher_min_proposal():
    resps = [mem("m1", [(9, 0, None)])]
    assert analyze1(6, resps, b"v") is RESTART


def test_analyze1_restarts_on_higher_nak():
    assert analyze1(6, [proc("p2", nak=9)], b"v") is RESTART
    # a nak from an older attempt does not justify a restart of this one
    assert analyze1(6, [proc("p2", nak=2), mem("m1", [(6, 0, None)])],
                    b"v") == b"v"


def test_analyze2_counts_acks():
    acked = [PhaseResponse("m1", ack=True), PhaseResponse("p2", ack=True),
             PhaseResponse("m2", ack=False)]
    assert analyze2(acked, need=2) == "decide"
    assert analyze2(acked, need=3) is RESTART


CRASH_PAIR = """
protocol = "aligned-paxos"
[system]
n = 3
m = 2
f_p = 1
f_m = 1
links = true
[inputs]
p1 = "0a"
p2 = "0b"
p3 = "0c"
[[faults]]
target = "{proc}"
kind = "crash"
at = 8
[[faults]]
target = "{mem}"
kind = "crash"
at = 2
[omega]
timeline = [[0, "p1"], [9, "{lead}"]]
stabilization = 9
[run]
seed_base = 0
seed_count = 10
[protocol_params]
permissions = true
"""


@pytest.mark.parametrize("dead_proc,dead_mem", [("p1", "m1"), ("p3", "m2")])
def test_any_process_memory_pair_may_die(dead_proc, dead_mem):
    lead = "p2" if dead_proc == "p1" else "p1"
    results = run_all(CRASH_PAIR.format(proc=dead_proc, mem=dead_mem,
                                        lead=lead))
    assert not failures(results)
    for r in results:
        live = {p for p in ("p1", "p2", "p3") if p != dead_proc}
        assert live <= set(r.trace.decisions)


def test_memories_alone_cannot_block_the_permission_free_variant():
    results = run_all("""
protocol = "aligned-paxos"
[system]
n = 3
m = 2
f_p = 0
f_m = 2
links = true
[inputs]
p1 = "0a"
p2 = "0b"
p3 = "0c"
[[faults]]
target = "m1"
kind = "crash"
at = 0
[[faults]]
target = "m2"
kind = "crash"
at = 0
[run]
seed_base = 0
seed_count = 10
[protocol_params]
permissions = false
""")
    # 3 processes of 5 agents are still a quorum with every memory dark
    assert not failures(results)
    for r in results:
        assert set(r.trace.decisions) == {"p1", "p2", "p3"}


def test_contending_proposers_never_split_small_instance():
    # |A| = 4, two proposers forced into contention by an omega handover;
    # every schedule in the bounded enumeration must stay safe
    entry = PROTOCOLS["aligned-paxos"]
    params = {"permissions": True}
    seen_values = set()

    def run_with_trail(trail):
        cfg = SystemConfig(n=2, m=2, f_p=1, f_m=1, links=True, budget=60_000)
        choice = TrailChoice(trail)
        sim = Simulation(cfg, entry.binding(params),
                         inputs={"p1": b"\x0a", "p2": b"\x0b"},
                         omega=OmegaSchedule(timeline=[(0, "p1"), (10, "p2")]),
                         choice=choice)
        sim.protocol.setup(sim)
        trace = sim.run()
        assert not trace.budget_exhausted
        decided = set(trace.decisions.values())
        assert len(decided) == 1, f"split decision {decided} on trail {trail}"
        assert decided <= {b"\x0a", b"\x0b"}
        assert set(trace.decisions) == {"p1", "p2"}
        seen_values.update(decided)
        return choice.log

    runs = enumerate_trails(run_with_trail, max_branch_points=6,
                            max_runs=10_000)
    assert runs > 500, "enumeration unexpectedly shallow"
    # contention is real: different interleavings pick different winners
    assert seen_values == {b"\x0a", b"\x0b"}
