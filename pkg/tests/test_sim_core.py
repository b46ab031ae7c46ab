"""Model-level behaviour: timing, channels, faults, determinism.

No protocol code is involved — every lane here is hand-rolled.
"""

from __future__ import annotations

import json

import pytest

from mmsim.errors import ContractViolation
from mmsim.regions import install_shared, install_swmr
from mmsim.sim import (FaultSpec, OmegaSchedule, ProtocolBinding, SystemConfig,
                       run)


def cfg(**kw):
    base = dict(n=2, m=1, f_p=1, f_m=0)
    base.update(kw)
    return SystemConfig(**base)


def bind(main, setup=None, name="test"):
    return ProtocolBinding(name=name, setup=setup or install_swmr, main=main)


def canon(trace) -> str:
    return json.dumps(trace.to_dict(), sort_keys=True, default=str)


def test_message_delay_is_one():
    got = {}

    def main(rt, raw):
        if rt.pid == "p1":
            rt.send("p2", b"hi")
        else:
            msg = yield rt.recv()
            got["at"] = rt.now
            got["sender"] = msg.sender
            rt.decide(msg.payload)
        if rt.pid == "p1":
            rt.decide(b"hi")
        yield rt.sleep(1)

    run(cfg(), bind(main))
    assert got == {"at": 1, "sender": "p1"}


def test_memory_op_costs_two():
    seen = {}

    def main(rt, raw):
        if rt.pid == "p1":
            yield rt.write("m1", "p1/x", b"v")
            seen["write_done"] = rt.now
            res = yield rt.read("m1", "p1/x")
            seen["value"] = res.value
            seen["read_done"] = rt.now
        rt.decide(b"-")

    run(cfg(), bind(main))
    assert seen == {"write_done": 2, "value": b"v", "read_done": 4}


def test_channel_is_fifo_one_outstanding():
    # two writes to the same memory issued back to back from two lanes:
    # completions arrive in invocation order, 2 apart
    times = []

    def worker(rt, reg):
        yield rt.write("m1", reg, b"v")
        times.append((reg, rt.now))

    def main(rt, raw):
        if rt.pid == "p1":
            rt.spawn(worker(rt, "p1/a"))
            rt.spawn(worker(rt, "p1/b"))
            yield rt.sleep(10)
        rt.decide(b"-")
        yield rt.sleep(1)

    run(cfg(), bind(main))
    assert times == [("p1/a", 2), ("p1/b", 4)]


def test_gather_collects_parallel_ops():
    out = {}

    def main(rt, raw):
        if rt.pid == "p1":
            ops = [rt.op_write(m, "p1/x", b"v") for m in rt.memory_ids]
            res = yield rt.gather(
                ops, decide=lambda rs: list(rs) if len(rs) == 3 else None)
            out["acks"] = sum(1 for r in res if r.status == "ack")
            out["at"] = rt.now
        rt.decide(b"-")

    run(cfg(m=3), bind(main))
    # parallel across distinct memories: all three complete at t=2
    assert out == {"acks": 3, "at": 2}


def test_recv_timeout_returns_none():
    out = {}

    def main(rt, raw):
        if rt.pid == "p2":
            msg = yield rt.recv(timeout=5)
            out["msg"] = msg
            out["at"] = rt.now
        rt.decide(b"-")
        yield rt.sleep(1)

    run(cfg(), bind(main))
    assert out == {"msg": None, "at": 5}


def test_sender_identity_is_pinned():
    # a lane cannot put another process id in the sender field
    seen = {}

    def main(rt, raw):
        if rt.pid == "p1":
            rt.send("p2", b"I am totally p2")
        else:
            msg = yield rt.recv()
            seen["sender"] = msg.sender
        rt.decide(b"-")
        yield rt.sleep(1)

    run(cfg(), bind(main))
    assert seen["sender"] == "p1"


def test_send_without_links_is_a_violation():
    def main(rt, raw):
        rt.send("p2", b"x")
        rt.decide(b"-")
        yield rt.sleep(1)

    with pytest.raises(ContractViolation):
        run(cfg(links=False), bind(main))


def test_double_decide_different_values_is_a_violation():
    def main(rt, raw):
        rt.decide(b"a")
        rt.decide(b"b")
        yield rt.sleep(1)

    with pytest.raises(ContractViolation):
        run(cfg(), bind(main))


def test_write_outside_any_region_is_a_violation():
    def main(rt, raw):
        yield rt.write("m1", "nowhere/x", b"v")
        rt.decide(b"-")

    with pytest.raises(ContractViolation):
        run(cfg(), bind(main))


def test_crash_fault_stops_the_process():
    def main(rt, raw):
        while True:
            rt.note("tick")
            yield rt.sleep(2)

    trace = run(cfg(horizon=20), bind(main),
                faults=[FaultSpec(target="p1", kind="crash", at=5)])
    ticks = [e.t for e in trace.entries if e.action == "tick" and e.actor == "p1"]
    assert ticks == [0, 2, 4]
    assert trace.faulty_processes == {"p1": "crash"}


def test_crashed_memory_swallows_ops():
    out = {}

    def main(rt, raw):
        if rt.pid == "p1":
            yield rt.sleep(4)
            # decide never fires: the single op is lost, so the lane parks here
            yield rt.gather([rt.op_write("m1", "p1/x", b"v")],
                            decide=lambda rs: None)
            out["resumed"] = True
        rt.decide(b"-")
        yield rt.sleep(1)

    trace = run(cfg(f_m=1, horizon=30), bind(main),
                faults=[FaultSpec(target="m1", kind="crash", at=1)])
    lost = [e for e in trace.entries if e.action == "invoke" and e.detail.get("lost")]
    assert lost, "op against a crashed memory should be marked lost"
    assert not list(trace.find("complete", "m1"))


def test_after_trigger_fault():
    # p2 crashes right after p1's second tick appears in the trace
    def main(rt, raw):
        while True:
            rt.note("tick")
            yield rt.sleep(3)

    trace = run(cfg(horizon=20), bind(main),
                faults=[FaultSpec(target="p2", kind="crash",
                                  after=("p1", "tick", 2))])
    fault = next(trace.find("fault"))
    assert fault.t == 3
    p2_after = [e for e in trace.entries
                if e.actor == "p2" and e.t > fault.t and e.action != "deliver"]
    assert p2_after == []


def test_omega_timeline_and_adversarial_window():
    picks = {}

    def main(rt, raw):
        if rt.pid == "p1":
            early = {rt.omega() for _ in range(20)}
            yield rt.sleep(12)
            late = {rt.omega() for _ in range(20)}
            picks["early"], picks["late"] = early, late
        rt.decide(b"-")
        yield rt.sleep(1)

    omega = OmegaSchedule(timeline=[(0, "p2")], stabilization=10, adversarial=True)
    run(cfg(n=3, seed=5), bind(main), omega=omega)
    assert picks["late"] == {"p2"}
    assert len(picks["early"]) > 1  # adversarial window really wanders


def test_same_seed_same_trace():
    def main(rt, raw):
        for _ in range(3):
            yield rt.write("m1", f"{rt.pid}/x", raw or b"d")
            for q in rt.processes:
                if q != rt.pid:
                    rt.send(q, bytes([rt.now & 0xFF]))
            yield rt.sleep(1)
        rt.decide(raw or b"d")

    kw = dict(inputs={"p1": b"1", "p2": b"2", "p3": b"3"})
    a = run(cfg(n=3, mode="async", seed=9), bind(main), **kw)
    b = run(cfg(n=3, mode="async", seed=9), bind(main), **kw)
    c = run(cfg(n=3, mode="async", seed=10), bind(main), **kw)
    assert canon(a) == canon(b)
    assert canon(a) != canon(c)


def test_budget_stops_runaway_runs():
    def main(rt, raw):
        while True:
            yield rt.sleep(1)

    trace = run(cfg(budget=50), bind(main))
    assert trace.budget_exhausted
    assert not trace.decisions


def test_horizon_stops_the_clock():
    def main(rt, raw):
        while True:
            yield rt.sleep(7)

    trace = run(cfg(horizon=30), bind(main))
    assert trace.horizon_reached
    assert trace.final_time <= 30


def test_preset_register_readable():
    out = {}

    def setup(sim):
        install_shared(sim, "board/")
        sim.preset_register("m1", "board/slot", b"seeded")

    def main(rt, raw):
        if rt.pid == "p1":
            res = yield rt.read("m1", "board/slot")
            out["v"] = res.value
        rt.decide(b"-")

    run(cfg(), bind(main, setup=setup))
    assert out["v"] == b"seeded"


def test_fault_budget_enforced():
    def main(rt, raw):
        rt.decide(b"-")
        yield rt.sleep(1)

    with pytest.raises(Exception):
        run(cfg(f_p=0), bind(main), faults=[FaultSpec(target="p1", kind="crash", at=0)])
