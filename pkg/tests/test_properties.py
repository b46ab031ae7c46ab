"""The checkers must re-derive verdicts from raw events: a good trace
passes, a doctored one is caught, and every failed verdict points at
real entry indices."""
from __future__ import annotations

import copy

from mmsim.properties import (BROADCAST_CHECKS, CONSENSUS_CHECKS,
                              MODEL_CHECKS, check_agreement,
                              check_crash_permanence, check_delay_accounting,
                              check_legal_change_gating,
                              check_permission_soundness, check_termination,
                              check_validity, priority_decision_checker,
                              run_checks)
from mmsim.sim import (ProtocolBinding, Simulation, SystemConfig, Trace,
                       TraceEntry)

from conftest import one_trace

BROADCAST = """
protocol = "reliable-broadcast"
[system]
n = 3
m = 3
f_p = 1
f_m = 1
byzantine = true
horizon = 300
[inputs]
p1 = "d00d"
"""

PMP = """
protocol = "pmp"
[system]
n = 2
m = 3
f_p = 1
f_m = 1
"""

# a leader handover forces real permission changes into the trace
PMP_TAKEOVER = """
protocol = "pmp"
[system]
n = 3
m = 3
f_p = 2
f_m = 1
[inputs]
p1 = "0a"
p2 = "0b"
p3 = "0c"
[[faults]]
target = "p1"
kind = "crash"
at = 1
[omega]
timeline = [[0, "p1"], [4, "p2"]]
stabilization = 4
"""


def stub(main, n=2, inputs=None, **cfg_kw):
    cfg = SystemConfig(n=n, m=0, **cfg_kw)
    binding = ProtocolBinding("stub", setup=lambda sim: None, main=main)
    sim = Simulation(cfg, binding, inputs=inputs or {})
    sim.protocol.setup(sim)
    return sim.run()


def assert_witnesses_valid(trace, verdict, action=None):
    assert not verdict.ok
    assert verdict.witnesses, verdict.info
    for i in verdict.witnesses:
        assert 0 <= i < len(trace.entries)
        assert trace.entries[i].idx == i
        if action is not None:
            assert trace.entries[i].action == action


# -- broken protocols are caught with usable witnesses ------------------------

def test_split_decision_fails_agreement_with_witnesses():
    def main(rt, raw):
        rt.decide(b"\x01" if rt.pid == "p1" else b"\x02")
        return
        yield

    trace = stub(main, inputs={"p1": b"\x01", "p2": b"\x02"})
    v = check_agreement(trace)
    assert_witnesses_valid(trace, v, action="decide")
    assert "distinct decisions" in v.info


def test_invented_value_fails_validity():
    def main(rt, raw):
        rt.decide(b"\xee")  # nobody proposed this
        return
        yield

    trace = stub(main, inputs={"p1": b"\x01", "p2": b"\x02"})
    v = check_validity(trace)
    assert_witnesses_valid(trace, v, action="decide")


def test_silent_protocol_fails_termination():
    def main(rt, raw):
        return
        yield

    trace = stub(main, inputs={"p1": b"\x01", "p2": b"\x01"})
    v = check_termination(trace)
    assert not v.ok
    assert "p1" in v.info and "p2" in v.info


def test_priority_checker_flags_low_rank_decisions():
    def main(rt, raw):
        rt.decide(b"\x02")
        return
        yield

    trace = stub(main, inputs={"p1": b"\x01", "p2": b"\x02"})
    check = priority_decision_checker({b"\x01": 9, b"\x02": 1}, f=0)
    v = check(trace)
    assert_witnesses_valid(trace, v, action="decide")


# -- doctored traces: the model checks cannot be fooled -----------------------

def test_delay_accounting_catches_slow_message():
    trace = one_trace(PMP)  # the decision flood is the one link message here
    assert check_delay_accounting(trace).ok
    bad = copy.deepcopy(trace)
    victim = next(e for e in bad.entries if e.action == "deliver")
    victim.t += 1
    v = check_delay_accounting(bad)
    assert_witnesses_valid(bad, v)
    assert "message delay 2" in v.info


def test_delay_accounting_catches_slow_memory_op():
    trace = one_trace(PMP)
    assert check_delay_accounting(trace).ok
    bad = copy.deepcopy(trace)
    victim = next(e for e in bad.entries if e.action == "complete")
    victim.t += 3
    assert not check_delay_accounting(bad).ok


def test_crash_permanence_catches_zombie():
    trace = one_trace(PMP)
    assert check_crash_permanence(trace).ok
    bad = copy.deepcopy(trace)
    n = len(bad.entries)
    bad.entries.append(TraceEntry(n, bad.final_time, "p9", "fault",
                                  {"kind": "crash"}))
    bad.entries.append(TraceEntry(n + 1, bad.final_time, "p9", "note", {}))
    v = check_crash_permanence(bad)
    assert_witnesses_valid(bad, v)
    assert "p9" in v.info


def test_permission_soundness_catches_flipped_ack():
    trace = one_trace(PMP)
    assert check_permission_soundness(trace).ok
    bad = copy.deepcopy(trace)
    victim = next(e for e in bad.entries
                  if e.action == "complete" and e.detail["op"] == "write"
                  and e.detail["status"] == "ack")
    victim.detail["status"] = "nak"
    v = check_permission_soundness(bad)
    assert_witnesses_valid(bad, v)


def test_legal_change_gating_catches_flipped_applied_bit():
    trace = one_trace(PMP_TAKEOVER)
    assert check_legal_change_gating(trace).ok
    bad = copy.deepcopy(trace)
    victim = next(e for e in bad.entries
                  if e.action == "complete" and e.detail["op"] == "change")
    victim.detail["applied"] = not victim.detail["applied"]
    assert not check_legal_change_gating(bad).ok


# -- good traces sail through every family ------------------------------------

def test_clean_broadcast_trace_passes_all_broadcast_checks():
    trace = one_trace(BROADCAST)
    for v in run_checks(trace, BROADCAST_CHECKS + MODEL_CHECKS):
        assert v.ok, (v.name, v.info)


def test_clean_consensus_trace_passes_model_and_consensus_checks():
    trace = one_trace(PMP, seed=3)
    for v in run_checks(trace, CONSENSUS_CHECKS + MODEL_CHECKS):
        assert v.ok, (v.name, v.info)


def test_byzantine_validity_is_vacuous_only_under_faults_or_split_inputs():
    cfg = {"byzantine": True, "processes": ["p1", "p2"]}
    t = Trace(seed=0, mode="sync", config=cfg,
              inputs={"p1": b"\x01", "p2": b"\x01"},
              decisions={"p1": b"\x01", "p2": b"\x01"})
    assert check_validity(t).ok
    t.decisions = {"p1": b"\x09", "p2": b"\x09"}
    assert not check_validity(t).ok
    t.faulty_processes = {"p2": "equivocator"}
    v = check_validity(t)
    assert v.ok and "vacuous" in v.info
