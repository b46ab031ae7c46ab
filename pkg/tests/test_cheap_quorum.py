from __future__ import annotations

from conftest import failures, one_trace, run_all

CLEAN = """
protocol = "cheap-quorum"
[system]
n = 3
m = 3
f_p = 1
f_m = 1
byzantine = true
[inputs]
p1 = "55"
p2 = "55"
p3 = "55"
[run]
seed_base = 0
seed_count = 5
"""


def test_clean_run_decides_fast():
    results = run_all(CLEAN)
    assert not failures(results)
    for r in results:
        assert r.trace.decision_delay["p1"] == 2
        assert set(r.trace.decisions) == {"p1", "p2", "p3"}
        assert set(r.trace.decisions.values()) == {b"\x55"}
        assert not list(r.trace.find("cq-panic"))


def test_every_process_publishes_a_unanimity_proof_before_deciding():
    trace = one_trace(CLEAN)
    decided_at = {e.actor: e.t for e in trace.find("decide")}
    proof_acks = {}
    for e in trace.find("complete"):
        d = e.detail
        if (d.get("op") == "write" and d.get("status") == "ack"
                and d.get("register", "").endswith("/cq/prf")):
            owner = d["register"].split("/")[0]
            proof_acks.setdefault(owner, e.t)
    # everyone posts a proof; a follower only decides once all n are up,
    # so its own proof ack precedes its decision (the leader decides on
    # its acked value write alone and files its proof afterwards)
    assert set(proof_acks) == set(decided_at) == {"p1", "p2", "p3"}
    for p in ("p2", "p3"):
        assert proof_acks[p] <= decided_at[p]


SILENT_LEADER = """
protocol = "cheap-quorum"
[system]
n = 3
m = 3
f_p = 1
f_m = 1
byzantine = true
[inputs]
p1 = "11"
p2 = "22"
p3 = "33"
[[faults]]
target = "p1"
kind = "silent"
at = 0
[run]
seed_base = 0
seed_count = 5
"""


def test_silent_leader_forces_timeout_abort():
    results = run_all(SILENT_LEADER)
    assert not failures(results)
    for r in results:
        assert not r.trace.decisions
        for p in ("p2", "p3"):
            assert list(r.trace.find("cq-panic", p))
            aborts = list(r.trace.find("cq-abort", p))
            assert len(aborts) == 1
            # nothing from the leader arrived, so processes abort on their own input
            assert aborts[0].detail["value"] == r.trace.inputs[p]
            assert aborts[0].detail["evidence_kind"] == 0


GRABBER_LEADER = """
protocol = "cheap-quorum"
[system]
n = 3
m = 3
f_p = 1
f_m = 1
byzantine = true
[inputs]
p1 = "e1"
p2 = "e2"
p3 = "e3"
[[faults]]
target = "p1"
kind = "permission-grabber"
at = 0
[run]
seed_base = 0
seed_count = 10
"""


def test_permission_revocation_is_noticed():
    results = run_all(GRABBER_LEADER)
    assert not failures(results)  # includes abort-agreement
    for r in results:
        for p in ("p2", "p3"):
            assert list(r.trace.find("cq-panic", p)), f"{p} never panicked"
            assert list(r.trace.find("cq-abort", p))


def test_panic_is_contagious():
    # one process panics by timeout, the other must follow via the panic
    # flags even though its own reads were fine
    trace = one_trace(SILENT_LEADER, seed=3)
    panics = sorted(e.actor for e in trace.find("cq-panic"))
    assert panics == ["p2", "p3"]
