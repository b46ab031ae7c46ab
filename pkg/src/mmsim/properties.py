"""Trace predicates: every checker re-derives its verdict from the raw
event log alone, so a protocol bug cannot hide behind its own bookkeeping.

A Verdict carries the indices of the entries witnessing the violation;
an empty witness list on a failed verdict means the problem is an
absence (e.g. a process that never decided).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from .memory import LEGAL_CHANGE_POLICIES
from .priority import LabelPriority, eligible_values
from .sim import Trace

MESSAGE_DELAY = 1
MEMORY_OP_DELAY = 2


@dataclass
class Verdict:
    name: str
    ok: bool
    witnesses: List[int] = field(default_factory=list)
    info: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "ok": self.ok,
                "witnesses": self.witnesses, "info": self.info}


def byzantine_processes(trace: Trace) -> set:
    return {p for p, kind in trace.faulty_processes.items() if kind != "crash"}


def correct_processes(trace: Trace) -> list:
    """Processes that were never faulty in any way."""
    return [p for p in trace.config["processes"]
            if p not in trace.faulty_processes]


def notes(trace: Trace, action: str, actor: Optional[str] = None):
    for e in trace.entries:
        if e.action == action and (actor is None or e.actor == actor):
            yield e


# -- consensus core ---------------------------------------------------------

def check_agreement(trace: Trace) -> Verdict:
    """No two non-Byzantine processes decide differently (crashed processes'
    pre-crash decisions count: all our protocols decide uniformly)."""
    byz = byzantine_processes(trace)
    seen: Dict[bytes, str] = {}
    for p, v in sorted(trace.decisions.items()):
        if p in byz:
            continue
        seen.setdefault(v, p)
    if len(seen) <= 1:
        return Verdict("agreement", True)
    wit = [e.idx for e in trace.entries
           if e.action == "decide" and e.actor not in byz]
    return Verdict("agreement", False, wit,
                   f"distinct decisions {sorted(v.hex() for v in seen)}")


def check_validity(trace: Trace) -> Verdict:
    """Crash model: every decision was somebody's input. Byzantine model
    (weak): with zero faults and unanimous inputs, that input decides."""
    byz = byzantine_processes(trace)
    if trace.config["byzantine"]:
        if trace.faulty_processes:
            return Verdict("validity", True, info="vacuous: faults present")
        vals = set(trace.inputs.values())
        if len(vals) != 1:
            return Verdict("validity", True, info="vacuous: inputs differ")
        want = next(iter(vals))
        bad = [p for p, v in trace.decisions.items() if v != want]
        if not bad:
            return Verdict("validity", True)
        wit = [e.idx for e in trace.entries if e.action == "decide"
               and e.actor in bad]
        return Verdict("validity", False, wit,
                       f"unanimous input not decided by {bad}")
    allowed = set(trace.inputs.values())
    for p, v in sorted(trace.decisions.items()):
        if p in byz:
            continue
        if allowed and v not in allowed:
            wit = [e.idx for e in trace.entries
                   if e.action == "decide" and e.actor == p]
            return Verdict("validity", False, wit,
                           f"{p} decided {v.hex()}, not an input")
    return Verdict("validity", True)


def check_termination(trace: Trace) -> Verdict:
    missing = [p for p in correct_processes(trace) if p not in trace.decisions]
    if trace.budget_exhausted:
        return Verdict("termination", False, [],
                       "event budget exhausted before all correct decided")
    if missing:
        return Verdict("termination", False, [], f"no decision from {missing}")
    return Verdict("termination", True)


# -- model conformance ------------------------------------------------------

def check_delay_accounting(trace: Trace) -> Verdict:
    """Messages take exactly 1 time unit, memory ops exactly 2; per-channel
    FIFO order between invocation and completion."""
    sends = {}
    for e in trace.entries:
        if e.action == "send":
            sends[e.detail["msg_id"]] = e
        elif e.action == "deliver":
            s = sends.get(e.detail["msg_id"])
            if s is None:
                return Verdict("delay-accounting", False, [e.idx],
                               "delivery without a matching send")
            if e.t != s.t + MESSAGE_DELAY:
                return Verdict("delay-accounting", False, [s.idx, e.idx],
                               f"message delay {e.t - s.t}")
    pending: Dict[tuple, list] = {}
    crash_t: Dict[str, int] = {}
    for e in trace.entries:
        if e.action == "fault" and e.detail["kind"] == "crash":
            crash_t.setdefault(e.actor, e.t)
        elif e.action == "invoke":
            if e.detail.get("lost"):
                continue
            pending.setdefault((e.actor, e.detail["memory"]), []).append(e)
        elif e.action == "complete":
            key = (e.detail["process"], e.actor)
            queue = pending.get(key, [])
            if not queue:
                return Verdict("delay-accounting", False, [e.idx],
                               "completion without invocation")
            inv = queue.pop(0)
            slot = inv.detail.get("register") or inv.detail.get("region")
            got = e.detail.get("register") or e.detail.get("region")
            if slot != got:
                return Verdict("delay-accounting", False, [inv.idx, e.idx],
                               "completion out of channel order")
            if e.t != inv.t + MEMORY_OP_DELAY:
                return Verdict("delay-accounting", False, [inv.idx, e.idx],
                               f"memory op delay {e.t - inv.t}")
    for (pid, mem), queue in sorted(pending.items()):
        for inv in queue:
            due = inv.t + MEMORY_OP_DELAY
            if mem in crash_t and crash_t[mem] <= due:
                continue  # swallowed by the crash
            if pid in crash_t:
                continue  # invoker crashed; channel died with it
            if trace.final_time < due:
                continue  # run ended first
            return Verdict("delay-accounting", False, [inv.idx],
                           f"op on live memory {mem} never completed")
    return Verdict("delay-accounting", True)


def check_crash_permanence(trace: Trace) -> Verdict:
    dead_at: Dict[str, int] = {}
    for e in trace.entries:
        if e.actor in dead_at and e.action != "fault":
            return Verdict("crash-permanence", False, [dead_at[e.actor], e.idx],
                           f"{e.actor} acted after crashing ({e.action})")
        if e.action == "fault" and e.detail["kind"] == "crash":
            dead_at[e.actor] = e.idx
    return Verdict("crash-permanence", True)


class _RegionState:
    __slots__ = ("prefix", "permission", "legal_change")

    def __init__(self, prefix, permission, legal_change):
        self.prefix = prefix
        self.permission = permission
        self.legal_change = legal_change


def _replay_regions(trace: Trace):
    regions: Dict[tuple, _RegionState] = {}
    for e in trace.entries:
        if e.action != "region":
            break
        d = e.detail
        regions[(e.actor, d["region"])] = _RegionState(
            d["prefix"], d["permission"], d["legal_change"])
    return regions


def _region_for(regions, memory: str, register: str):
    for (mem, _), st in regions.items():
        if mem == memory and register.startswith(st.prefix):
            return st
    return None


def check_permission_soundness(trace: Trace) -> Verdict:
    """Re-derive every ack/nak from an independent replay of the permission
    state; any divergence means the model enforced the wrong rule."""
    regions = _replay_regions(trace)
    for e in trace.entries:
        if e.action != "complete":
            continue
        d = e.detail
        if d["op"] == "write":
            st = _region_for(regions, e.actor, d["register"])
            want = "ack" if st and st.permission.can_write(d["process"]) else "nak"
            if d["status"] != want:
                return Verdict("permission-soundness", False, [e.idx],
                               f"write by {d['process']} got {d['status']}, "
                               f"permissions say {want}")
        elif d["op"] == "read":
            st = _region_for(regions, e.actor, d["register"])
            want = "ok" if st and st.permission.can_read(d["process"]) else "nak"
            if d["status"] != want:
                return Verdict("permission-soundness", False, [e.idx],
                               f"read by {d['process']} got {d['status']}, "
                               f"permissions say {want}")
        elif d["op"] == "change":
            st = regions.get((e.actor, d["region"]))
            if st is None:
                return Verdict("permission-soundness", False, [e.idx],
                               "change on unknown region")
            if d["applied"]:
                st.permission = d["permission"]
    return Verdict("permission-soundness", True)


def check_legal_change_gating(trace: Trace) -> Verdict:
    """The applied bit on every permission change must match the region's
    declared policy, replayed independently."""
    regions = _replay_regions(trace)
    universe = trace.config["processes"]
    for e in trace.entries:
        if e.action != "complete" or e.detail["op"] != "change":
            continue
        d = e.detail
        st = regions.get((e.actor, d["region"]))
        if st is None:
            return Verdict("legal-change", False, [e.idx], "unknown region")
        judge = LEGAL_CHANGE_POLICIES[st.legal_change]
        legal = judge(d["process"], universe, st.permission, d["permission"])
        if bool(d["applied"]) != legal:
            return Verdict("legal-change", False, [e.idx],
                           f"policy {st.legal_change} says legal={legal}, "
                           f"model applied={d['applied']}")
        if d["applied"]:
            st.permission = d["permission"]
    return Verdict("legal-change", True)


# -- broadcast --------------------------------------------------------------

def _deliveries(trace: Trace, who) -> Dict[tuple, bytes]:
    out = {}
    for e in notes(trace, "bc-deliver", who):
        out[(e.detail["sender"], e.detail["k"])] = e.detail["msg"]
    return out


def check_broadcast_delivery(trace: Trace) -> Verdict:
    """A correct sender's broadcast reaches every correct process."""
    correct = correct_processes(trace)
    for sender in correct:
        for e in notes(trace, "bc-broadcast", sender):
            key, msg = e.detail["k"], e.detail["msg"]
            for p in correct:
                got = _deliveries(trace, p).get((sender, key))
                if got != msg:
                    return Verdict(
                        "bc-delivery", False, [e.idx],
                        f"{p} missed ({sender},{key}) -> {got!r}")
    return Verdict("bc-delivery", True)


def check_broadcast_no_duplication(trace: Trace) -> Verdict:
    for p in correct_processes(trace):
        seen = set()
        for e in notes(trace, "bc-deliver", p):
            key = (e.detail["sender"], e.detail["k"])
            if key in seen:
                return Verdict("bc-no-duplication", False, [e.idx],
                               f"{p} delivered {key} twice")
            seen.add(key)
    return Verdict("bc-no-duplication", True)


def check_broadcast_integrity(trace: Trace) -> Verdict:
    """Anything delivered from a correct sender was actually sent by it."""
    correct = set(correct_processes(trace))
    sent = {}
    for q in correct:
        for e in notes(trace, "bc-broadcast", q):
            sent[(q, e.detail["k"])] = e.detail["msg"]
    for p in correct:
        for e in notes(trace, "bc-deliver", p):
            q, k = e.detail["sender"], e.detail["k"]
            if q in correct and sent.get((q, k)) != e.detail["msg"]:
                return Verdict("bc-integrity", False, [e.idx],
                               f"{p} delivered forged ({q},{k})")
    return Verdict("bc-integrity", True)


def check_broadcast_totality(trace: Trace) -> Verdict:
    """If one correct process delivers (q,k), all correct processes deliver
    the same message for (q,k) — Byzantine senders included."""
    correct = correct_processes(trace)
    per = {p: _deliveries(trace, p) for p in correct}
    keys = set()
    for d in per.values():
        keys.update(d)
    for key in sorted(keys):
        vals = {per[p].get(key) for p in correct}
        if len(vals) != 1:
            wit = [e.idx for p in correct for e in notes(trace, "bc-deliver", p)
                   if (e.detail["sender"], e.detail["k"]) == key]
            return Verdict("bc-totality", False, wit,
                           f"delivery of {key} diverged: {vals}")
    return Verdict("bc-totality", True)


def check_l2_uniqueness(trace: Trace) -> Verdict:
    """At most one certified message can exist per (sender, k): no two
    correct deliveries may ever disagree, no matter the schedule."""
    seen: Dict[tuple, bytes] = {}
    for p in correct_processes(trace):
        for e in notes(trace, "bc-deliver", p):
            key = (e.detail["sender"], e.detail["k"])
            if key in seen and seen[key] != e.detail["msg"]:
                return Verdict("l2-uniqueness", False, [e.idx],
                               f"two certified messages for {key}")
            seen.setdefault(key, e.detail["msg"])
    return Verdict("l2-uniqueness", True)


# -- fast path and composition ----------------------------------------------

def check_abort_agreement(trace: Trace) -> Verdict:
    """If any correct process decided v on the fast path, every correct
    abort carries v."""
    correct = set(correct_processes(trace))
    fast = [p for p in correct
            if any(e.detail.get("which") == "fast" for e in notes(trace, "path", p))]
    decided = {trace.decisions[p] for p in fast if p in trace.decisions}
    if not decided:
        return Verdict("abort-agreement", True, info="vacuous: no fast decision")
    v = next(iter(decided))
    for p in correct:
        for e in notes(trace, "cq-abort", p):
            if e.detail["value"] != v:
                return Verdict("abort-agreement", False, [e.idx],
                               f"{p} aborted with a different value")
    return Verdict("abort-agreement", True)


def check_composition(trace: Trace) -> Verdict:
    """A fast-path decision forces the backup onto the same value."""
    correct = set(correct_processes(trace))
    fast_vals = set()
    backup_vals = set()
    for p in correct:
        is_fast = any(e.detail.get("which") == "fast"
                      for e in notes(trace, "path", p))
        if is_fast and p in trace.decisions:
            fast_vals.add(trace.decisions[p])
        for e in notes(trace, "backup-decision", p):
            backup_vals.add(e.detail["value"])
        if not is_fast and p in trace.decisions:
            ran_backup = any(e.detail.get("which") == "backup"
                             for e in notes(trace, "path", p))
            if ran_backup:
                backup_vals.add(trace.decisions[p])
    if not fast_vals:
        return Verdict("composition", True, info="vacuous: no fast decision")
    if len(fast_vals) > 1:
        return Verdict("composition", False, [],
                       "fast path itself disagreed")
    if backup_vals and backup_vals != fast_vals:
        wit = [e.idx for e in trace.entries if e.action == "backup-decision"]
        return Verdict("composition", False, wit,
                       f"backup {backup_vals} != fast {fast_vals}")
    return Verdict("composition", True)


def priority_decision_checker(ranks: dict, f: int) -> Callable[[Trace], Verdict]:
    """Decision must sit within the top f+1 priority inputs (oracle-checked)."""
    scheme = LabelPriority(ranks)

    def check(trace: Trace) -> Verdict:
        inputs = [(p, v, b"") for p, v in sorted(trace.inputs.items())]
        if not inputs:
            return Verdict("priority-decision", True, info="vacuous: no inputs")
        allowed = eligible_values(scheme, inputs, f)
        for p in correct_processes(trace):
            v = trace.decisions.get(p)
            if v is not None and v not in allowed:
                wit = [e.idx for e in trace.entries
                       if e.action == "decide" and e.actor == p]
                return Verdict("priority-decision", False, wit,
                               f"{p} decided outside top f+1 priorities")
        return Verdict("priority-decision", True)

    return check


MODEL_CHECKS = [check_delay_accounting, check_crash_permanence,
                check_permission_soundness, check_legal_change_gating]

CONSENSUS_CHECKS = [check_agreement, check_validity, check_termination]

BROADCAST_CHECKS = [check_broadcast_delivery, check_broadcast_no_duplication,
                    check_broadcast_integrity, check_broadcast_totality,
                    check_l2_uniqueness]


def run_checks(trace: Trace, checks) -> List[Verdict]:
    return [c(trace) for c in checks]
