"""Deterministic discrete-event core for message-and-memory executions.

Virtual time is measured in delay units: a message costs exactly one
delay between send and delivery, a memory operation exactly two between
invocation and completion, and local computation is free. Events at the
same timestamp fire in FIFO order in synchronous mode and in an order
drawn from a seeded choice source in asynchronous mode; that tie order
is the only scheduling nondeterminism, which keeps runs bit-identical
per (config, protocol, faults, inputs, seed) and makes the schedule
space enumerable for small instances.

Protocol actors are generator lanes owned by a process. A lane blocks
by yielding an effect (single memory op, quorum of ops, sleep, message
wait, gate wait) and is resumed with the effect's result. Memory state
changes exactly once per operation, at the completion event, which is
the operation's linearization point. A process may have many lanes, but
ops to one memory are funneled through a per-(process, memory) channel
so the model rule of one outstanding operation per memory always holds.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Generator, Iterable, Optional

from .errors import ContractViolation, ScenarioError
from .memory import Memory, Permission
from .signing import SignatureOracle, SignedValue

MESSAGE_DELAY = 1
MEMORY_OP_DELAY = 2


class EventKind(str, Enum):
    STEP = "step"
    DELIVERY = "message-delivery"
    COMPLETION = "memory-op-completion"
    TIMER = "timer-expiry"
    FAULT = "fault"


@dataclass
class Event:
    kind: EventKind
    target: str
    ready_at: int
    seq: int
    payload: object
    apply: Callable[[], None]


@dataclass
class TraceEntry:
    idx: int
    t: int
    actor: str
    action: str
    detail: dict

    def to_dict(self) -> dict:
        detail = {}
        for k, v in self.detail.items():
            if isinstance(v, bytes):
                detail[k] = v.hex()
            elif isinstance(v, Permission):
                detail[k] = v.to_dict()
            else:
                detail[k] = v
        return {"idx": self.idx, "t": self.t, "actor": self.actor,
                "action": self.action, "detail": detail}


@dataclass
class Trace:
    seed: int
    mode: str
    entries: list = field(default_factory=list)
    decisions: dict = field(default_factory=dict)
    decision_delay: dict = field(default_factory=dict)
    faulty_processes: dict = field(default_factory=dict)  # pid -> kind
    crashed_memories: list = field(default_factory=list)
    budget_exhausted: bool = False
    horizon_reached: bool = False
    events_fired: int = 0
    final_time: int = 0
    inputs: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def correct_processes(self) -> list:
        return [p for p in self.config.get("processes", ())
                if p not in self.faulty_processes]

    def find(self, action: str, actor: str | None = None):
        for e in self.entries:
            if e.action == action and (actor is None or e.actor == actor):
                yield e

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "mode": self.mode,
            "entries": [e.to_dict() for e in self.entries],
            "decisions": {p: v.hex() for p, v in sorted(self.decisions.items())},
            "decision_delay": dict(sorted(self.decision_delay.items())),
            "faulty_processes": dict(sorted(self.faulty_processes.items())),
            "crashed_memories": sorted(self.crashed_memories),
            "budget_exhausted": self.budget_exhausted,
            "horizon_reached": self.horizon_reached,
            "events_fired": self.events_fired,
            "final_time": self.final_time,
            "inputs": {p: v.hex() for p, v in sorted(self.inputs.items())},
            "config": self.config,
        }


@dataclass
class SystemConfig:
    n: int
    m: int = 0
    f_p: int = 0
    f_m: int = 0
    byzantine: bool = False
    links: bool = True
    mode: str = "sync"  # "sync" | "async"
    delta: int = 40
    seed: int = 0
    budget: int = 1_000_000
    horizon: Optional[int] = None
    drain: int = 0  # extra virtual time to run after all correct processes decided

    def __post_init__(self):
        if self.n < 1:
            raise ScenarioError("system.n", "need at least one process")
        if self.m < 0 or self.f_p < 0 or self.f_m < 0:
            raise ScenarioError("system", "negative counts")
        if self.byzantine and self.n < 2 * self.f_p + 1:
            raise ScenarioError("system.n", f"Byzantine tolerance needs n >= 2*f_p+1, got n={self.n}, f_p={self.f_p}")
        if not self.byzantine and self.n < self.f_p + 1:
            raise ScenarioError("system.n", f"crash tolerance needs n >= f_p+1, got n={self.n}, f_p={self.f_p}")
        if self.f_m > self.m:
            raise ScenarioError("system.m", f"cannot budget {self.f_m} memory crashes with m={self.m}")
        # NOTE: the usual m >= 2*f_m+1 bound is a per-protocol precondition,
        # not a model rule — the combined-quorum protocol runs below it.
        if self.mode not in ("sync", "async"):
            raise ScenarioError("mode", f"unknown mode {self.mode!r}")
        if self.delta < 1:
            raise ScenarioError("system.delta", "delta must be positive")

    @property
    def processes(self) -> list:
        return [f"p{i}" for i in range(1, self.n + 1)]

    @property
    def memories(self) -> list:
        return [f"m{i}" for i in range(1, self.m + 1)]

    def to_dict(self) -> dict:
        return {
            "n": self.n, "m": self.m, "f_p": self.f_p, "f_m": self.f_m,
            "byzantine": self.byzantine, "links": self.links, "mode": self.mode,
            "delta": self.delta, "budget": self.budget, "horizon": self.horizon,
            "drain": self.drain, "processes": self.processes, "memories": self.memories,
        }


@dataclass
class FaultSpec:
    target: str
    kind: str  # "crash" or an adversary script name
    at: Optional[int] = None
    after: Optional[tuple] = None  # (actor, action, nth) trace-predicate trigger

    def __post_init__(self):
        if (self.at is None) == (self.after is None):
            raise ScenarioError("faults", "exactly one of at/after required")


@dataclass
class OmegaSchedule:
    """Leader-oracle timeline: after stabilization every query returns the
    timeline entry in force; before it, an adversarial schedule may answer
    with any currently-live process."""

    timeline: list = field(default_factory=lambda: [(0, "p1")])
    stabilization: int = 0
    adversarial: bool = False

    def leader_at(self, t: int) -> str:
        current = self.timeline[0][1]
        for when, pid in self.timeline:
            if when <= t:
                current = pid
            else:
                break
        return current


# ---------------------------------------------------------------------------
# choice sources: where tie-break nondeterminism comes from

class SeededChoice:
    def __init__(self, seed: int):
        self._rng = random.Random(seed)

    def pick(self, n: int) -> int:
        return self._rng.randrange(n) if n > 1 else 0


class FifoChoice:
    def pick(self, n: int) -> int:
        return 0


class TrailChoice:
    """Replays a forced prefix of tie choices and logs every branch factor.

    The log is what lets a driver enumerate schedules: position j had
    `log[j]` candidates, so sibling schedules substitute 1..log[j]-1 at j.
    """

    def __init__(self, trail: Iterable[int] = ()):
        self.trail = list(trail)
        self.log: list = []

    def pick(self, n: int) -> int:
        pos = len(self.log)
        self.log.append(n)
        if pos < len(self.trail):
            return min(self.trail[pos], n - 1)
        return 0


def enumerate_trails(run_with_trail: Callable[[list], list], max_branch_points: int,
                     max_runs: int = 100_000) -> int:
    """Depth-first enumeration of tie-break schedules.

    `run_with_trail(trail)` must execute one simulation with the given
    forced choices and return the branch-factor log. Only the first
    `max_branch_points` choice points are branched on; beyond them every
    run takes the default order. Returns the number of runs executed.
    """
    runs = 0

    def visit(trail: list):
        nonlocal runs
        if runs >= max_runs:
            raise ContractViolation(f"schedule enumeration exceeded {max_runs} runs")
        log = run_with_trail(trail)
        runs += 1
        limit = min(len(log), max_branch_points)
        for j in range(len(trail), limit):
            for v in range(1, log[j]):
                visit(trail + [0] * (j - len(trail)) + [v])

    visit([])
    return runs


# ---------------------------------------------------------------------------
# effects yielded by protocol lanes

@dataclass(frozen=True)
class MemOp:
    kind: str  # "write" | "read" | "change"
    memory: str
    register: Optional[str] = None
    region: Optional[str] = None
    value: Optional[bytes] = None
    permission: Optional[Permission] = None


@dataclass(frozen=True)
class OpResult:
    memory: str
    status: str  # "ack" | "nak" | "ok" | "done"
    value: Optional[bytes] = None


class Invoke:
    __slots__ = ("op",)

    def __init__(self, op: MemOp):
        self.op = op


class Gather:
    """Issue several ops (different memories) and resume once `decide`
    returns non-None over the completions so far. Late completions still
    linearize and appear in the trace; their results are dropped."""

    __slots__ = ("ops", "decide")

    def __init__(self, ops: list, decide: Callable[[list], object]):
        self.ops = ops
        self.decide = decide


class Sleep:
    __slots__ = ("duration",)

    def __init__(self, duration: int):
        if duration < 1:
            raise ContractViolation("sleep needs positive duration")
        self.duration = duration


class Recv:
    __slots__ = ("timeout", "match")

    def __init__(self, timeout: Optional[int] = None, match: Optional[Callable] = None):
        self.timeout = timeout
        self.match = match


class Gate:
    """One-shot broadcast signal local to a process."""

    __slots__ = ("_set", "_waiters")

    def __init__(self):
        self._set = False
        self._waiters = []

    def is_set(self) -> bool:
        return self._set


class WaitGate:
    __slots__ = ("gate",)

    def __init__(self, gate: Gate):
        self.gate = gate


@dataclass
class Message:
    msg_id: int
    sender: str
    to: str
    payload: bytes
    sent_at: int


class Lane:
    __slots__ = ("lane_id", "gen", "rt", "alive")

    def __init__(self, lane_id: str, gen: Generator, rt: "ProcessRuntime"):
        self.lane_id = lane_id
        self.gen = gen
        self.rt = rt
        self.alive = True


class _Channel:
    """Per-(process, memory) op funnel: one outstanding, rest queued."""

    __slots__ = ("busy", "backlog")

    def __init__(self):
        self.busy = False
        self.backlog = deque()


class _GatherCtx:
    __slots__ = ("lane", "decide", "results", "done")

    def __init__(self, lane, decide):
        self.lane = lane
        self.decide = decide
        self.results = []
        self.done = False


class ProcessRuntime:
    """A process's handle on the world: its lanes act only through this."""

    def __init__(self, sim: "Simulation", pid: str):
        self.sim = sim
        self.pid = pid
        self.mailbox = deque()
        self.crashed = False
        self.byzantine = False
        self.lanes: list = []
        self._recv_waiters: list = []  # [lane, match, armed_flag_list]
        self._channels = {mid: _Channel() for mid in sim.config.memories}
        self._lane_counter = 0
        self._rep_written: set = set()

    # -- immediate (zero-delay) calls -------------------------------------

    @property
    def now(self) -> int:
        return self.sim.now

    @property
    def config(self) -> SystemConfig:
        return self.sim.config

    @property
    def processes(self) -> list:
        return self.sim.config.processes

    @property
    def memory_ids(self) -> list:
        return self.sim.config.memories

    def send(self, to: str, payload: bytes) -> None:
        self.sim.send_message(self, to, payload)

    def try_receive(self, match: Optional[Callable] = None) -> Optional[Message]:
        for i, msg in enumerate(self.mailbox):
            if match is None or match(msg):
                del self.mailbox[i]
                return msg
        return None

    def omega(self) -> str:
        return self.sim.omega_query(self.pid)

    def sign(self, payload: bytes) -> SignedValue:
        return self.sim.signer.sign(self.pid, payload)

    def svalid(self, sv: SignedValue) -> bool:
        return self.sim.signer.valid(sv)

    def svalid_from(self, signer: str, sv: SignedValue) -> bool:
        return self.sim.signer.valid_from(signer, sv)

    def decide(self, value: bytes) -> None:
        self.sim.record_decision(self, value)

    def note(self, action: str, **detail) -> None:
        self.sim.append(self.pid, action, detail)

    def spawn(self, gen: Generator, name: str = "lane") -> Lane:
        self._lane_counter += 1
        lane = Lane(f"{self.pid}/{name}#{self._lane_counter}", gen, self)
        self.lanes.append(lane)
        self.sim.schedule_step(lane)
        return lane

    def cancel(self, lane: Lane) -> None:
        lane.alive = False

    def gate(self) -> Gate:
        return Gate()

    def open_gate(self, gate: Gate) -> None:
        if gate._set:
            return
        gate._set = True
        for lane in gate._waiters:
            self.sim.schedule_step(lane)
        gate._waiters.clear()

    # -- effect builders (must be yielded) ---------------------------------

    def write(self, memory: str, register: str, value: bytes) -> Invoke:
        return Invoke(MemOp("write", memory, register=register, value=value))

    def read(self, memory: str, register: str) -> Invoke:
        return Invoke(MemOp("read", memory, register=register))

    def change_permission(self, memory: str, region: str, permission: Permission) -> Invoke:
        return Invoke(MemOp("change", memory, region=region, permission=permission))

    def op_write(self, memory: str, register: str, value: bytes) -> MemOp:
        return MemOp("write", memory, register=register, value=value)

    def op_read(self, memory: str, register: str) -> MemOp:
        return MemOp("read", memory, register=register)

    def op_change(self, memory: str, region: str, permission: Permission) -> MemOp:
        return MemOp("change", memory, region=region, permission=permission)

    def gather(self, ops: list, decide: Callable[[list], object]) -> Gather:
        return Gather(ops, decide)

    def sleep(self, duration: int) -> Sleep:
        return Sleep(duration)

    def recv(self, timeout: Optional[int] = None, match: Optional[Callable] = None) -> Recv:
        return Recv(timeout, match)

    def wait(self, gate: Gate) -> WaitGate:
        return WaitGate(gate)


@dataclass
class ProtocolBinding:
    """What run() needs to know about a protocol.

    setup builds regions and initial registers; main yields one generator
    per process; adversary_context supplies whatever a Byzantine script
    needs to aim its behaviour at this protocol's register layout.
    """

    name: str
    setup: Callable[["Simulation"], None]
    main: Callable[[ProcessRuntime, bytes], Generator]
    adversary_context: Optional[Callable[["Simulation", str], object]] = None


class Simulation:
    def __init__(self, config: SystemConfig, protocol: ProtocolBinding,
                 faults: Iterable[FaultSpec] = (), inputs: Optional[dict] = None,
                 omega: Optional[OmegaSchedule] = None,
                 scripts: Optional[dict] = None,
                 choice=None):
        self.config = config
        self.protocol = protocol
        self.faults = list(faults)
        self.inputs = dict(inputs or {})
        self.omega = omega or OmegaSchedule()
        self.scripts = dict(scripts or {})
        self._validate_faults()

        self.now = 0
        self._seq = 0
        self._buckets: dict = {}
        self._times: list = []  # sorted unique times, maintained via heapq
        self.signer = SignatureOracle(config.seed)
        if choice is not None:
            self.choice = choice
        elif config.mode == "sync":
            self.choice = FifoChoice()
        else:
            self.choice = SeededChoice(config.seed)
        self.rng = random.Random((config.seed << 1) ^ 0x5EED)

        self.memories = {mid: Memory(mid, config.processes) for mid in config.memories}
        self.runtimes = {pid: ProcessRuntime(self, pid) for pid in config.processes}
        self.trace = Trace(seed=config.seed, mode=config.mode,
                           inputs=dict(self.inputs), config=config.to_dict())
        for f in self.faults:
            if f.target.startswith("p"):
                self.trace.faulty_processes[f.target] = f.kind
            else:
                self.trace.crashed_memories.append(f.target)
        self._msg_counter = 0
        self._pending_predicates = [f for f in self.faults if f.after is not None]
        self._undecided_correct = {p for p in config.processes
                                   if p not in self.trace.faulty_processes}
        self._all_decided_at: Optional[int] = 0 if not self._undecided_correct else None

    # -- validation --------------------------------------------------------

    def _validate_faults(self):
        cfg = self.config
        proc_targets = set()
        mem_targets = set()
        for f in self.faults:
            if f.target in cfg.processes:
                if f.target in proc_targets:
                    raise ScenarioError("faults", f"duplicate fault target {f.target}")
                proc_targets.add(f.target)
                if f.kind != "crash":
                    if not cfg.byzantine:
                        raise ScenarioError(
                            "faults", f"script fault {f.kind!r} on {f.target} in a crash-only configuration")
                    if f.kind not in self.scripts:
                        raise ScenarioError("faults", f"unknown adversary script {f.kind!r}")
            elif f.target in cfg.memories:
                if f.target in mem_targets:
                    raise ScenarioError("faults", f"duplicate fault target {f.target}")
                mem_targets.add(f.target)
                if f.kind != "crash":
                    raise ScenarioError("faults", f"memories can only crash, got {f.kind!r} for {f.target}")
            else:
                raise ScenarioError("faults", f"unknown fault target {f.target!r}")
        if len(proc_targets) > cfg.f_p:
            raise ScenarioError("faults", f"{len(proc_targets)} process faults exceed f_p={cfg.f_p}")
        if len(mem_targets) > cfg.f_m:
            raise ScenarioError("faults", f"{len(mem_targets)} memory faults exceed f_m={cfg.f_m}")

    # -- trace -------------------------------------------------------------

    def append(self, actor: str, action: str, detail: dict) -> TraceEntry:
        entry = TraceEntry(len(self.trace.entries), self.now, actor, action, detail)
        self.trace.entries.append(entry)
        if self._pending_predicates:
            self._check_predicates(entry)
        return entry

    def _check_predicates(self, entry: TraceEntry):
        fired = []
        for f in self._pending_predicates:
            actor, action, nth = f.after
            if entry.actor == actor and entry.action == action:
                remaining = nth - 1
                f.after = (actor, action, remaining)
                if remaining <= 0:
                    fired.append(f)
                    self._schedule(EventKind.FAULT, f.target, self.now, f,
                                   lambda f=f: self._apply_fault(f))
        for f in fired:
            self._pending_predicates.remove(f)

    # -- event plumbing ------------------------------------------------------

    def _schedule(self, kind: EventKind, target: str, at: int, payload, apply):
        self._seq += 1
        ev = Event(kind, target, at, self._seq, payload, apply)
        bucket = self._buckets.get(at)
        if bucket is None:
            self._buckets[at] = [ev]
            heapq.heappush(self._times, at)
        else:
            bucket.append(ev)

    def schedule_step(self, lane: Lane, at: Optional[int] = None):
        self._schedule(EventKind.STEP, lane.lane_id, self.now if at is None else at,
                       lane, lambda: self._drive(lane, None))

    def send_message(self, rt: ProcessRuntime, to: str, payload: bytes):
        if not self.config.links:
            raise ContractViolation("message send in a no-links configuration")
        if to not in self.runtimes:
            raise ContractViolation(f"unknown recipient {to!r}")
        self._msg_counter += 1
        msg = Message(self._msg_counter, rt.pid, to, payload, self.now)
        self.append(rt.pid, "send", {"to": to, "msg_id": msg.msg_id, "payload": payload})
        self._schedule(EventKind.DELIVERY, to, self.now + MESSAGE_DELAY, msg,
                       lambda: self._deliver(msg))

    def _deliver(self, msg: Message):
        rt = self.runtimes[msg.to]
        if rt.crashed:
            return
        self.append(msg.to, "deliver", {"from": msg.sender, "msg_id": msg.msg_id,
                                        "sent_at": msg.sent_at, "payload": msg.payload})
        for waiter in rt._recv_waiters:
            lane, match, armed = waiter
            if not armed[0] or not lane.alive:
                continue
            if match is None or match(msg):
                armed[0] = False
                self._drive(lane, msg)
                return
        rt.mailbox.append(msg)

    # -- memory ops ----------------------------------------------------------

    def _issue(self, rt: ProcessRuntime, op: MemOp, ctx):
        ch = rt._channels[op.memory]
        if ch.busy:
            ch.backlog.append((op, ctx))
        else:
            self._invoke_now(rt, op, ctx)

    def _invoke_now(self, rt: ProcessRuntime, op: MemOp, ctx):
        rt._channels[op.memory].busy = True
        self.raw_invoke(rt.pid, op, ctx)

    def raw_invoke(self, pid: str, op: MemOp, ctx):
        """Model-level invocation; one outstanding op per (process, memory)."""
        mem = self.memories[op.memory]
        detail = {"op": op.kind, "memory": op.memory}
        if op.register is not None:
            detail["register"] = op.register
        if op.region is not None:
            detail["region"] = op.region
        if op.value is not None:
            detail["value"] = op.value
        if op.permission is not None:
            detail["permission"] = op.permission
        if mem.crashed:
            detail["lost"] = True
            self.append(pid, "invoke", detail)
            return  # never completes; channel stays busy forever
        if pid in mem.outstanding:
            raise ContractViolation(
                f"{pid} already has an outstanding operation on {op.memory}")
        mem.outstanding.add(pid)
        self.append(pid, "invoke", detail)
        self._schedule(EventKind.COMPLETION, op.memory, self.now + MEMORY_OP_DELAY,
                       op, lambda: self._complete(pid, op, ctx))

    def _complete(self, pid: str, op: MemOp, ctx):
        mem = self.memories[op.memory]
        if mem.crashed:
            return  # hung forever; no linearization, no response
        mem.outstanding.discard(pid)
        if op.kind == "write":
            status = mem.apply_write(pid, op.register, op.value)
            result = OpResult(op.memory, status)
            detail = {"op": "write", "process": pid, "register": op.register,
                      "value": op.value, "status": status}
        elif op.kind == "read":
            status, value = mem.apply_read(pid, op.register)
            result = OpResult(op.memory, status, value)
            detail = {"op": "read", "process": pid, "register": op.register,
                      "status": status, "value": value}
        else:
            applied = mem.apply_change(pid, op.region, op.permission)
            result = OpResult(op.memory, "done")
            detail = {"op": "change", "process": pid, "region": op.region,
                      "permission": op.permission, "applied": applied}
        self.append(op.memory, "complete", detail)

        rt = self.runtimes[pid]
        ch = rt._channels[op.memory]
        ch.busy = False
        if ch.backlog and not rt.crashed:
            nxt_op, nxt_ctx = ch.backlog.popleft()
            self._invoke_now(rt, nxt_op, nxt_ctx)

        if isinstance(ctx, _GatherCtx):
            ctx.results.append(result)
            if ctx.done or not ctx.lane.alive:
                return
            verdict = ctx.decide(ctx.results)
            if verdict is not None:
                ctx.done = True
                self._drive(ctx.lane, verdict)
        elif isinstance(ctx, Lane):
            if ctx.alive:
                self._drive(ctx, result)

    # -- omega / decisions / faults -------------------------------------------

    def omega_query(self, asker: str) -> str:
        rt = self.runtimes[asker]
        if rt.crashed:
            raise ContractViolation(f"crashed process {asker} queried omega")
        om = self.omega
        if om.adversarial and self.now < om.stabilization:
            alive = [p for p in self.config.processes if not self.runtimes[p].crashed]
            return alive[self.rng.randrange(len(alive))]
        return om.leader_at(self.now)

    def record_decision(self, rt: ProcessRuntime, value: bytes):
        pid = rt.pid
        prior = self.trace.decisions.get(pid)
        if prior is not None:
            if prior != value and not rt.byzantine:
                raise ContractViolation(f"{pid} decided twice with different values")
            return
        self.trace.decisions[pid] = value
        self.trace.decision_delay[pid] = self.now
        self.append(pid, "decide", {"value": value})
        self._undecided_correct.discard(pid)
        if not self._undecided_correct and self._all_decided_at is None:
            self._all_decided_at = self.now

    def _apply_fault(self, f: FaultSpec):
        if f.target in self.memories:
            self.memories[f.target].crashed = True
            self.append(f.target, "fault", {"kind": "crash"})
            return
        rt = self.runtimes[f.target]
        for lane in rt.lanes:
            lane.alive = False
        rt.lanes.clear()
        rt._recv_waiters.clear()
        for ch in rt._channels.values():
            ch.backlog.clear()
        if f.kind == "crash":
            rt.crashed = True
            rt.mailbox.clear()
            self.append(f.target, "fault", {"kind": "crash"})
        else:
            rt.byzantine = True
            self.append(f.target, "fault", {"kind": "byzantine", "script": f.kind})
            script = self.scripts[f.kind]
            ctx = None
            if self.protocol.adversary_context is not None:
                ctx = self.protocol.adversary_context(self, f.target)
            rt.spawn(script(rt, ctx), name=f.kind)

    # -- lane driving ----------------------------------------------------------

    def _drive(self, lane: Lane, value):
        while True:
            if not lane.alive or lane.rt.crashed:
                return
            try:
                eff = lane.gen.send(value)
            except StopIteration:
                lane.alive = False
                return
            ready, value = self._install(lane, eff)
            if not ready:
                return

    def _install(self, lane: Lane, eff):
        rt = lane.rt
        if isinstance(eff, Invoke):
            self._issue(rt, eff.op, lane)
            return False, None
        if isinstance(eff, Gather):
            ctx = _GatherCtx(lane, eff.decide)
            for op in eff.ops:
                self._issue(rt, op, ctx)
            return False, None
        if isinstance(eff, Sleep):
            self._schedule(EventKind.TIMER, lane.lane_id, self.now + eff.duration,
                           None, lambda: self._drive(lane, None))
            return False, None
        if isinstance(eff, Recv):
            msg = rt.try_receive(eff.match)
            if msg is not None:
                return True, msg
            armed = [True]
            rt._recv_waiters.append((lane, eff.match, armed))
            if eff.timeout is not None:
                def expire():
                    if armed[0] and lane.alive:
                        armed[0] = False
                        self._drive(lane, None)
                self._schedule(EventKind.TIMER, lane.lane_id,
                               self.now + eff.timeout, None, expire)
            return False, None
        if isinstance(eff, WaitGate):
            if eff.gate._set:
                return True, None
            eff.gate._waiters.append(lane)
            return False, None
        raise ContractViolation(f"lane {lane.lane_id} yielded {eff!r}")

    # -- main loop ---------------------------------------------------------------

    def run(self) -> Trace:
        # Region table first: permission checkers replay the trace from here.
        for mid in self.config.memories:
            for region in self.memories[mid].regions:
                self.append(mid, "region", {
                    "region": region.region_id, "prefix": region.prefix,
                    "permission": region.permission,
                    "legal_change": region.legal_change})
        # Faults scheduled before main lanes so a t=0 fault takes effect
        # before the victim's first step; later faults interleave normally.
        faulted_at_zero = set()
        for f in self.faults:
            if f.at is not None:
                self._schedule(EventKind.FAULT, f.target, f.at, f,
                               lambda f=f: self._apply_fault(f))
                if f.at == 0:
                    faulted_at_zero.add(f.target)
        for pid in self.config.processes:
            if pid in faulted_at_zero:
                continue
            rt = self.runtimes[pid]
            value = self.inputs.get(pid)
            rt.spawn(self.protocol.main(rt, value), name="main")

        cfg = self.config
        fired = 0
        while self._times:
            t = self._times[0]
            bucket = self._buckets.get(t)
            if not bucket:
                heapq.heappop(self._times)
                self._buckets.pop(t, None)
                continue
            if cfg.horizon is not None and t > cfg.horizon:
                self.trace.horizon_reached = True
                break
            if self._all_decided_at is not None and t > self._all_decided_at + cfg.drain:
                break
            self.now = t
            idx = self.choice.pick(len(bucket)) if len(bucket) > 1 else 0
            ev = bucket.pop(idx)
            fired += 1
            ev.apply()
            if fired >= cfg.budget:
                self.trace.budget_exhausted = True
                break

        self.trace.events_fired = fired
        self.trace.final_time = self.now
        return self.trace

    # convenience for protocol setup code
    def preset_register(self, memory: str, register: str, value: bytes):
        mem = self.memories[memory]
        region = mem.region_of(register)
        region.registers.add(register)
        mem.registers[register] = value


def run(config: SystemConfig, protocol: ProtocolBinding,
        faults: Iterable[FaultSpec] = (), inputs: Optional[dict] = None,
        omega: Optional[OmegaSchedule] = None, scripts: Optional[dict] = None,
        choice=None) -> Trace:
    sim = Simulation(config, protocol, faults, inputs, omega, scripts, choice)
    sim.protocol.setup(sim)
    return sim.run()
