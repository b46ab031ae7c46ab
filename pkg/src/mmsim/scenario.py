"""Scenario files: declarative experiment descriptions.

A scenario is a TOML document:

    name = "fast path, one silent byzantine"
    protocol = "fast-robust"          # registry name

    [system]                          # SystemConfig fields
    n = 3
    m = 3
    f_p = 1
    f_m = 1
    byzantine = true
    mode = "sync"                     # or "async"
    horizon = 3000                    # optional hard stop (virtual time)
    drain = 200                       # extra time after all correct decided

    [inputs]                          # hex-encoded, per process
    p1 = "41"
    p2 = "42"
    p3 = "43"

    [[faults]]
    target = "p3"
    kind = "silent"                   # "crash" or an adversary script
    at = 0                            # or after = ["p1", "decide", 1]

    [omega]
    timeline = [[0, "p1"]]            # default: first never-faulted process
    stabilization = 0
    adversarial = false

    [run]
    seeds = [0, 1, 2]                 # or seed_count = 500 (+ seed_base)
    repetitions = 1                   # >1 re-runs each seed and demands
                                      # bit-identical traces

    [protocol_params]                 # protocol-specific knobs
    permissions = true                # aligned-paxos variant switch
    f = 1                             # preferential-paxos priority bound
    [protocol_params.ranks]           # preferential-paxos: hex value -> rank
    41 = 3

Loading validates everything it can before any run: unknown fields,
bad hex, unknown processes, script names, and the protocol's own
resilience preconditions.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import List, Optional

import tomli

from .adversaries import SCRIPTS
from .errors import ScenarioError
from .properties import Verdict
from .protocols import PROTOCOLS, ProtocolEntry
from .sim import FaultSpec, OmegaSchedule, Simulation, SystemConfig, Trace

_SYSTEM_FIELDS = {f.name for f in dataclasses.fields(SystemConfig)}


@dataclass
class Scenario:
    name: str
    protocol: str
    config: SystemConfig
    inputs: dict
    faults: List[FaultSpec]
    omega: OmegaSchedule
    seeds: List[int]
    repetitions: int = 1
    params: dict = field(default_factory=dict)

    @property
    def entry(self) -> ProtocolEntry:
        return PROTOCOLS[self.protocol]


def _table(doc: dict, key: str, default=None):
    val = doc.get(key, default if default is not None else {})
    if not isinstance(val, dict):
        raise ScenarioError(key, "expected a table")
    return val


def load_scenario_text(text: str, name_hint: str = "<inline>") -> Scenario:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(name_hint, f"parse error: {exc}") from None
    return _build(doc, name_hint)


def load_scenario(path: str) -> Scenario:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        doc = tomli.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, tomli.TOMLDecodeError) as exc:
        raise ScenarioError(path, f"parse error: {exc}") from None
    return _build(doc, path)


def _build(doc: dict, origin: str) -> Scenario:
    protocol = doc.get("protocol")
    if protocol not in PROTOCOLS:
        raise ScenarioError(
            "protocol", f"unknown protocol {protocol!r}; "
            f"choose from {sorted(PROTOCOLS)}")
    entry = PROTOCOLS[protocol]

    system = _table(doc, "system")
    unknown = set(system) - _SYSTEM_FIELDS
    if unknown:
        raise ScenarioError("system", f"unknown fields {sorted(unknown)}")
    config = SystemConfig(**system)
    entry.precheck(config)

    inputs = {}
    for pid, hexval in _table(doc, "inputs").items():
        if pid not in config.processes:
            raise ScenarioError(f"inputs.{pid}", "not a process of this system")
        try:
            inputs[pid] = bytes.fromhex(hexval)
        except (ValueError, TypeError):
            raise ScenarioError(f"inputs.{pid}",
                                f"not a hex string: {hexval!r}") from None
    if protocol != "reliable-broadcast" and inputs:
        missing = [p for p in config.processes if p not in inputs]
        if missing:
            raise ScenarioError("inputs",
                                f"consensus scenarios need every input; "
                                f"missing {missing}")

    faults = []
    for i, f in enumerate(doc.get("faults", [])):
        if not isinstance(f, dict):
            raise ScenarioError(f"faults[{i}]", "expected a table")
        extra = set(f) - {"target", "kind", "at", "after"}
        if extra:
            raise ScenarioError(f"faults[{i}]", f"unknown fields {sorted(extra)}")
        after = f.get("after")
        if after is not None:
            if (not isinstance(after, list) or len(after) != 3):
                raise ScenarioError(f"faults[{i}].after",
                                    "expected [actor, action, nth]")
            after = (after[0], after[1], int(after[2]))
        kind = f.get("kind", "crash")
        if kind != "crash" and kind not in SCRIPTS:
            raise ScenarioError(f"faults[{i}].kind",
                                f"unknown adversary script {kind!r}")
        faults.append(FaultSpec(target=f.get("target", ""), kind=kind,
                                at=f.get("at"), after=after))

    om = _table(doc, "omega")
    if "timeline" in om:
        timeline = [(int(t), pid) for t, pid in om["timeline"]]
    else:
        # the leader oracle must eventually name a correct process, so the
        # default stable leader is the first process the fault plan spares
        targets = {f.target for f in faults}
        spared = [p for p in config.processes if p not in targets]
        timeline = [(0, spared[0] if spared else "p1")]
    for t, pid in timeline:
        if pid not in config.processes:
            raise ScenarioError("omega.timeline", f"unknown process {pid!r}")
    omega = OmegaSchedule(timeline=timeline,
                          stabilization=int(om.get("stabilization", 0)),
                          adversarial=bool(om.get("adversarial", False)))

    run = _table(doc, "run")
    if "seeds" in run:
        seeds = [int(s) for s in run["seeds"]]
    else:
        base = int(run.get("seed_base", 0))
        seeds = list(range(base, base + int(run.get("seed_count", 1))))
    if not seeds:
        raise ScenarioError("run.seeds", "need at least one seed")
    repetitions = int(run.get("repetitions", 1))
    if repetitions < 1:
        raise ScenarioError("run.repetitions", "must be >= 1")

    params = _table(doc, "protocol_params")

    scenario = Scenario(name=doc.get("name", origin), protocol=protocol,
                        config=config, inputs=inputs, faults=faults,
                        omega=omega, seeds=seeds, repetitions=repetitions,
                        params=params)
    # surface fault-plan problems (duplicate targets, budget overruns,
    # scripts in crash-only worlds) now rather than mid-run
    _probe(scenario)
    entry.checks(params, config)
    return scenario


def _probe(s: Scenario) -> None:
    Simulation(dataclasses.replace(s.config, seed=s.seeds[0]),
               s.entry.binding(s.params), faults=s.faults, inputs=s.inputs,
               omega=s.omega, scripts=SCRIPTS)


@dataclass
class RunResult:
    seed: int
    repetition: int
    trace: Trace
    verdicts: List[Verdict]

    @property
    def ok(self) -> bool:
        return all(v.ok for v in self.verdicts)


def canonical_trace(trace: Trace) -> str:
    """Stable serialization for determinism comparisons."""
    return json.dumps(trace.to_dict(), sort_keys=True, default=str)


def run_once(s: Scenario, seed: int) -> Trace:
    sim = Simulation(dataclasses.replace(s.config, seed=seed),
                     s.entry.binding(s.params), faults=s.faults,
                     inputs=s.inputs, omega=s.omega, scripts=SCRIPTS)
    sim.protocol.setup(sim)
    return sim.run()


def run_scenario(s: Scenario) -> List[RunResult]:
    checks = s.entry.checks(s.params, s.config)
    results = []
    for seed in s.seeds:
        first_canon: Optional[str] = None
        for rep in range(s.repetitions):
            trace = run_once(s, seed)
            verdicts = [c(trace) for c in checks]
            if s.repetitions > 1:
                canon = canonical_trace(trace)
                if first_canon is None:
                    first_canon = canon
                    verdicts.append(Verdict("determinism", True))
                else:
                    same = canon == first_canon
                    verdicts.append(Verdict(
                        "determinism", same,
                        info="" if same else "trace differs from repetition 0"))
            results.append(RunResult(seed, rep, trace, verdicts))
    return results
