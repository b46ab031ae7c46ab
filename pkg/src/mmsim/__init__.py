"""Discrete-event simulator for consensus over messages plus shared memory.

The model: n processes exchange messages and issue reads/writes against
m fail-prone memories whose regions carry changeable access permissions.
On top of it live a signed reliable broadcast, a permission-revoking
fast path with a robust backup, permission-backed single-leader
replication, and a variant that treats memories as ballot-keeping
acceptors alongside the processes.

Entry points: `mmsim.scenario.load_scenario` / `run_scenario` for
driving TOML-described experiments, `mmsim.sim.run` for wiring a
protocol by hand, and the `mmsim` console script.
"""

from __future__ import annotations

from .errors import ContractViolation, ScenarioError, SimError
from .memory import Permission, exclusive_writer, perm, read_only_for_all
from .properties import Verdict, run_checks
from .scenario import Scenario, load_scenario, load_scenario_text, run_scenario
from .sim import (FaultSpec, OmegaSchedule, ProtocolBinding, Simulation,
                  SystemConfig, run)
from .wire import DecodeError

__all__ = [
    "ContractViolation", "DecodeError", "ScenarioError", "SimError",
    "Permission", "exclusive_writer", "perm", "read_only_for_all",
    "Verdict", "run_checks",
    "Scenario", "load_scenario", "load_scenario_text", "run_scenario",
    "FaultSpec", "OmegaSchedule", "ProtocolBinding", "Simulation",
    "SystemConfig", "run",
]
