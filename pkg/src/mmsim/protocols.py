"""Protocol registry: everything the harness needs to run one by name.

Each entry knows how to build its regions and main lane, which property
checkers judge its traces, its resilience preconditions (checked at
scenario load, not in the model — different protocols tolerate
different fault mixes), and how to aim adversary scripts at its
register layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace
from typing import Callable, Optional

from . import cheap
from .aligned import (aligned_free_main, aligned_main,
                      install_aligned_free_regions, install_aligned_regions)
from .broadcast import BroadcastNode, _pack_proof, l2_slot, pack_pair, value_slot
from .errors import ScenarioError
from .fastpath import (LEADER, cheap_quorum_main, fast_robust_main,
                       install_fast_regions, preferential_main,
                       robust_backup_main)
from .memory import read_only_for_all
from .pmp import disk_main, install_disk_regions, install_pmp_regions, pmp_main
from .properties import (BROADCAST_CHECKS, CONSENSUS_CHECKS, MODEL_CHECKS,
                         check_abort_agreement, check_agreement,
                         check_composition, check_validity,
                         priority_decision_checker)
from .regions import install_swmr
from .sim import ProtocolBinding, SystemConfig
from .trusted import ECHO, SENT, Body, HistoryRecord, TrustedMessage, digest


def broadcast_main(rt, raw, poll: int = 4):
    """Every process broadcasts its input once and observes forever;
    scenarios bound the run with a horizon."""
    node = BroadcastNode(rt, poll=poll)
    node.spawn_observers()
    if raw is not None:
        yield from node.broadcast(raw)
    while True:
        yield rt.sleep(50)


# -- adversary aiming ---------------------------------------------------------


def _values_for(sim, target: str):
    a = sim.inputs.get(target) or b"\xaa"
    b = bytes([x ^ 0xFF for x in a])
    return a, b


def _broadcast_ctx(sim, target: str):
    a, b = _values_for(sim, target)

    def announce(rt, v):
        return [(value_slot(rt.pid, rt.pid, 1),
                 rt.sign(pack_pair(1, v)).pack())]

    def stale(rt):
        # a proof for key 99 parked in key 1's slot, and an empty proof
        wrong_key = rt.sign(_pack_proof(rt.pid, 99, [])).pack()
        hollow = rt.sign(_pack_proof(rt.pid, 1, [])).pack()
        return [(l2_slot(rt.pid, rt.pid, 1), wrong_key),
                (value_slot(rt.pid, rt.pid, 1), hollow)]

    def forged(rt):
        # self-signed copies masquerading as a certificate
        copies = [rt.sign(pack_pair(1, a)) for _ in rt.processes]
        return [(l2_slot(rt.pid, rt.pid, 1),
                 rt.sign(_pack_proof(rt.pid, 1, copies)).pack())]

    def grabs(rt):
        # all regions here are static single-writer: every grab must bounce
        return [(f"swmr-{q}", read_only_for_all(rt.processes))
                for q in rt.processes if q != rt.pid]

    return SimpleNamespace(value_a=a, value_b=b, announce=announce,
                           stale=stale, forged=forged, grabs=grabs)


def _trusted_payload(v: bytes) -> bytes:
    body = Body(ECHO, value=v, evidence=b"")
    return TrustedMessage("*", body.pack(), ()).pack()


def _backup_ctx(sim, target: str):
    a, b = _values_for(sim, target)
    base = _broadcast_ctx(sim, target)

    def announce(rt, v):
        return [(value_slot(rt.pid, rt.pid, 1),
                 rt.sign(pack_pair(1, _trusted_payload(v))).pack())]

    def forged(rt):
        # echo citing a send that never happened: replay must silence it
        ghost = HistoryRecord(SENT, "*", 7, digest(b"ghost"))
        tm = TrustedMessage("*", Body(ECHO, value=a, evidence=b"").pack(),
                            (ghost,))
        return [(value_slot(rt.pid, rt.pid, 1),
                 rt.sign(pack_pair(1, tm.pack())).pack())]

    return SimpleNamespace(value_a=a, value_b=b, announce=announce,
                           stale=base.stale, forged=forged, grabs=base.grabs)


def _fast_ctx(sim, target: str):
    a, b = _values_for(sim, target)

    def announce(rt, v):
        if rt.pid == LEADER:
            lv = rt.sign(v)
            return [(cheap.LEAD_VAL, lv.pack()),
                    (cheap.val_slot(rt.pid), rt.sign(lv.pack()).pack())]
        # non-leader: a copy nobody will match against the leader's value
        return [(cheap.val_slot(rt.pid), rt.sign(pack_pair(1, v)).pack())]

    def stale(rt):
        lone = [rt.sign(b"stale")]
        return [(cheap.proof_slot(rt.pid),
                 rt.sign(cheap.pack_unanimity(lone)).pack()),
                (cheap.val_slot(rt.pid), rt.sign(b"stale").pack())]

    def forged(rt):
        copies = [rt.sign(b"forged") for _ in rt.processes]
        return [(cheap.proof_slot(rt.pid),
                 rt.sign(cheap.pack_unanimity(copies)).pack())]

    def grabs(rt):
        # revoking the lead region is legal under revoke-only: forces panic
        out = [(cheap.LEAD_REGION, read_only_for_all(rt.processes))]
        out += [(f"swmr-{q}", read_only_for_all(rt.processes))
                for q in rt.processes if q != rt.pid]
        return out

    return SimpleNamespace(value_a=a, value_b=b, announce=announce,
                           stale=stale, forged=forged, grabs=grabs)


# -- preconditions ------------------------------------------------------------


def _need(cond: bool, field: str, msg: str):
    if not cond:
        raise ScenarioError(field, msg)


def _pre_byzantine_quorums(cfg: SystemConfig):
    _need(cfg.n >= 2 * cfg.f_p + 1, "system.n",
          f"needs n >= 2*f_p+1, got n={cfg.n}, f_p={cfg.f_p}")
    _need(cfg.m >= 2 * cfg.f_m + 1, "system.m",
          f"needs m >= 2*f_m+1, got m={cfg.m}, f_m={cfg.f_m}")


def _pre_crash_memory_majority(cfg: SystemConfig):
    _need(not cfg.byzantine, "system.byzantine", "crash-only protocol")
    _need(cfg.m >= 2 * cfg.f_m + 1, "system.m",
          f"needs m >= 2*f_m+1, got m={cfg.m}, f_m={cfg.f_m}")


def _pre_aligned(cfg: SystemConfig):
    _need(not cfg.byzantine, "system.byzantine", "crash-only protocol")
    _need(cfg.links, "system.links",
          "process acceptors answer over links; links=false cannot work")
    total = cfg.n + cfg.m
    correct = (cfg.n - cfg.f_p) + (cfg.m - cfg.f_m)
    _need(correct >= total // 2 + 1, "system",
          f"combined correct agents {correct} below quorum {total // 2 + 1}")


# -- registry -----------------------------------------------------------------


@dataclass
class ProtocolEntry:
    """`make_setup`/`make_main` take the scenario's protocol params;
    `checks` takes (params, config) and returns the trace checkers."""

    name: str
    make_setup: Callable
    make_main: Callable
    precheck: Callable[[SystemConfig], None]
    checks: Callable
    adversary_context: Optional[Callable] = None

    def binding(self, params: dict) -> ProtocolBinding:
        return ProtocolBinding(self.name, self.make_setup(params),
                               self.make_main(params), self.adversary_context)


def _fixed(thing):
    return lambda params: thing


def _consensus_checks(params, cfg):
    return CONSENSUS_CHECKS + MODEL_CHECKS


def _ranks_from(params: dict) -> dict:
    ranks = params.get("ranks")
    _need(isinstance(ranks, dict) and bool(ranks), "protocol.ranks",
          "preferential runs need a ranks table")
    return {bytes.fromhex(k): int(v) for k, v in ranks.items()}


PROTOCOLS = {}


def _register(entry: ProtocolEntry):
    PROTOCOLS[entry.name] = entry


_register(ProtocolEntry(
    name="reliable-broadcast",
    make_setup=_fixed(install_swmr),
    make_main=_fixed(broadcast_main),
    precheck=_pre_byzantine_quorums,
    checks=lambda params, cfg: BROADCAST_CHECKS + MODEL_CHECKS,
    adversary_context=_broadcast_ctx))

_register(ProtocolEntry(
    name="cheap-quorum",
    make_setup=_fixed(install_fast_regions),
    make_main=_fixed(cheap_quorum_main),
    precheck=_pre_byzantine_quorums,
    # aborting runs legitimately end without a decision, so no termination
    checks=lambda params, cfg: [check_agreement, check_validity,
                                check_abort_agreement] + MODEL_CHECKS,
    adversary_context=_fast_ctx))

_register(ProtocolEntry(
    name="fast-robust",
    make_setup=_fixed(install_fast_regions),
    make_main=_fixed(fast_robust_main),
    precheck=_pre_byzantine_quorums,
    checks=lambda params, cfg: CONSENSUS_CHECKS + [
        check_abort_agreement, check_composition] + MODEL_CHECKS,
    adversary_context=_fast_ctx))

_register(ProtocolEntry(
    name="robust-backup",
    make_setup=_fixed(install_swmr),
    make_main=_fixed(robust_backup_main),
    precheck=_pre_byzantine_quorums,
    checks=_consensus_checks,
    adversary_context=_backup_ctx))

_register(ProtocolEntry(
    name="preferential-paxos",
    make_setup=_fixed(install_swmr),
    make_main=lambda params: (
        lambda rt, raw, _ranks=_ranks_from(params): preferential_main(
            rt, raw, _ranks)),
    precheck=_pre_byzantine_quorums,
    checks=lambda params, cfg: CONSENSUS_CHECKS + MODEL_CHECKS + [
        priority_decision_checker(_ranks_from(params),
                                  int(params.get("f", cfg.f_p)))],
    adversary_context=_backup_ctx))

_register(ProtocolEntry(
    name="pmp",
    make_setup=_fixed(install_pmp_regions),
    make_main=_fixed(pmp_main),
    precheck=_pre_crash_memory_majority,
    checks=_consensus_checks))

_register(ProtocolEntry(
    name="disk-paxos",
    make_setup=_fixed(install_disk_regions),
    make_main=_fixed(disk_main),
    precheck=_pre_crash_memory_majority,
    checks=_consensus_checks))

_register(ProtocolEntry(
    name="aligned-paxos",
    make_setup=lambda params: (install_aligned_regions
                               if params.get("permissions", True)
                               else install_aligned_free_regions),
    make_main=lambda params: (aligned_main
                              if params.get("permissions", True)
                              else aligned_free_main),
    precheck=_pre_aligned,
    checks=_consensus_checks))
