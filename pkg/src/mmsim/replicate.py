"""Single-writer registers replicated across fail-prone memories.

A logical register lives at the same name on every memory. The writer
writes all copies and returns once a majority acknowledged; a reader
reads all copies, waits for a majority of responses, and returns a
value only if exactly one distinct non-empty value appears among them,
otherwise it returns None. There are no write-backs, so the result is a
regular (not atomic) register, which is all the layered protocols need.

Registers written through this layer are meant to be written at most
once; the writer guard below turns a second write of the same logical
name by its correct writer into a loud error instead of a silent
protocol bug.
"""

from __future__ import annotations

from typing import Optional

from .errors import ContractViolation
from .sim import Gather, ProcessRuntime


def majority(count: int) -> int:
    """Smallest integer strictly above half: ceil((count+1)/2)."""
    return count // 2 + 1


def _write_verdict(total: int):
    need = majority(total)
    nak_limit = total - need  # more naks than this and a majority of acks is impossible

    def decide(results):
        acks = sum(1 for r in results if r.status == "ack")
        naks = sum(1 for r in results if r.status == "nak")
        if acks >= need:
            return "ack"
        if naks > nak_limit:
            return "nak"
        if len(results) == total:
            return "nak"
        return None

    return decide


def _read_verdict(total: int):
    need = majority(total)

    def decide(results):
        if len(results) < need:
            return None
        distinct = set()
        for r in results:
            if r.status == "ok" and r.value is not None:
                distinct.add(r.value)
        if len(distinct) == 1:
            return ("value", distinct.pop())
        return ("value", None)

    return decide


def rep_write(rt: ProcessRuntime, register: str, value: bytes, writer_check: bool = True):
    """Generator: write `value` to `register` on all memories, majority ack.

    Returns "ack" or "nak". With writer_check, a repeat write of the same
    logical register by this runtime raises (write-once discipline).
    """
    if writer_check:
        if register in rt._rep_written:
            raise ContractViolation(f"{rt.pid} rewrote replicated register {register!r}")
        rt._rep_written.add(register)
    ops = [rt.op_write(mid, register, value) for mid in rt.memory_ids]
    status = yield Gather(ops, _write_verdict(len(ops)))
    return status


def rep_read(rt: ProcessRuntime, register: str) -> Optional[bytes]:
    """Generator: read `register` from all memories, majority of responses.

    Returns the single distinct value seen, or None for both "nothing
    written yet" and "replicas disagree" (the caller cannot tell these
    apart, by design).
    """
    ops = [rt.op_read(mid, register) for mid in rt.memory_ids]
    _, value = yield Gather(ops, _read_verdict(len(ops)))
    return value
