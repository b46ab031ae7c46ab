"""Byzantine behaviour scripts.

Each script is a plain process lane acting through the same runtime as
honest code, so signatures and permissions are enforced against it; a
script can only do what the model allows an arbitrary process to do.
Protocol-specific aiming (which registers carry values, which regions
are worth grabbing, how to encode something that looks like a proof)
comes from the context object the protocol binding supplies.

The context duck-type:
    value_a, value_b    -- two payloads to push conflicting claims for
    announce(rt, v)     -- [(register, payload)]: present v as this process
    stale(rt)           -- [(register, payload)]: replayed/mismatched proofs
    forged(rt)          -- [(register, payload)]: fabricated certificates
    grabs(rt)           -- [(region_id, Permission)]: permission attacks
"""

from __future__ import annotations


# Scripts return when their mischief is spent. A returned lane is
# indistinguishable from one sleeping forever, and it lets runs without
# decisions (pure-abort instances) drain instead of idling to the event
# budget.

def silent(rt, ctx):
    """Says nothing, ever: the cheapest way to stall optimistic paths."""
    return
    yield


def equivocator(rt, ctx):
    """Presents value_a to one half of the memories and value_b to the
    other, then goes quiet."""
    mems = rt.memory_ids
    half = (len(mems) + 1) // 2
    for i, mem in enumerate(mems):
        v = ctx.value_a if i < half else ctx.value_b
        for reg, payload in ctx.announce(rt, v):
            yield rt.write(mem, reg, payload)


def stale_proof_replayer(rt, ctx):
    """Replays proof-shaped blobs that were valid in some other context
    (wrong key, wrong instance); validators must reject them all."""
    for mem in rt.memory_ids:
        for reg, payload in ctx.stale(rt):
            yield rt.write(mem, reg, payload)


def history_forger(rt, ctx):
    """Publishes messages whose attached history is fabricated; replay
    verification must silence the stream."""
    for mem in rt.memory_ids:
        for reg, payload in ctx.forged(rt):
            yield rt.write(mem, reg, payload)


def permission_grabber(rt, ctx):
    """Hammers permission changes: the legal ones (revocations) force
    panics, the illegal ones must bounce off the policy gate."""
    for _ in range(3):
        for mem in rt.memory_ids:
            for region, permission in ctx.grabs(rt):
                yield rt.change_permission(mem, region, permission)
        yield rt.sleep(30)


SCRIPTS = {
    "silent": silent,
    "equivocator": equivocator,
    "stale-proof-replayer": stale_proof_replayer,
    "history-forger": history_forger,
    "permission-grabber": permission_grabber,
}
