"""Region layouts shared by the protocols."""

from __future__ import annotations

from .memory import MemoryRegion, exclusive_writer, perm


def install_swmr(sim, legal_change: str = "static") -> None:
    """One single-writer region per process (prefix "<pid>/") on every memory."""
    procs = sim.config.processes
    for mem in sim.memories.values():
        for p in procs:
            mem.add_region(MemoryRegion(
                region_id=f"swmr-{p}", memory_id=mem.memory_id,
                prefix=f"{p}/", permission=exclusive_writer(procs, p),
                legal_change=legal_change))


def install_shared(sim, prefix: str, permission=None,
                   legal_change: str = "static", region_id: str = "shared") -> None:
    """One region with the same prefix and permission on every memory."""
    procs = sim.config.processes
    if permission is None:
        permission = perm(readwrite=procs)
    for mem in sim.memories.values():
        mem.add_region(MemoryRegion(
            region_id=region_id, memory_id=mem.memory_id, prefix=prefix,
            permission=permission, legal_change=legal_change))
