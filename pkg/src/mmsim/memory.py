"""Shared-memory side of the message-and-memory model.

A memory is a crash-prone server of single-writer or multi-writer
registers. Registers are grouped into disjoint regions; each region has
a permission triple (read-only, write-only, read-write sets) and a
legal-change policy that gates `change_permission` requests. An illegal
change request is a silent no-op, never an error.

This module holds pure state: which register belongs to which region,
who may read or write, and how a permission request is judged. The
two-delay operation timing, linearization order and crash behaviour are
the scheduler's job (see sim.py); it calls the `apply_*` methods here
exactly once per operation, at the completion event.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ContractViolation


@dataclass(frozen=True)
class Permission:
    """Region permission triple. The three sets must be pairwise disjoint."""

    read: frozenset
    write: frozenset
    readwrite: frozenset

    def __post_init__(self):
        if (self.read & self.write) or (self.read & self.readwrite) or (self.write & self.readwrite):
            raise ContractViolation("permission sets must be pairwise disjoint")

    def can_read(self, p: str) -> bool:
        return p in self.read or p in self.readwrite

    def can_write(self, p: str) -> bool:
        return p in self.write or p in self.readwrite

    def to_dict(self) -> dict:
        return {
            "read": sorted(self.read),
            "write": sorted(self.write),
            "readwrite": sorted(self.readwrite),
        }


def perm(read=(), write=(), readwrite=()) -> Permission:
    return Permission(frozenset(read), frozenset(write), frozenset(readwrite))


def exclusive_writer(universe, owner: str) -> Permission:
    """Owner gets read-write, everyone else read-only."""
    return perm(read=frozenset(universe) - {owner}, readwrite={owner})


def read_only_for_all(universe) -> Permission:
    return perm(read=frozenset(universe))


# Legal-change policies, by name so regions stay serializable.
#
#  static           -- no change is ever legal.
#  exclusive-writer -- only "grant RW to the requester, all others R".
#  revoke-only      -- only "everyone read-only" (any requester may ask).

def _legal_static(requester, universe, old, new) -> bool:
    return False


def _legal_exclusive(requester, universe, old, new) -> bool:
    return new == exclusive_writer(universe, requester)


def _legal_revoke(requester, universe, old, new) -> bool:
    return new == read_only_for_all(universe)


LEGAL_CHANGE_POLICIES = {
    "static": _legal_static,
    "exclusive-writer": _legal_exclusive,
    "revoke-only": _legal_revoke,
}


@dataclass
class MemoryRegion:
    """A named group of registers on one memory.

    Membership is by register-name prefix, so register families indexed
    by unbounded keys (broadcast slots) belong to a region without
    pre-declaring every name.
    """

    region_id: str
    memory_id: str
    prefix: str
    permission: Permission
    legal_change: str = "static"
    registers: set = field(default_factory=set)  # names seen so far

    def matches(self, register: str) -> bool:
        return register.startswith(self.prefix)

    def judge(self, requester: str, universe, new: Permission) -> bool:
        policy = LEGAL_CHANGE_POLICIES[self.legal_change]
        return policy(requester, universe, self.permission, new)


class Memory:
    """One fail-prone memory: registers, regions, crash flag."""

    def __init__(self, memory_id: str, universe):
        self.memory_id = memory_id
        self.universe = frozenset(universe)
        self.regions: list[MemoryRegion] = []
        self.registers: dict[str, bytes] = {}
        self.crashed = False
        # at most one outstanding operation per process, enforced hard
        self.outstanding: set = set()

    def add_region(self, region: MemoryRegion) -> MemoryRegion:
        for existing in self.regions:
            a, b = existing.prefix, region.prefix
            if a.startswith(b) or b.startswith(a):
                raise ContractViolation(
                    f"{self.memory_id}: region prefix {b!r} overlaps {a!r}"
                )
        self.regions.append(region)
        return region

    def region_of(self, register: str) -> MemoryRegion:
        for region in self.regions:
            if region.matches(register):
                return region
        raise ContractViolation(
            f"{self.memory_id}: register {register!r} belongs to no region"
        )

    def find_region(self, region_id: str) -> MemoryRegion:
        for region in self.regions:
            if region.region_id == region_id:
                return region
        raise ContractViolation(f"{self.memory_id}: no region {region_id!r}")

    # -- linearization points, called by the scheduler at completion time --

    def apply_write(self, p: str, register: str, value: bytes) -> str:
        region = self.region_of(register)
        if not region.permission.can_write(p):
            return "nak"
        region.registers.add(register)
        self.registers[register] = value
        return "ack"

    def apply_read(self, p: str, register: str):
        region = self.region_of(register)
        if not region.permission.can_read(p):
            return ("nak", None)
        return ("ok", self.registers.get(register))

    def apply_change(self, p: str, region_id: str, new: Permission) -> bool:
        """Returns whether the change applied. Illegal changes no-op."""
        region = self.find_region(region_id)
        if not region.judge(p, self.universe, new):
            return False
        region.permission = new
        return True
