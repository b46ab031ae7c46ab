"""Error types shared across the simulator and harness."""

from __future__ import annotations


class SimError(Exception):
    """Base class for everything raised on purpose by this package."""


class ContractViolation(SimError):
    """Protocol or test code used the model incorrectly.

    Raised for things the model forbids outright: issuing a second
    operation to a memory while one is outstanding, writing someone
    else's single-writer register through the replication layer,
    sending a message in a no-links configuration, a correct process
    deciding twice with different values.
    """


class ScenarioError(SimError):
    """A scenario file or configuration is invalid."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")
