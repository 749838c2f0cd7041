"""Errors shared across the package."""


class NisqlabError(Exception):
    """Base class for package-specific failures."""


class CapacityError(NisqlabError):
    """Requested problem size exceeds what the backend can simulate."""


class InvariantViolation(NisqlabError):
    """A checked mathematical invariant failed at runtime."""


class UsageError(NisqlabError):
    """Invalid user-supplied configuration or arguments."""
