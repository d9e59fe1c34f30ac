"""Exception types shared across the package."""


class OpsinLoopError(Exception):
    """Base class for package-specific failures."""


class ContractError(OpsinLoopError, ValueError):
    """An argument violates a documented precondition (shape, bounds, grid mismatch)."""


class ConfigurationError(OpsinLoopError, ValueError):
    """A configuration value is missing, malformed, or infeasible."""


class IntegrationDivergedError(OpsinLoopError, RuntimeError):
    """Forward integration left the admissible state region.

    ``step`` is the index of the first grid point whose state violated the
    simplex invariants.
    """

    def __init__(self, step: int, detail: str = ""):
        self.step = int(step)
        msg = f"state left the admissible region at step {self.step}"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)


class ReferenceFailure(OpsinLoopError, RuntimeError):
    """The reference system stopped responding or rejected a stimulus mid-run."""


class ProtocolError(OpsinLoopError, RuntimeError):
    """A wire peer sent a message that violates the session protocol."""
