"""Exception hierarchy shared by all kdn modules."""


class KdnError(Exception):
    """Base class for all errors raised by this package."""


class InfeasibleParametersError(KdnError):
    """Topology generator cannot satisfy the requested shape."""


class UnreachableError(KdnError):
    """No path exists between the requested endpoints."""


class InconsistencyError(KdnError):
    """Inputs refer to different topologies (node sets or hashes differ)."""


class InstabilityError(KdnError):
    """Offered load pushes one or more links past the stability margin."""

    def __init__(self, overloaded, rho_max):
        self.overloaded = tuple(overloaded)  # (link_id, rho) pairs
        self.rho_max = rho_max
        detail = ", ".join(f"{lid} (rho={rho:.3f})" for lid, rho in self.overloaded)
        super().__init__(f"unstable: {detail} at/above rho_max={rho_max}")


class ResampleBudgetError(KdnError):
    """Could not draw a stable (traffic, policy) pair within the retry budget."""


class EmptyStoreError(KdnError):
    """Operation requires a non-empty telemetry store."""


class SchemaError(KdnError):
    """A file failed schema validation (bad JSON, version, or binding hash)."""


class InsufficientRowsError(KdnError):
    """Dataset has fewer rows than the requested split sizes."""


class DimensionMismatchError(KdnError):
    """Matrix/vector shapes do not line up with the model."""


class NonFiniteLossError(KdnError):
    """Training loss became NaN/inf; carries diagnostics in the message."""


class IntentError(KdnError):
    """Base class for intent-language errors."""


class IntentSyntaxError(IntentError):
    def __init__(self, line, col, message):
        self.line = line
        self.col = col
        super().__init__(f"line {line}, col {col}: {message}")


class UnknownIdentifierError(IntentError):
    def __init__(self, line, col, message):
        self.line = line
        self.col = col
        super().__init__(f"line {line}, col {col}: {message}")


class DuplicateObjectiveError(IntentError):
    def __init__(self, line, col, message="duplicate objective"):
        self.line = line
        self.col = col
        super().__init__(f"line {line}, col {col}: {message}")


class InvalidPolicyError(KdnError):
    """Split policy violates simplex or shape constraints for the topology."""


class NoModelBoundError(KdnError):
    """Controller query requires a bound performance model."""


class TrainingFailureError(KdnError):
    """Wrapper used by the CLI to signal a failed training run."""
