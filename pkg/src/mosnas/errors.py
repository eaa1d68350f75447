"""Exception types shared across the package."""


class MosError(Exception):
    """Base class for all package errors."""


class DimensionError(MosError):
    """Tensor shapes are incompatible for the requested operation."""


class ArgumentError(MosError):
    """An argument violates an operation's precondition."""


class ContractError(MosError):
    """A value violates a documented invariant (non-scalar loss, non-simplex input, ...)."""


class MembershipError(MosError):
    """An architecture is not a member of the search space."""


class ConfigError(MosError):
    """A run configuration is missing, malformed, or inconsistent."""


class TrainingError(MosError):
    """Training aborted; carries the step at which it failed."""

    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


class ProtocolError(MosError):
    """The latency measurement protocol was violated."""


class FitError(MosError):
    """The latency predictor cannot be fit on the given dataset."""


class InfeasibleError(MosError):
    """No candidate satisfies the latency constraint; carries the tightest latency seen."""

    def __init__(self, constraint_ms: float, tightest_ms: float):
        super().__init__(
            f"no architecture satisfies the {constraint_ms} ms constraint; "
            f"tightest predicted latency seen was {tightest_ms} ms"
        )
        self.constraint_ms = constraint_ms
        self.tightest_ms = tightest_ms


class UnsupportedSchemeError(MosError):
    """The requested diagnostic does not apply to this sharing scheme."""


class UndefinedMetricError(MosError):
    """The metric is mathematically undefined on this input (all ties, zero norm)."""
