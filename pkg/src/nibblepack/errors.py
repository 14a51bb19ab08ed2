"""Exception types shared across the package.

The CLI maps these onto its documented exit codes.
"""


class NibblepackError(Exception):
    """Base class for all package errors."""


class CapacityError(NibblepackError):
    """A requested sample would exceed the configured point budget."""


class PreconditionViolated(NibblepackError):
    pass


class InternalExhaustion(NibblepackError):
    """Regularization found a deficient vertex with no admissible partner."""


class ScheduleInfeasible(NibblepackError):
    """Paper-mode constants leave no rounds to run at the given degree."""

    def __init__(self, message: str, required_log_delta: float | None = None):
        super().__init__(message)
        self.required_log_delta = required_log_delta


class RetriesExhausted(NibblepackError):
    """Every sampled nibble in the retry budget failed at least one condition.

    ``failures`` maps condition name to the number of attempts it failed.
    """

    def __init__(self, message: str, failures: dict[str, int], round_index: int | None = None):
        super().__init__(message)
        self.failures = dict(failures)
        self.round_index = round_index

    def __str__(self):
        base = super().__str__()
        if self.round_index is not None:
            base = f"round {self.round_index}: {base}"
        counts = ", ".join(f"{k}={v}" for k, v in self.failures.items())
        return f"{base} [{counts}]"


class SizeCapExceeded(NibblepackError):
    pass
