class UsageError(ValueError):
    """A precondition on the caller's input was violated."""


class BudgetExceeded(RuntimeError):
    """An exhaustive sweep would exceed the configured work budget."""

    def __init__(self, what: str, estimate: int, budget: int):
        super().__init__(f"{what}: estimated {estimate} point-operations exceeds budget {budget}")
        self.what = what
        self.estimate = estimate
        self.budget = budget


class ConstructionFailed(RuntimeError):
    """A sampled or certified construction could not be completed."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details
