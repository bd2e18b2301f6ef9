"""Exception types shared across the package."""


class GapSvtError(Exception):
    """Base class for all errors raised by this package."""


class SensitivityViolation(GapSvtError):
    """A query pair differs by more than 1 between the two sides."""

    def __init__(self, index: int, delta: float):
        self.index = index
        self.delta = delta
        super().__init__(
            f"query pair {index} violates the sensitivity-1 contract: |delta| = {abs(delta)}"
        )


class EmptyWorkload(GapSvtError):
    """Workload has no query pairs."""


class NonPositiveBudget(GapSvtError):
    """Privacy budget (or a derived piece of it) is not strictly positive."""


class TapeExhausted(GapSvtError):
    """A mechanism tried to read past the end of its noise tape."""


class LayoutMismatch(GapSvtError):
    """A tape (or shift vector) has the wrong layout for the requested operation."""


class DomainError(GapSvtError):
    """Numeric argument outside the function's domain."""


class GridBudgetExceeded(GapSvtError):
    """Exact enumeration would need more grid points than the configured budget."""

    def __init__(self, needed: int, budget: int, hint: str = ""):
        self.needed = needed
        self.budget = budget
        msg = f"enumeration grid needs {needed} points, budget is {budget}"
        if hint:
            msg += f" ({hint})"
        super().__init__(msg)


class DomainMismatch(GapSvtError):
    """Two output distributions do not live on comparable output spaces."""


class BudgetInvariantViolation(GapSvtError):
    """Internal consistency check on the cost ledger failed; indicates a bug."""
