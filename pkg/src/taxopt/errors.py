"""Exception types shared across the package."""


class TaxoptError(Exception):
    """Base class for all package-specific errors."""


class OversellError(TaxoptError):
    """Requested sale exceeds the dollar value of the position."""


class InvalidDateError(TaxoptError):
    """A trade or valuation date precedes a lot's acquisition date."""


class DomainError(TaxoptError):
    """A function was evaluated outside its domain."""


class UnsupportedShapeError(TaxoptError):
    """A piecewise function does not have the convex-on-each-half-line shape."""


class ValidationError(TaxoptError):
    """Problem data failed validation; carries the full list of findings."""

    def __init__(self, findings):
        self.findings = list(findings)
        super().__init__("; ".join(self.findings))


class InfeasibleError(TaxoptError):
    """The optimization problem has no feasible point."""


class SolverError(TaxoptError):
    """The solver backend failed to return a usable solution."""


class InputFormatError(TaxoptError):
    """A CSV input failed to parse; carries file and line context."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")
