"""Exception and warning types shared across the package."""


class Chi2SimError(Exception):
    """Base class for all engine errors."""


class SpaceMismatch(Chi2SimError, ValueError):
    """Operator/state dimensions or mode layout do not agree."""


class IndexOutOfRange(Chi2SimError, IndexError):
    pass


class DomainError(Chi2SimError, ValueError):
    """Quantity undefined for the given input (e.g. Fano factor of vacuum)."""


class ToleranceNotMet(Chi2SimError, RuntimeError):
    """Adaptive integration could not satisfy the requested accuracy."""


class ResourceExceeded(Chi2SimError, MemoryError):
    """Requested representation exceeds the configured memory budget."""


class NoExtremum(Chi2SimError, ValueError):
    pass


class InvalidState(Chi2SimError, ValueError):
    """State violates normalization, hermiticity or positivity."""


class ConsistencyError(Chi2SimError, RuntimeError):
    """Two routes to the same quantity disagree beyond tolerance."""


class ParseError(Chi2SimError, ValueError):
    def __init__(self, message, line=None, column=None, field=None):
        self.line = line
        self.column = column
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ValidationError(Chi2SimError, ValueError):
    """Collects every violated invariant of a configuration."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(f"{len(self.problems)} validation problem(s):\n{lines}")


class TailTooHeavy(UserWarning):
    """Truncated coherent state lost more than 1e-10 probability mass."""


class GridTooCoarse(UserWarning):
    pass


class TruncationLeakage(UserWarning):
    """Significant population reached the top Fock levels of a mode."""


class InversePurityOnly(UserWarning):
    """Schmidt number requested for a mixed global state."""


class NonMonotoneConvergence(UserWarning):
    pass
