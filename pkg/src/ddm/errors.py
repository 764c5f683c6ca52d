"""Exception hierarchy.

Every domain error derives from :class:`DdmError`; the CLI reports the
class name verbatim and exits with status 1.
"""


class DdmError(Exception):
    """Base class for all valuation-engine errors."""


class SingularMatrix(DdmError):
    pass


class NotStochastic(DdmError):
    def __init__(self, rows, max_deviation=None):
        self.rows = list(rows)
        self.max_deviation = max_deviation
        super().__init__(f"rows {self.rows} are not probability vectors")


class DimensionMismatch(DdmError):
    pass


class NonConvergent(DdmError):
    pass


class InsufficientHistory(DdmError):
    pass


class TransversalityViolated(DdmError):
    def __init__(self, condition, value, bound):
        self.condition = condition
        self.value = value
        self.bound = bound
        super().__init__(f"{condition} fails: {value!r} >= {bound!r}")


class StateOutOfRange(DdmError):
    pass


class SystemTooLarge(DdmError):
    pass


class DegenerateBins(DdmError):
    pass


class ZeroVarianceMarket(DdmError):
    pass


class HorizonTooShort(DdmError):
    pass


class ParseError(DdmError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class NonPositiveDividend(ParseError):
    pass


class DuplicateDate(ParseError):
    pass
