"""Exception hierarchy for the subsampling toolkit"""


class SuboptError(Exception):
    """Base class for every error raised by this package"""
    exit_code = 1


class ConfigError(SuboptError):
    """Invalid configuration value, file or flag combination"""
    exit_code = 2


class DesignError(SuboptError):
    """A design cannot be built with the requested budget"""
    exit_code = 2


class InfeasibleBudget(DesignError):
    pass


class BudgetBelowStratumCount(DesignError):
    pass


class DataError(SuboptError):
    """Input data is malformed or missing"""
    exit_code = 3


class EmptyInput(DataError):
    pass


class ParseError(DataError):
    """Unparseable CSV cell, located by line and column"""

    def __init__(self, message: str, line: int = None, column: str = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.line = line
        self.column = column


class MissingOutcomeColumns(DataError):
    pass


class NonBinaryOutcome(DataError):
    pass


class NoData(DataError):
    pass


class EmptyCell(DataError):
    pass


class OutcomeAccessViolation(DataError):
    """True outcome read outside the units a strategy is allowed to see"""


class NumericalError(SuboptError):
    """Numerical failure in a solver or design computation"""
    exit_code = 4


class NotPositiveDefinite(NumericalError):
    pass


class DimensionMismatch(NumericalError):
    pass


class DegenerateDesign(NumericalError):
    pass


class SeparationOrNonConvergence(NumericalError):
    pass


class NegativeRadicand(NumericalError):
    pass


class AllZeroNorms(NumericalError):
    pass


class EnumerationTooLarge(NumericalError):
    pass


class SolverFailure(NumericalError):
    pass
