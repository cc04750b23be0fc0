"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`SleepEdaError` and
belongs to one of three families that the CLI maps to exit codes:
configuration (2), data (3) and numerical (4).
"""


class SleepEdaError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(SleepEdaError, ValueError):
    exit_code = 2


class DataError(SleepEdaError, ValueError):
    exit_code = 3


class NumericalError(SleepEdaError, ArithmeticError):
    exit_code = 4


# ingest
class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyTraceError(DataError):
    pass


class ValidationError(DataError):
    pass


class DuplicateError(DataError):
    pass


# signal features / actigraphy
class ChannelError(DataError):
    pass


class RangeError(DataError):
    pass


class AlignmentError(DataError):
    pass


class DomainError(DataError):
    pass


# factors
class NoFactorsRetained(NumericalError):
    """No correlation eigenvalue exceeded 1. A valid outcome, not a failure
    of the optimizer; the eigenvalues are attached for reporting."""

    def __init__(self, eigenvalues):
        self.eigenvalues = eigenvalues
        super().__init__(
            "Kaiser rule retained no factors (max eigenvalue "
            f"{max(eigenvalues):.4f} <= 1)"
        )


# causal
class DegenerateCellError(NumericalError):
    def __init__(self, cell, count, needed):
        self.cell = cell
        self.count = count
        self.needed = needed
        super().__init__(
            f"discrete cell {cell} has {count} rows; {needed} needed for a covariance estimate"
        )


class TooLargeError(ConfigError):
    pass


class UnknownNodeError(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


# sem
class ContractError(NumericalError):
    pass


# predictors
class SingularError(NumericalError):
    pass


class SeparationError(NumericalError):
    def __init__(self, predictor, direction):
        self.predictor = predictor
        self.direction = direction
        super().__init__(
            f"perfect separation: coefficient of {predictor!r} diverges to {direction}"
        )


class FoldError(DataError):
    pass


# synth
class ScriptError(ConfigError):
    pass
