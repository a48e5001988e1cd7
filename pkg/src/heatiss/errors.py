"""Exception hierarchy.

Two families matter to callers: :class:`InputError` (bad parameters, grids,
configs; the CLI maps these to exit status 2) and :class:`NumericalError`
(solver breakdowns; exit status 3).
"""


class HeatIssError(Exception):
    """Base class for every error raised by this package."""


class InputError(HeatIssError, ValueError):
    pass


class NumericalError(HeatIssError, ArithmeticError):
    pass


# -- parameter / domain errors ------------------------------------------------

class NonPositiveCoefficient(InputError):
    def __init__(self, field, index, value):
        self.field = field
        self.index = index
        self.value = value
        super().__init__(
            f"component {index}: field {field!r} must be "
            f"{'nonnegative' if field == 'c' else 'positive'}, got {value!r}"
        )


class WrongComponentCount(InputError):
    pass


class GridTooCoarse(InputError):
    pass


class NonPositiveLambda(InputError):
    pass


class LambdaBelowSpectralCut(InputError):
    pass


class StepTooLarge(InputError):
    pass


class HistoryLengthMismatch(InputError):
    pass


class UnstableSystem(InputError):
    """Raised when an operation requires the ISS condition and it fails."""


# -- numerical failures -------------------------------------------------------

class QuadratureFailure(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class SolverFailure(NumericalError):
    pass


class EigenSolverNoConvergence(NumericalError):
    pass


class NoSignChange(NumericalError):
    pass


class NormUnderflow(NumericalError):
    pass


class NonPositiveNorm(NumericalError):
    pass


class ResolventSingular(NumericalError):
    pass


class ContractionFailure(NumericalError):
    pass


class MaxIterExceeded(NumericalError):
    pass


# -- configuration ------------------------------------------------------------

class ConfigError(InputError):
    pass


class ParseError(ConfigError):
    pass


class UnknownKey(ConfigError):
    def __init__(self, key, suggestion=None, line=None):
        self.key = key
        self.suggestion = suggestion
        self.line = line
        msg = f"unknown key {key!r}"
        if line is not None:
            msg += f" (line {line})"
        if suggestion:
            msg += f"; did you mean {suggestion!r}?"
        super().__init__(msg)


class ConfigValidationError(ConfigError):
    def __init__(self, key, message, line=None):
        self.key = key
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{key}{where}: {message}")


# short name used in config error reports
ValidationError = ConfigValidationError
