"""Exception hierarchy.

Numerical failures derive from ``NumericalError`` so the CLI can map them to
their own exit code; bad user input derives from ``ValueError``.
"""


class DppError(Exception):
    pass


class InputError(DppError, ValueError):
    pass


class ParameterError(DppError, ValueError):
    pass


class ParseError(InputError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ConfigError(DppError, ValueError):
    pass


class BudgetError(DppError, ValueError):
    pass


class CapacityError(DppError, ValueError):
    pass


class NumericalError(DppError, ArithmeticError):
    pass


class SingularConditioningError(NumericalError):
    pass


class DegenerateDistributionError(NumericalError):
    pass


class UnsupportedExponentError(DppError, ValueError):
    pass


class InitializationError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, iteration, message="non-finite relaxation iterate"):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration


class DegenerateLabelsWarning(UserWarning):
    pass


class ConditioningFallbackWarning(UserWarning):
    """Conditioning on earlier picks was singular and has been dropped."""
