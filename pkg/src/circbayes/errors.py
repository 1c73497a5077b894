"""Exception hierarchy shared by every module in the package."""


class CSError(Exception):
    """Base class for all library errors."""


class InvalidDimensionError(CSError, ValueError):
    pass


class InvalidSparsityError(CSError, ValueError):
    pass


class InvalidParameterError(CSError, ValueError):
    pass


class InvalidConfigError(CSError, ValueError):
    pass


class ResourceLimitError(CSError, MemoryError):
    pass


class UndefinedMetricError(CSError, ArithmeticError):
    pass


class IllConditionedError(CSError, ArithmeticError):
    """Raised when a posterior system cannot be factorized.

    The estimated 2-norm condition number is kept on ``condition``.
    """

    def __init__(self, message, condition=float("inf")):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class DivergenceError(CSError, ArithmeticError):
    def __init__(self, message, iteration):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration
