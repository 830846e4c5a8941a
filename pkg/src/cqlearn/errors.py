"""Exception types shared across the package."""


class CqlearnError(Exception):
    pass


class ParseError(CqlearnError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{line}:{column}: {message}"
        super().__init__(message)


class NotNormalFormError(CqlearnError):
    pass


class ArityError(CqlearnError):
    pass


class SignatureError(CqlearnError):
    pass


class BudgetExceededError(CqlearnError):
    pass


class ClassViolationError(CqlearnError):
    pass


class IterationLimitError(CqlearnError):
    pass


class InvariantViolationError(CqlearnError):
    """An internal guarantee of the learning algorithm was violated."""
