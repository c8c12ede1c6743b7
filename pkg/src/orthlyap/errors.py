"""Exception types shared across the package.

Every error raised on purpose derives from :class:`OrthlyapError`.  The
``exit_code`` attribute drives the CLI contract (2 input, 3 numerical,
4 capability).
"""


class OrthlyapError(Exception):
    exit_code = 3


class InputError(OrthlyapError, ValueError):
    exit_code = 2


class ExprSyntaxError(InputError):
    """Malformed expression text; ``position`` is a 0-based column."""

    def __init__(self, message, position=None, text=None):
        self.position = position
        self.text = text
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)


class UnknownSymbol(ExprSyntaxError):
    pass


class VarOutOfRange(ExprSyntaxError):
    pass


class DimensionMismatch(InputError):
    pass


class DomainError(OrthlyapError, ArithmeticError):
    """Evaluation left the real domain (division by zero, log of <= 0, ...)."""

    def __init__(self, message, subexpr=None, point=None):
        self.subexpr = subexpr
        self.point = point
        super().__init__(message)


class CurlNotZero(OrthlyapError):
    def __init__(self, message, max_curl=None):
        self.max_curl = max_curl
        super().__init__(message)


class NoConvergence(OrthlyapError):
    pass


class TargetNotBlockClosed(InputError):
    pass


class SwapIllConditioned(OrthlyapError):
    pass


class SingularSylvester(OrthlyapError):
    pass


class IllConditionedInverse(OrthlyapError):
    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class JordanRequired(OrthlyapError):
    exit_code = 4


class TooLarge(OrthlyapError):
    exit_code = 4


class NotAnEquilibrium(InputError):
    pass


class UncertifiedDecomposition(OrthlyapError):
    pass


class NoZeroLocus(OrthlyapError):
    pass


class CertificateFailure(OrthlyapError):
    def __init__(self, message, condition=None, witness=None):
        self.condition = condition
        self.witness = witness
        super().__init__(message)


class Unsupported(OrthlyapError):
    exit_code = 4
