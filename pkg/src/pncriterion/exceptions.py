"""Exception hierarchy.

Errors fall into three families that the command line maps onto exit codes:
configuration problems (2), data problems (3) and numerical failures (4).
"""


class PNError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PNError, ValueError):
    pass


class DataError(PNError, ValueError):
    pass


class NumericError(PNError, ArithmeticError):
    pass


# -- configuration ---------------------------------------------------------

class AlphaOutOfRange(ConfigError):
    pass


class DeltaNegative(ConfigError):
    pass


class NNotPositive(ConfigError):
    pass


class CapExceeded(ConfigError):
    pass


class MissingTensor(ConfigError):
    pass


class SamplerUnavailable(ConfigError):
    pass


class PsiUnavailable(ConfigError):
    pass


class NoReference(ConfigError):
    pass


class EmptyBasis(ConfigError):
    pass


# -- data -------------------------------------------------------------------

class DimensionMismatch(DataError):
    pass


class MissingColumn(DataError):
    pass


class NonNumericCell(DataError):
    pass


class UnknownCategory(DataError):
    pass


class EmptyData(DataError):
    pass


class BetaMomentMatchInfeasible(DataError):
    pass


# -- numerics ---------------------------------------------------------------

class NotPositiveDefinite(NumericError):
    pass


class SingularMatrix(NotPositiveDefinite):
    """A matrix that must be inverted (G-tilde, Psi-hessian) is not PD."""


class NonFiniteDerivative(NumericError):
    pass


class ZeroCell(NumericError):
    pass


class MaxIterExceeded(NumericError):
    pass


class DegenerateProposal(NumericError):
    pass


class TooManyDiscarded(NumericError):
    pass
