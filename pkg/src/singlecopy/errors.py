"""Exception types raised across the package."""


class SingleCopyError(Exception):
    """Base class for all package errors."""


class StateValidationError(SingleCopyError, ValueError):
    """A matrix failed one of the density-matrix invariants."""


class NonHermitian(StateValidationError):
    pass


class NonUnitTrace(StateValidationError):
    pass


class NegativeEigenvalue(StateValidationError):
    pass


class NotNormalized(StateValidationError):
    pass


class MOutOfRange(SingleCopyError, ValueError):
    pass


class InvalidPermutation(SingleCopyError, ValueError):
    pass


class NonPositiveParameter(SingleCopyError, ValueError):
    pass


class DimensionShrink(SingleCopyError, ValueError):
    pass


class RankOutOfRange(SingleCopyError, ValueError):
    pass


class NonSquareSystem(SingleCopyError, ValueError):
    pass


class NotTwoQubit(SingleCopyError, ValueError):
    pass


class NotTracePreserving(SingleCopyError, ValueError):
    pass


class DimMismatch(SingleCopyError, ValueError):
    pass


class VanishingOutcome(SingleCopyError, ArithmeticError):
    """The conclusive branch has (numerically) zero probability."""


class BudgetExhausted(SingleCopyError, RuntimeError):
    """Optimizer ran out of iterations before meeting its tolerances.

    Only raised on request; by default the report is returned with
    ``converged=False``.
    """
