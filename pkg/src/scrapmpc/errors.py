"""Exception types shared across the package."""


class ScrapMpcError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(ScrapMpcError, ValueError):
    """Operand shapes are incompatible."""


class Asymmetric(ScrapMpcError, ValueError):
    """A matrix required to be symmetric exceeds the symmetry tolerance."""


class NotPositiveDefinite(ScrapMpcError, ArithmeticError):
    """A Cholesky pivot of at most zero was encountered."""


class RankDeficient(ScrapMpcError, ArithmeticError):
    """A Householder column norm underflowed; the matrix has no full column rank."""


class OutOfDomain(ScrapMpcError, ValueError):
    """A scalar argument lies outside the function's domain."""


class NonFinite(ScrapMpcError, ArithmeticError):
    """A NaN or infinity appeared in an evaluation."""


class EmptyInput(ScrapMpcError, ValueError):
    """An aggregate operation received an empty collection."""


class ParseError(ScrapMpcError, ValueError):
    """A configuration file could not be parsed; carries line/key diagnostics."""


class ValidationError(ScrapMpcError, ValueError):
    """A configuration violates a model invariant; names the invariant."""
