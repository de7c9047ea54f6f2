"""Exception hierarchy shared by every module of the lab."""


class HspwLabError(Exception):
    """Base class for all errors raised by hspw_lab."""


class DomainError(HspwLabError):
    pass


class PointOutsideDomain(DomainError):
    pass


class DegenerateDomain(DomainError):
    pass


class QuadratureError(HspwLabError):
    pass


class InvalidAlpha(QuadratureError, ValueError):
    pass


class InvalidP(QuadratureError, ValueError):
    pass


class UnboundedIntegrand(QuadratureError):
    pass


class NoConvergence(QuadratureError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DimensionTooLarge(QuadratureError):
    pass


class SupportError(QuadratureError):
    """A field's declared support is incompatible with the domain."""


class SupportEscapesDomain(SupportError):
    pass


class EmptyGrid(HspwLabError, ValueError):
    pass


class GlsDivergent(HspwLabError):
    def __init__(self, p):
        super().__init__(f"weighted norm diverges at p = {p!r}")
        self.p = p


class OutOfRange(HspwLabError, ValueError):
    pass


class DegenerateInput(HspwLabError):
    pass


class RhsDivergent(HspwLabError):
    pass


class BudgetExhausted(HspwLabError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InfeasibleFamily(HspwLabError):
    pass


class NonpositiveLambda(HspwLabError, ValueError):
    pass


class NoSolution(HspwLabError, ValueError):
    pass


class UsageError(HspwLabError):
    """Bad CLI/config input; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class InvalidGeneratingFunction(HspwLabError, ValueError):
    """A generating function is not strictly positive where it is evaluated."""
