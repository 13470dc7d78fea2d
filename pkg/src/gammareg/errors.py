"""Exception hierarchy shared by all modules."""


class GammaRegError(Exception):
    """Base class for errors raised by gammareg."""


class InvalidInputError(GammaRegError, ValueError):
    """Raised when an argument violates a documented precondition on its value."""


class PreconditionError(GammaRegError):
    """Raised when an operator lacks a structural property (e.g. invertibility)."""


class MethodMismatchError(GammaRegError):
    """Raised when a norm evaluator is applied outside its exact regime."""


class UnsupportedError(GammaRegError):
    """Raised for spaces where an evaluator has no meaning (e.g. q = inf)."""


class SingularityError(GammaRegError):
    """Raised when a resolvent is requested at a spectral point."""


class CertificateError(GammaRegError):
    """Raised when a holomorphic function violates its declared decay bound."""


class NotSectorialError(GammaRegError):
    """Raised when an eigenvalue lies on the closed negative real axis."""


class NotAnalyticError(GammaRegError):
    """Raised when the sector angle is too wide for an analytic semigroup."""


class InsufficientGridError(GammaRegError):
    """Raised when a grid does not resolve the region an estimate needs."""


class ContractViolationError(GammaRegError):
    """Raised when an integrand is not adapted to the driving noise."""


class SmallnessError(GammaRegError):
    """Raised when the Lipschitz contraction factor is not below one."""


class DivergenceError(GammaRegError):
    """Raised when Picard iterates stop contracting."""


class NonSplittableError(GammaRegError):
    """Raised when interval bisection cannot meet the requested tolerance."""


class SpecViolationError(GammaRegError):
    """Raised when sampled data contradict declared Lipschitz constants."""


class InvalidConfigError(GammaRegError, ValueError):
    """Raised for malformed or inconsistent experiment configuration."""
