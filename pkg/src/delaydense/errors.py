"""Exception and warning types shared across the package."""


class DelayDenseError(Exception):
    """Base class for all package errors."""


class MissingParam(DelayDenseError):
    """A model parameter required by the chosen model is absent."""


class InvalidParam(DelayDenseError):
    """A model parameter violates an invariant (e.g. x1 >= x2)."""


class Overflow(DelayDenseError):
    """A computed value exceeded 1e12 in magnitude or became non-finite."""


class DomainError(DelayDenseError):
    """An input lies outside the domain an operation is defined on."""


class SingularTime(DelayDenseError):
    """The linear solution map is singular (beta(t) ~ 0); density -> delta."""


class NotImplementedWindow(DelayDenseError):
    """Explicit transport formula requested outside its implemented window."""


class EmptyBin(DelayDenseError):
    """A partition bin was never visited; the partition must be coarsened."""

    def __init__(self, bin_index, msg=None):
        self.bin_index = bin_index
        super().__init__(msg or f"partition bin {bin_index} never visited")


class NoConvergence(DelayDenseError):
    """Iteration failed to reach the requested tolerance."""


class UnsupportedModel(DelayDenseError):
    """The model has no registered feedback branch inverses."""


class LostClassification(DelayDenseError):
    """A bisection midpoint could not be classified even after extending t_max."""


class BasinAmbiguity(DelayDenseError):
    """A straddle-orbit bisection midpoint could not be assigned to a basin."""


class NoInteriorMaximum(DelayDenseError):
    """No proper interior-maximum sub-triple improves the escape time (stall)."""


class StaggerExhausted(DelayDenseError):
    """No successful stagger found within the attempt budget (after backtracking)."""


class DegenerateTangent(DelayDenseError):
    """A tangent-vector growth factor underflowed during exponent accumulation."""


class UndefinedDimension(DelayDenseError):
    """Kaplan-Yorke dimension undefined (no positive prefix sum or no negative follower)."""


class InsufficientPairs(DelayDenseError):
    """A correlation sum C(r) is zero inside the requested fit window."""


class ParseError(DelayDenseError):
    """Config file could not be parsed; carries the offending line number."""

    def __init__(self, line_no, msg):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {msg}")


class ValidationError(DelayDenseError):
    """Config is well-formed but semantically invalid; carries the field name."""

    def __init__(self, field, msg=None):
        self.field = field
        super().__init__(msg or f"invalid or missing field: {field}")


class EquilibriumTrap(UserWarning):
    """The sampled trajectory landed on a fixed point (trivial histogram)."""
