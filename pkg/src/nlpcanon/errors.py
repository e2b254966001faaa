"""Exception hierarchy shared by every nlpcanon module."""


class NLPCanonError(Exception):
    """Base class for all errors raised by nlpcanon."""


class ParseError(NLPCanonError):
    """Malformed expression or problem document.

    ``offset`` is the byte offset into the parsed text and ``expected`` the
    set of tokens that would have been accepted there.
    """

    def __init__(self, message, offset=0, expected=()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(detail)


class UnknownVariable(ParseError):
    pass


class ActivityError(NLPCanonError):
    """A constraint is not active (nonzero) at the base point."""


class DomainError(NLPCanonError, ValueError):
    """A function was evaluated outside its domain (log of x <= 0, ...)."""


class NonFiniteError(NLPCanonError, ArithmeticError):
    pass


class NoConvergence(NLPCanonError):
    pass


class IterationCap(NLPCanonError):
    pass


class DegenerateError(NLPCanonError):
    """Two quadratic forms share a nonzero common zero direction."""


class HypothesisViolated(NLPCanonError):
    """A hypothesis of the analysis does not hold.

    ``witness`` optionally carries a vector that demonstrates the failure.
    """

    def __init__(self, message, witness=None, **details):
        self.witness = witness
        self.details = details
        super().__init__(message)


class NotProportional(HypothesisViolated):
    """A Hessian family is not a set of multiples of one matrix.

    ``direction`` is a unit vector v with rank [H_1 v, ..., H_p v] > 1.
    """

    def __init__(self, message, index, residual, direction=None):
        self.index = index
        self.residual = residual
        self.direction = direction
        super().__init__(message, witness=direction, index=index, residual=residual)


class GenerationFailed(NLPCanonError):
    pass


class RadiusError(NLPCanonError):
    pass


class PreconditionFailed(NLPCanonError):
    pass


class RankDeficientEqualities(HypothesisViolated):
    pass


class RankError(NLPCanonError):
    pass


class NewtonDivergence(NLPCanonError):
    pass


class NegativeMultiplier(NLPCanonError, ValueError):
    pass


class SeparationFailed(NLPCanonError):
    """No multiplier makes the reduced second-order form semidefinite.

    ``witness`` is a direction in x-coordinates along which the reduced
    form is negative for every sampled multiplier value.
    """

    def __init__(self, message, witness=None, reduced_witness=None, **details):
        self.witness = witness
        self.reduced_witness = reduced_witness
        self.details = details
        super().__init__(message)


class MultiplierRecoveryFailed(NLPCanonError):
    pass
