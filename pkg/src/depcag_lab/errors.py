"""Exception hierarchy for depcag_lab."""


class DepcagError(Exception):
    """Base class for every error raised by the package."""


class OutOfDomain(DepcagError, ValueError):
    pass


class DomainError(DepcagError, ValueError):
    pass


class EvaluationFailure(DepcagError, ArithmeticError):
    pass


class NoConvergence(DepcagError, ArithmeticError):
    pass


class SingularD(DepcagError, ArithmeticError):
    """A correction matrix D_n(t) is (numerically) singular."""


class SingularZ(DepcagError, ArithmeticError):
    pass


class ZeroDenominator(DepcagError, ArithmeticError):
    pass


class NotDelayed(DepcagError, ValueError):
    """Operation requires xi_n == t_n for every interval."""


class NoContraction(DepcagError, ArithmeticError):
    pass


class MaxIterExceeded(DepcagError, ArithmeticError):
    pass


class ParseError(DepcagError, ValueError):
    pass


class ValidationError(DepcagError, ValueError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))
