"""Exception hierarchy shared by the solver modules."""


class EntrainError(Exception):
    """Base class for all errors raised by :mod:`entrain`."""


class StepSizeUnderflow(EntrainError):
    pass


class NonFiniteState(EntrainError):
    pass


class StateLeftDomain(EntrainError):
    """A model-specific state check failed during integration."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class NoConvergence(EntrainError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class SingularMonodromy(EntrainError):
    """``Phi(T;0) - I`` is (numerically) singular: 1 is a monodromy eigenvalue."""


class SingularMatrix(EntrainError):
    pass


class IllConditionedTransfer(EntrainError):
    pass


class InadmissibleControl(EntrainError, ValueError):
    pass


class NotIrreducible(EntrainError, ValueError):
    pass


class NotHurwitz(EntrainError, ValueError):
    pass
