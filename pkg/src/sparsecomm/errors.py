"""Exception types shared across the package."""


class SparseCommError(Exception):
    pass


class DimensionError(SparseCommError, ValueError):
    """Vector lengths disagree or a vector is empty."""


class DomainError(SparseCommError, ValueError):
    """An argument lies outside the operation's valid range."""


class DegenerateInputError(SparseCommError, ValueError):
    """Input is valid but degenerate (e.g. an all-zero vector)."""


class StructuralError(SparseCommError, ValueError):
    """A sparse selection is malformed."""


class FormatError(SparseCommError, ValueError):
    """A data file does not follow its declared binary format."""


class NumericalError(SparseCommError, ArithmeticError):
    """A computation produced a non-finite value."""


class DivergenceError(NumericalError):
    def __init__(self, iteration, loss):
        super().__init__(f"training diverged at iteration {iteration}: loss={loss}")
        self.iteration = iteration
        self.loss = loss
