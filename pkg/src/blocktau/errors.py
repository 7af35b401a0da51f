"""Exception hierarchy.

Everything raised on purpose by the library derives from ``BlockTauError``.
``NumericalFailure`` marks conditions where the input was well formed but the
computation could not be completed to tolerance; the CLI maps it to exit
code 3.
"""


class BlockTauError(Exception):
    pass


class NumericalFailure(BlockTauError):
    pass


class ZeroArgument(BlockTauError, ValueError):
    """Evaluation at z = 0 of a loop with negative Fourier modes."""


class DimensionMismatch(BlockTauError, ValueError):
    pass


class GridTooCoarse(BlockTauError, ValueError):
    """A loop's support does not fit on the quadrature grid without aliasing."""


class SingularAtNode(NumericalFailure):
    def __init__(self, node, message=None):
        self.node = int(node)
        super().__init__(message or f"matrix symbol is singular at grid node m={self.node}")


class TailNotConverged(NumericalFailure):
    pass


class PhaseJumpTooLarge(NumericalFailure):
    pass


class NonzeroWinding(NumericalFailure):
    def __init__(self, winding, message=None):
        self.winding = int(winding)
        super().__init__(message or f"winding number of det is {self.winding}, expected 0")


class NotConverged(NumericalFailure):
    def __init__(self, parameter, message=None):
        self.parameter = parameter
        super().__init__(message or f"not converged at {parameter}")


class DivergenceDetected(NumericalFailure):
    pass


class SingularSystem(NumericalFailure):
    """Factorization system is numerically singular (point off the big cell)."""


class InverseFailed(NumericalFailure):
    pass


class SeriesNotConverged(NumericalFailure):
    pass


class NotScalar(BlockTauError, ValueError):
    pass


class WindowEmpty(BlockTauError, ValueError):
    pass


class NotAnExponent(BlockTauError, ValueError):
    def __init__(self, j, n):
        self.j, self.n = j, n
        super().__init__(f"{j} is not an exponent of A^(1)_{n - 1} (multiple of {n})")
