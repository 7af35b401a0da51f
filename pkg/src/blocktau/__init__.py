"""Block Toeplitz determinants, Riemann-Hilbert factorization and tau functions of loop-group flows."""

from .errors import BlockTauError, NumericalFailure
from .loops import BlockLoop, CircleGrid

__all__ = ["BlockLoop", "BlockTauError", "CircleGrid", "NumericalFailure"]
__version__ = "0.1.0"
