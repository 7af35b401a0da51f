"""Loop realization of the affine algebra A^(1)_{n-1}.

Elements are trace-less ``n x n`` loops with a central coordinate.  The
bracket is ``[X + a c, Y + b c] = [X, Y] + omega(X, Y) c`` with
``omega(A, B) = kappa / (r k0) * oint Tr(A' B) dz / 2 pi i``.  The principal
Heisenberg generators are the powers ``Lambda^j``, ``j`` not divisible by
``n``; the homogeneous ones are ``z^j H_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DimensionMismatch, NotAnExponent, SeriesNotConverged
from .grassmann import FlowGroupElement, GrassmannPoint, generalized_sato_logderiv, jump
from .loops import (
    BlockLoop,
    CircleGrid,
    contour_trace_integral,
    expm_samples,
    inverse,
    invert_samples,
    multiply,
    sample,
    sample_derivative,
    z_derivative,
)
from .rhfactor import birkhoff_factorize

TRACE_TOL = 1e-12


@dataclass(frozen=True)
class AffineData:
    """Normalization data of an untwisted affine algebra; only ``A1`` is instantiated."""

    family: str = "A1"
    n: int = 2
    kappa: float = 1.0
    r: int = 1
    k0: int = 1

    def __post_init__(self):
        if self.family != "A1":
            raise ValueError(f"unsupported family {self.family!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if (self.kappa, self.r, self.k0) != (1.0, 1, 1):
            raise ValueError("family A1 has kappa = r = k0 = 1")

    @property
    def coxeter(self) -> int:
        return self.n

    @property
    def scale(self) -> float:
        return self.kappa / (self.r * self.k0)

    def is_exponent(self, j: int) -> bool:
        return j % self.n != 0

    def exponents(self, bound: int) -> list[int]:
        return [j for j in range(-bound, bound + 1) if self.is_exponent(j)]


@dataclass(frozen=True)
class ExtendedElement:
    loop: BlockLoop
    central: complex = 0j

    def __post_init__(self):
        traces = np.abs(np.trace(self.loop.coeffs, axis1=1, axis2=2))
        if traces.size and traces.max() > TRACE_TOL:
            raise ValueError("loop part must be trace-less")
        object.__setattr__(self, "central", complex(self.central))

    def __add__(self, other: "ExtendedElement") -> "ExtendedElement":
        return ExtendedElement(self.loop + other.loop, self.central + other.central)

    def __sub__(self, other: "ExtendedElement") -> "ExtendedElement":
        return ExtendedElement(self.loop - other.loop, self.central - other.central)

    def __mul__(self, scalar) -> "ExtendedElement":
        return ExtendedElement(self.loop * scalar, self.central * scalar)

    __rmul__ = __mul__


def _unit(n: int, i: int, j: int) -> np.ndarray:
    """Matrix unit ``e_{i,j}`` with 1-based indices."""
    m = np.zeros((n, n), dtype=complex)
    m[i - 1, j - 1] = 1.0
    return m


def cocycle_coefficients(A: BlockLoop, B: BlockLoop) -> complex:
    """``sum_k k Tr(A_k B_-k)``: the contour integral read off the Fourier data."""
    lo, hi = max(A.k_min, -B.k_max), min(A.k_max, -B.k_min)
    if lo > hi:
        return 0j
    ks = np.arange(lo, hi + 1)
    a = A.coeff_range(lo, hi)
    b = B.coeff_range(-hi, -lo)[::-1]
    return complex(np.sum(ks * np.einsum("kij,kji->k", a, b)))


def cocycle(A: BlockLoop, B: BlockLoop, data: AffineData, grid: CircleGrid | None = None) -> complex:
    """``omega(A, B)`` by quadrature on the circle."""
    if A.n != B.n:
        raise DimensionMismatch("cocycle arguments differ in size")
    grid = grid or CircleGrid.for_loops(A, B)
    vals = sample(z_derivative(A), grid) @ sample(B, grid)
    return data.scale * contour_trace_integral(vals)


def extended_bracket(X: ExtendedElement, Y: ExtendedElement, data: AffineData) -> ExtendedElement:
    """Centrally extended bracket.

    The central part is the antisymmetrized coefficient sum, so
    ``[X, Y] = -[Y, X]`` holds bit for bit.
    """
    loop, c = _bracket(X.loop, Y.loop, data)
    return ExtendedElement(loop, c)


def _bracket(A: BlockLoop, B: BlockLoop, data: AffineData) -> tuple[BlockLoop, complex]:
    if A.n != B.n:
        raise DimensionMismatch("bracket arguments differ in size")
    loop = multiply(A, B) - multiply(B, A)
    c = 0.5 * (cocycle_coefficients(A, B) - cocycle_coefficients(B, A))
    return loop.trim(), data.scale * c


@dataclass(frozen=True)
class WeylGenerators:
    e: tuple
    f: tuple
    coroots: tuple


def weyl_generators(n: int) -> WeylGenerators:
    """``e_0 = z e_{1,n}``, ``e_i = e_{i+1,i}``, ``f_0 = z^-1 e_{n,1}``, ``f_i = e_{i,i+1}``."""
    data = AffineData(n=n)
    e = [ExtendedElement(BlockLoop.from_dict({1: _unit(n, 1, n)}, n))]
    f = [ExtendedElement(BlockLoop.from_dict({-1: _unit(n, n, 1)}, n))]
    for i in range(1, n):
        e.append(ExtendedElement(BlockLoop.constant(_unit(n, i + 1, i))))
        f.append(ExtendedElement(BlockLoop.constant(_unit(n, i, i + 1))))
    coroots = [extended_bracket(a, b, data) for a, b in zip(e, f)]
    return WeylGenerators(tuple(e), tuple(f), tuple(coroots))


def principal_lambda(n: int) -> BlockLoop:
    """Subdiagonal of ones plus ``z`` in the top-right corner."""
    if n < 2:
        raise ValueError("n must be at least 2")
    c0 = np.diag(np.ones(n - 1, dtype=complex), -1)
    return BlockLoop.from_dict({0: c0, 1: _unit(n, 1, n)}, n)


def matrix_power(loop: BlockLoop, j: int) -> BlockLoop:
    """``loop^j`` by repeated block convolution (``j >= 0``)."""
    out = BlockLoop.identity(loop.n)
    for _ in range(j):
        out = multiply(out, loop).trim()
    return out


def lambda_power(n: int, j: int) -> BlockLoop:
    """``Lambda^j`` for any integer ``j``, exponents or not."""
    lam = principal_lambda(n)
    if j >= 0:
        return matrix_power(lam, j)
    return matrix_power(inverse(lam, CircleGrid(64)), -j)


def lambda_j(n: int, j: int) -> BlockLoop:
    """Principal Heisenberg generator ``Lambda_j = Lambda^j``, ``j`` not divisible by ``n``."""
    if j % n == 0:
        raise NotAnExponent(j, n)
    return lambda_power(n, j)


def adjoint_c_coefficient(X: BlockLoop, Y: BlockLoop, data: AffineData, series_order: int = 12,
                          grid: CircleGrid | None = None) -> tuple[complex, complex]:
    """Central coefficient of ``exp(ad X) Y`` by the series and by a contour integral.

    For ``X`` with only negative modes each application of ``ad X`` lowers
    the top mode, and the central contributions stop once no positive mode is
    left.  The series is declared converged at that point; reaching
    ``series_order`` terms first raises ``SeriesNotConverged``.
    """
    if series_order < 12:
        raise ValueError("series_order must be at least 12")
    if X.k_max >= 0 and np.any(X.coeff_range(0, X.k_max)):
        raise ValueError("X must have strictly negative support")
    term = Y
    series = 0j
    for m in range(1, series_order + 1):
        term, c = _bracket(X, term, data)
        series += c / math.factorial(m)
        if term.k_max <= 0 or not np.any(term.coeffs):
            break
    else:
        raise SeriesNotConverged(f"ad-series still has positive modes after {series_order} terms")

    grid = grid or CircleGrid.for_loops(X, Y, minimum=256)
    xs = sample(X, grid)
    e_plus, e_minus = expm_samples(xs), expm_samples(-xs)
    vals = sample_derivative(e_plus) @ sample(Y, grid) @ e_minus
    return complex(series), data.scale * contour_trace_integral(vals)


def principal_flow(n: int, times: Mapping[int, complex], grid: CircleGrid) -> FlowGroupElement:
    """Flows generated by ``Lambda^j`` for the labels ``j >= 1`` in ``times``."""
    labels = sorted(int(j) for j in times) or [1]
    if labels[0] < 1:
        raise ValueError("principal flow labels must be positive")
    gens = {j: lambda_power(n, j) for j in labels}
    return FlowGroupElement(gens, {int(j): t for j, t in times.items()}, grid)


def cartan_h(n: int, i: int) -> np.ndarray:
    """``H_i = e_{i+1,i+1} - e_{i,i}``, the matrix part of the simple coroot ``i``."""
    return _unit(n, i + 1, i + 1) - _unit(n, i, i)


def homogeneous_flow(n: int, times: Mapping[tuple[int, int], complex], grid: CircleGrid
                     ) -> FlowGroupElement:
    """Flows generated by ``z^j H_i`` for labels ``(j, i)``, ``j >= 1``, ``1 <= i < n``."""
    gens = {}
    for j, i in times:
        if j < 1 or not 1 <= i < n:
            raise ValueError(f"bad homogeneous flow label {(j, i)}")
        gens[(j, i)] = BlockLoop.from_dict({j: cartan_h(n, i)}, n)
    return FlowGroupElement(gens, times, grid)


@dataclass(frozen=True)
class HeisenbergBasis:
    labels: tuple
    elements: tuple
    cocycles: dict


def homogeneous_heisenberg_basis(n: int, j_max: int) -> HeisenbergBasis:
    """``z^j H_i`` for ``|j| <= j_max`` with the pairings ``omega(z^j H_i, z^-j H_i')``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    data = AffineData(n=n)
    labels, elements = [], []
    for j in range(-j_max, j_max + 1):
        for i in range(1, n):
            labels.append((j, i))
            elements.append(BlockLoop.from_dict({j: cartan_h(n, i)}, n))
    table = {}
    for j in range(-j_max, j_max + 1):
        for i in range(1, n):
            for i2 in range(1, n):
                a = BlockLoop.from_dict({j: cartan_h(n, i)}, n)
                b = BlockLoop.from_dict({-j: cartan_h(n, i2)}, n)
                table[(j, i, i2)] = cocycle(a, b, data)
    return HeisenbergBasis(tuple(labels), tuple(elements), table)


def ds_tau_relation_check(point: GrassmannPoint, flow: FlowGroupElement, j: int,
                          data: AffineData, P: int = 32) -> float:
    """``|-(Theta Lambda_j Theta^-1)_c - kappa/(r k0) d log tau_SSW / dt_j|`` with ``Theta = Gamma_-``.

    The central coefficient is the contour form of the adjoint formula and
    the tau derivative comes from the generalized Sato formula.
    """
    if not data.is_exponent(j):
        raise NotAnExponent(j, data.n)
    if j not in flow.generators:
        raise KeyError(f"flow has no generator {j}")
    grid = flow.grid
    sol = birkhoff_factorize(jump(point, flow), P, grid)
    theta = sample(sol.gamma_minus, grid)
    vals = sample(z_derivative(sol.gamma_minus), grid) @ flow.generator_samples(j) @ invert_samples(theta)
    c_coeff = data.scale * contour_trace_integral(vals)
    sato = generalized_sato_logderiv(point, flow, j, P)
    return float(abs(-c_coeff - data.scale * sato))
