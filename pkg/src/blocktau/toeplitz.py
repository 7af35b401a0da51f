"""Block Toeplitz and Hankel matrices of a loop, and the large-N limit of D_N.

``T(phi)`` has block ``(j, k) = phi_{j-k}``, ``H(phi)`` block ``phi_{j+k+1}``
and ``H~(phi)`` block ``phi_{-j-k-1}``, with ``j, k >= 0``.  The limit
``D_N(phi) / G(phi)^(N+1)`` is computed two ways: as the Fredholm determinant
``det(Id - H(phi) H~(phi^-1))`` and by extrapolating the finite sections.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import DivergenceDetected, NotConverged, NotScalar, WindowEmpty
from .loops import (
    BlockLoop,
    CircleGrid,
    inverse,
    log_det_samples,
    log_geometric_mean,
    multiply,
    sample,
)

log = logging.getLogger(__name__)

SINGULAR = complex(-math.inf, 0.0)


def wrap_log(value: complex) -> complex:
    """Bring the imaginary part of a logarithm into ``(-pi, pi]``."""
    value = complex(value)
    if not math.isfinite(value.real):
        return value
    im = math.remainder(value.imag, 2 * math.pi)
    if im == -math.pi:
        im = math.pi
    return complex(value.real, im)


def _block_matrix(phi: BlockLoop, rows: int, cols: int, index) -> np.ndarray:
    n = phi.n
    j, k = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    lo, hi = int(np.min(index(j, k), initial=0)), int(np.max(index(j, k), initial=0))
    table = phi.coeff_range(lo, hi)
    blocks = table[index(j, k) - lo]  # (rows, cols, n, n)
    return blocks.transpose(0, 2, 1, 3).reshape(rows * n, cols * n)


def toeplitz_matrix(phi: BlockLoop, rows: int, cols: int | None = None) -> np.ndarray:
    return _block_matrix(phi, rows, rows if cols is None else cols, lambda j, k: j - k)


def hankel_matrix(phi: BlockLoop, rows: int, cols: int | None = None) -> np.ndarray:
    return _block_matrix(phi, rows, rows if cols is None else cols, lambda j, k: j + k + 1)


def hankel_tilde_matrix(phi: BlockLoop, rows: int, cols: int | None = None) -> np.ndarray:
    return _block_matrix(phi, rows, rows if cols is None else cols, lambda j, k: -j - k - 1)


@dataclass(frozen=True)
class BlockToeplitzFinite:
    symbol: BlockLoop
    N: int
    data: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class HankelTruncation:
    symbol: BlockLoop
    M_H: int
    H: np.ndarray = field(repr=False)
    H_tilde: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class LimitEstimate:
    """Large-N limit of ``log D_N - (N+1) log G`` with convergence evidence."""

    value: complex
    schedule: tuple
    normalized_sequence: tuple
    extrapolated_error: float
    log_dn: tuple = ()
    log_g: complex = 0j


def assemble_toeplitz(phi: BlockLoop, N: int) -> BlockToeplitzFinite:
    if N < 0:
        raise ValueError("N must be nonnegative")
    return BlockToeplitzFinite(phi, N, toeplitz_matrix(phi, N + 1))


def hankel_truncation(phi: BlockLoop, M_H: int) -> HankelTruncation:
    return HankelTruncation(phi, M_H, hankel_matrix(phi, M_H), hankel_tilde_matrix(phi, M_H))


def log_det(matrix: np.ndarray) -> complex:
    """``log det`` via LU with partial pivoting.

    Moduli and phases are accumulated pivot by pivot so nothing overflows;
    the result is reported on the principal branch.  An exactly zero pivot
    gives the ``SINGULAR`` sentinel ``-inf``.
    """
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.size == 0:
        return 0j
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(matrix, check_finite=False)
    diag = np.diag(lu)
    if np.any(diag == 0):
        return SINGULAR
    swaps = int(np.count_nonzero(piv != np.arange(len(piv))))
    total = complex(np.sum(np.log(np.abs(diag))), np.sum(np.angle(diag)) + math.pi * swaps)
    return wrap_log(total)


def log_det_DN(phi: BlockLoop, N: int) -> complex:
    return log_det(assemble_toeplitz(phi, N).data)


def identity_residual(phi1: BlockLoop, phi2: BlockLoop, N: int) -> float:
    """Max-norm defect of ``T(a)T(b) = T(ab) - H(a)H~(b)`` on a safe window.

    Both sides are applied to the first ``N + 1`` block basis vectors.  The
    inner dimension is taken large enough that every product is exact for
    band-limited symbols; outputs are compared in block rows
    ``0 .. N - bandwidth``.
    """
    bw = phi1.bandwidth + phi2.bandwidth
    if N <= bw:
        raise WindowEmpty(f"N = {N} does not exceed the combined bandwidth {bw}")
    n = phi1.n
    cols = N + 1
    inner = cols + max(phi2.k_max, 0) + max(-phi2.k_min, 0) + 1
    rows = N - bw + 1
    lhs = toeplitz_matrix(phi1, rows, inner) @ toeplitz_matrix(phi2, inner, cols)
    rhs = (toeplitz_matrix(multiply(phi1, phi2), rows, cols)
           - hankel_matrix(phi1, rows, inner) @ hankel_tilde_matrix(phi2, inner, cols))
    assert lhs.shape == (rows * n, cols * n)
    return float(np.max(np.abs(lhs - rhs)))


def fredholm_log_det(phi: BlockLoop, phi_inv: BlockLoop, M_H: int, swap: bool = False) -> complex:
    """``log det(Id - H(phi) H~(phi_inv))`` with both Hankels cut at ``M_H`` blocks.

    ``swap`` evaluates ``det(Id - H~(phi_inv) H(phi))`` instead, which is the
    same Fredholm determinant.
    """
    H = hankel_matrix(phi, M_H)
    Ht = hankel_tilde_matrix(phi_inv, M_H)
    K = Ht @ H if swap else H @ Ht
    return log_det(np.eye(K.shape[0]) - K)


def fredholm_det(phi: BlockLoop, grid: CircleGrid | None = None, M_H: int | None = None,
                 tol: float = 1e-10, max_blocks: int = 4096, swap: bool = False) -> complex:
    """``log D_inf(phi) = log det(Id - H(phi) H~(phi^-1))``.

    The Hankel size starts from the exact finite-rank size plus a margin of 8
    and is doubled until enlarging it by 8 blocks moves the result by at most
    ``tol``.
    """
    grid = grid or CircleGrid.for_loops(phi, minimum=256)
    phi_inv = inverse(phi, grid)
    if M_H is None:
        M_H = max(phi.k_max, 0) + max(-phi_inv.k_min, 0) + 8
    M_H = max(M_H, 1)
    while M_H <= max_blocks:
        a = fredholm_log_det(phi, phi_inv, M_H, swap)
        b = fredholm_log_det(phi, phi_inv, M_H + 8, swap)
        if a == SINGULAR and b == SINGULAR:
            return SINGULAR
        if abs(wrap_log(a - b)) <= tol:
            return b
        M_H *= 2
    raise NotConverged(f"M_H={M_H}", f"Fredholm determinant not stable up to {max_blocks} blocks")


def _extrapolate(ns: Sequence[int], xs: Sequence[complex], noise: float) -> tuple[complex, float]:
    """Fit ``L + C rho^N`` through the last three points.

    Returns the limit and the magnitude of the last correction.  Once the
    increments reach the noise floor the last value is returned as is.
    """
    if len(xs) == 1:
        return xs[-1], 0.0
    if len(xs) == 2:
        return xs[-1], abs(xs[-1] - xs[-2])
    (n0, n1, n2), (x0, x1, x2) = ns[-3:], xs[-3:]
    d1, d2 = x1 - x0, x2 - x1
    if abs(d1) <= noise or abs(d2) <= noise:
        return x2, abs(d2)
    p, q = n1 - n0, n2 - n1
    s = q / p
    r = abs(d2) / abs(d1)
    # with u = rho^p: |d2/d1| = u (u^s - 1) / (u - 1), increasing from 0 to s on (0, 1)
    if r >= s:
        raise DivergenceDetected(f"normalized sequence is not contracting (increment ratio {r:.3g})")
    u = scipy.optimize.brentq(lambda u: u * (u ** s - 1) / (u - 1) - r, 1e-300, 1 - 1e-15)
    v = u ** s
    corr = d2 * v / (1 - v)
    return x2 + corr, abs(corr)


def szego_widom_limit(phi: BlockLoop, schedule: Sequence[int], grid: CircleGrid | None = None,
                      noise: float = 1e-12) -> LimitEstimate:
    """Extrapolate ``log D_N - (N+1) log G(phi)`` along an increasing schedule.

    Singular finite sections are skipped with a warning.
    """
    schedule = [int(N) for N in schedule]
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly increasing")
    grid = grid or CircleGrid.for_loops(phi, minimum=256)
    log_g = log_geometric_mean(phi, grid)  # raises NonzeroWinding
    used, norm, raw = [], [], []
    for N in schedule:
        ld = log_det_DN(phi, N)
        if ld == SINGULAR:
            log.warning("D_%d is singular; skipped", N)
            continue
        used.append(N)
        raw.append(ld)
        norm.append(wrap_log(ld - (N + 1) * log_g))
    if not norm:
        raise DivergenceDetected("all finite sections singular")
    value, err = _extrapolate(used, norm, noise)
    return LimitEstimate(value, tuple(used), tuple(norm), float(err), tuple(raw), log_g)


def strong_szego_scalar(phi: BlockLoop, grid: CircleGrid | None = None,
                        term_tol: float = 1e-16) -> complex:
    """Classical scalar limit ``sum_{k>=1} k s_k s_{-k}`` from the Fourier data of ``log phi``."""
    if phi.n != 1:
        raise NotScalar("strong Szego formula needs a scalar symbol")
    grid = grid or CircleGrid.for_loops(phi, minimum=256)
    logs = log_det_samples(sample(phi, grid))
    s = np.fft.fft(logs) / grid.M
    total = 0j
    for k in range(1, grid.M // 2):
        term = k * s[k] * s[-k]
        total += term
        if abs(term) < term_tol and abs(s[k]) < term_tol and abs(s[-k]) < term_tol:
            break
    return complex(total)
