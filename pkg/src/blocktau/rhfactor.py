"""Riemann-Hilbert (Birkhoff) factorization on the unit circle.

Given a jump ``J`` with zero winding we look for ``Gamma_-`` holomorphic
outside the disc with ``Gamma_-(inf) = Id`` such that ``Gamma_+ = Gamma_- J``
is holomorphic inside.  On top of the factorization this module evaluates the
log-derivative of the isomonodromic tau function (Malgrange form) and the
Widom formula for the derivative of the Szego-Widom constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import (
    InverseFailed,
    NonzeroWinding,
    NotConverged,
    NumericalFailure,
    SingularSystem,
)
from .loops import (
    BlockLoop,
    CircleGrid,
    block_norms,
    contour_trace_integral,
    from_samples,
    grid_max_norm,
    invert_samples,
    inverse,
    multiply,
    project,
    sample,
    winding_number,
    z_derivative,
)

COND_LIMIT = 1e12


@dataclass(frozen=True)
class RHSolution:
    gamma_minus: BlockLoop
    gamma_plus: BlockLoop
    residual: float
    P: int
    condition: float = 1.0


@dataclass(frozen=True)
class DualFactorization:
    """``J^-1 = T_+ T_- = S_- S_+`` with both product residuals on the grid."""

    T_plus: BlockLoop
    T_minus: BlockLoop
    S_minus: BlockLoop
    S_plus: BlockLoop
    residual_T: float
    residual_S: float


def _galerkin_solve(J: BlockLoop, P: int, cond_limit: float) -> tuple[BlockLoop, float]:
    """Least-squares solve of ``p_-(Gamma_- J) = 0`` for ``Gamma_- = Id + sum c_k z^-k``.

    The equation for mode ``m < 0`` reads ``sum_k c_k J_{m+k} = -J_m``; modes
    ``-1 .. -(P + q)`` are matched, ``q`` the negative bandwidth of ``J``.
    """
    n = J.n
    q = max(-J.k_min, 0)
    rows = P + q
    ms = -np.arange(1, rows + 1)
    ks = np.arange(1, P + 1)
    table = J.coeff_range(int(ms.min()), P)  # indices m + k run over [-(P+q)+1, P-1]
    # A[k, m] = J_{m+k}, as an (nP) x (n rows) block matrix acting on the right of c
    idx = ks[:, None] + ms[None, :] - int(ms.min())
    A = table[idx].transpose(0, 2, 1, 3).reshape(P * n, rows * n)
    b = -J.coeff_range(int(ms.min()), -1)[::-1]  # -J_m for m = -1, -2, ...
    b = b.transpose(1, 0, 2).reshape(n, rows * n)
    # c A = b  <=>  A^T c^T = b^T
    sol, _, rank, sv = np.linalg.lstsq(A.T, b.T, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if rank < P * n or cond > cond_limit:
        raise SingularSystem(
            f"factorization system has condition {cond:.3g} (partial indices nonzero "
            "or point off the big cell)")
    c = sol.T.reshape(n, P, n).transpose(1, 0, 2)
    coeffs = np.concatenate([c[::-1], np.eye(n, dtype=complex)[None]], axis=0)
    return BlockLoop(coeffs, -P, J.tail_tol), cond


def birkhoff_factorize(J: BlockLoop, P: int = 32, grid: CircleGrid | None = None,
                       check: bool = True, conv_tol: float = 1e-10,
                       cond_limit: float = COND_LIMIT) -> RHSolution:
    """Solve ``Gamma_+ = Gamma_- J`` with ``Gamma_- = Id + O(1/z)`` truncated at depth ``P``.

    With ``check`` the solve is repeated at depth ``2P`` and the shared
    coefficients must agree within ``conv_tol``; the deeper solution is
    returned.
    """
    grid = grid or CircleGrid.for_loops(J, minimum=256)
    w = winding_number(J, grid)
    if w != 0:
        raise NonzeroWinding(w)
    gm, cond = _galerkin_solve(J, P, cond_limit)
    if check:
        gm2, cond = _galerkin_solve(J, 2 * P, cond_limit)
        shared = gm2.coeff_range(-P, 0) - gm.coeff_range(-P, 0)
        drift = float(np.max(block_norms(shared)))
        if drift > conv_tol:
            raise NotConverged(f"P={P}", f"Gamma_- moved by {drift:.3g} when doubling P={P}")
        gm, P = gm2, 2 * P
    prod = multiply(gm, J)
    gp = project(prod, "plus")
    neg = project(prod, "minus")
    residual = float(np.sum(block_norms(neg.coeffs))) if prod.k_min < 0 else 0.0
    return RHSolution(gm, gp, residual, P, cond)


def jump_residual(sol: RHSolution, J: BlockLoop, grid: CircleGrid) -> float:
    """Grid max-norm of ``Gamma_- J - Gamma_+``."""
    d = sample(sol.gamma_minus, grid) @ sample(J, grid) - sample(sol.gamma_plus, grid)
    return grid_max_norm(d)


def dual_factorize(J: BlockLoop, sol: RHSolution, gamma: BlockLoop, g_samples: np.ndarray,
                   grid: CircleGrid, tail_tol: float = 1e-14) -> DualFactorization:
    """``T_+ = Gamma_+^-1, T_- = Gamma_-`` and ``S_- = gamma^-1, S_+ = g``."""
    try:
        t_plus = inverse(sol.gamma_plus, grid, tail_tol)
        s_minus = inverse(gamma, grid, tail_tol)
    except NumericalFailure as exc:
        raise InverseFailed(str(exc)) from exc
    s_plus = from_samples(g_samples, tail_tol)
    j_inv = invert_samples(sample(J, grid))
    res_t = grid_max_norm(sample(t_plus, grid) @ sample(sol.gamma_minus, grid) - j_inv)
    res_s = grid_max_norm(sample(s_minus, grid) @ sample(s_plus, grid) - j_inv)
    return DualFactorization(t_plus, sol.gamma_minus, s_minus, s_plus, res_t, res_s)


def malgrange_jmu_logderiv(sol: RHSolution, J: BlockLoop, dJ_dt: BlockLoop,
                           grid: CircleGrid) -> complex:
    """``oint Tr(Gamma_-^-1 Gamma_-' dJ/dt J^-1) dz / 2 pi i``."""
    gm = sample(sol.gamma_minus, grid)
    try:
        gm_inv = invert_samples(gm)
        j_inv = invert_samples(sample(J, grid))
    except NumericalFailure as exc:
        raise InverseFailed(str(exc)) from exc
    dgm = sample(z_derivative(sol.gamma_minus), grid)
    xi = sample(dJ_dt, grid) @ j_inv
    return contour_trace_integral(gm_inv @ dgm @ xi)


def widom_derivative(J: BlockLoop, dual: DualFactorization, dJ_dt: BlockLoop,
                     grid: CircleGrid) -> complex:
    """``-oint Tr[(T_+' T_- - S_-' S_+) dphi/dt] dz / 2 pi i`` with ``phi = J``."""
    a = sample(z_derivative(dual.T_plus), grid) @ sample(dual.T_minus, grid)
    b = sample(z_derivative(dual.S_minus), grid) @ sample(dual.S_plus, grid)
    return -contour_trace_integral((a - b) @ sample(dJ_dt, grid))


JumpFamily = Callable[[Mapping], tuple[BlockLoop, Mapping]]


def malgrange_form(jump_family: JumpFamily, times: Mapping, direction, P: int,
                   grid: CircleGrid) -> complex:
    J, dJ = jump_family(times)
    sol = birkhoff_factorize(J, P, grid)
    return malgrange_jmu_logderiv(sol, J, dJ[direction], grid)


def closedness_residual(jump_family: JumpFamily, t, t_prime, h: float, times: Mapping,
                        P: int = 32, grid: CircleGrid | None = None) -> float:
    """``|d_{t'} omega(d_t) - d_t omega(d_{t'})|`` by central differences.

    ``jump_family(times)`` returns the jump and a mapping from flow label to
    ``dJ/dt`` at those times.
    """
    grid = grid or CircleGrid(256)

    def shifted(label, step):
        out = dict(times)
        out[label] = out.get(label, 0.0) + step
        return out

    d_tp_omega_t = (malgrange_form(jump_family, shifted(t_prime, h), t, P, grid)
                    - malgrange_form(jump_family, shifted(t_prime, -h), t, P, grid)) / (2 * h)
    d_t_omega_tp = (malgrange_form(jump_family, shifted(t, h), t_prime, P, grid)
                    - malgrange_form(jump_family, shifted(t, -h), t_prime, P, grid)) / (2 * h)
    return abs(d_tp_omega_t - d_t_omega_tp)
