"""Grassmannian points, commuting flows and the tau/Baker functions they carry.

A point of the big cell is ``W = gamma H_+`` with ``gamma = Id + O(1/z)``.  A
flow is ``g(t; z) = exp(sum_j t_j Lambda_j(z))`` for commuting, polynomial
generators ``Lambda_j``.  The jump ``J = g^-1 gamma`` links the point to a
Riemann-Hilbert problem; the tau function is the Szego-Widom constant of
``J`` and the Baker function is ``w = g Gamma_-^-1``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import NotScalar
from .loops import (
    BlockLoop,
    CircleGrid,
    block_norms,
    contour_trace_integral,
    expm_samples,
    fourier_coefficients,
    from_samples,
    grid_max_norm,
    invert_samples,
    inverse,
    sample,
    sample_derivative,
)
from .rhfactor import RHSolution, birkhoff_factorize, malgrange_jmu_logderiv
from .toeplitz import SINGULAR, LimitEstimate, fredholm_det, szego_widom_limit

COMMUTE_TOL = 1e-12


@dataclass(frozen=True)
class GrassmannPoint:
    """``W = gamma H_+`` normalized by ``p_+(gamma) = Id``."""

    gamma: BlockLoop
    label: str = ""

    def __post_init__(self):
        g = self.gamma
        if g.k_max > 0:
            raise ValueError("gamma must not have positive Fourier modes")
        c0 = g.coeff(0)
        if np.max(np.abs(c0 - np.eye(g.n))) > 1e-12:
            raise ValueError("constant term of gamma must be the identity")
        coeffs = g.coeff_range(g.k_min, 0)
        coeffs[-1] = np.eye(g.n)
        object.__setattr__(self, "gamma", BlockLoop(coeffs, g.k_min, g.tail_tol, g.tail_mass))

    @property
    def n(self) -> int:
        return self.gamma.n


@dataclass(frozen=True)
class FlowGroupElement:
    """Point ``t`` of the abelian group generated by the ``Lambda_j``."""

    generators: Mapping[Hashable, BlockLoop]
    times: Mapping[Hashable, complex]
    grid: CircleGrid

    def __post_init__(self):
        object.__setattr__(self, "generators", dict(self.generators))
        object.__setattr__(self, "times", dict(self.times))
        unknown = set(self.times) - set(self.generators)
        if unknown:
            raise KeyError(f"times given for unknown flows {sorted(map(str, unknown))}")
        ns = {lam.n for lam in self.generators.values()}
        if len(ns) > 1:
            raise ValueError("generators have different matrix sizes")
        for label, lam in self.generators.items():
            if lam.k_min < 0:
                raise ValueError(f"generator {label!r} is not holomorphic in the disc")
        vals = {k: sample(lam, self.grid) for k, lam in self.generators.items()}
        for a, b in itertools.combinations(vals, 2):
            comm = vals[a] @ vals[b] - vals[b] @ vals[a]
            scale = max(1.0, grid_max_norm(vals[a]) * grid_max_norm(vals[b]))
            if grid_max_norm(comm) > COMMUTE_TOL * scale:
                raise ValueError(f"generators {a!r} and {b!r} do not commute")

    @property
    def n(self) -> int:
        return next(iter(self.generators.values())).n

    def generator_samples(self, label) -> np.ndarray:
        return sample(self.generators[label], self.grid)

    @cached_property
    def exponent_samples(self) -> np.ndarray:
        M, n = self.grid.M, self.n
        A = np.zeros((M, n, n), dtype=complex)
        for label, t in self.times.items():
            if t != 0:
                A += complex(t) * self.generator_samples(label)
        return A

    @cached_property
    def g_samples(self) -> np.ndarray:
        return expm_samples(self.exponent_samples)

    @cached_property
    def g_inv_samples(self) -> np.ndarray:
        return expm_samples(-self.exponent_samples)

    def g_at(self, z: complex) -> np.ndarray:
        """``g(t; z)`` at an arbitrary point of the plane."""
        A = sum((complex(t) * self.generators[k](z) for k, t in self.times.items()),
                np.zeros((self.n, self.n), dtype=complex))
        return scipy.linalg.expm(A)

    def with_times(self, times: Mapping) -> "FlowGroupElement":
        return FlowGroupElement(self.generators, times, self.grid)

    def shifted(self, label, dt: complex) -> "FlowGroupElement":
        times = dict(self.times)
        times[label] = times.get(label, 0.0) + dt
        return self.with_times(times)


def kp_flow(times: Mapping[int, complex], grid: CircleGrid, max_index: int | None = None
            ) -> FlowGroupElement:
    """Scalar KP flows ``Lambda_k = z^k``."""
    top = max([int(k) for k in times] + [max_index or 1])
    gens = {k: BlockLoop.from_dict({k: 1.0}) for k in range(1, top + 1)}
    return FlowGroupElement(gens, {int(k): v for k, v in times.items()}, grid)


@dataclass(frozen=True)
class TauEvaluation:
    log_value: complex
    times: dict
    method: str
    diagnostics: object = None

    @property
    def in_big_cell(self) -> bool:
        return self.log_value != SINGULAR


@dataclass(frozen=True)
class BakerFunction:
    """``w = g Gamma_-^-1`` on the grid together with the factorization it came from."""

    samples: np.ndarray = field(repr=False)
    solution: RHSolution
    grid: CircleGrid

    @cached_property
    def loop(self) -> BlockLoop:
        return from_samples(self.samples, tail_tol=1e-14)

    @cached_property
    def gamma_minus_inverse(self) -> BlockLoop:
        return inverse(self.solution.gamma_minus, self.grid)


def jump(point: GrassmannPoint, flow: FlowGroupElement, tail_tol: float = 1e-14) -> BlockLoop:
    """``J = g^-1 gamma`` from nodewise products; no modes below those of gamma."""
    vals = flow.g_inv_samples @ sample(point.gamma, flow.grid)
    return from_samples(vals, tail_tol, k_floor=point.gamma.k_min)


def jump_derivative(J: BlockLoop, flow: FlowGroupElement, label) -> BlockLoop:
    """``dJ/dt_j = -Lambda_j J`` (exact, the generators commute with g)."""
    return -(flow.generators[label] @ J)


def jump_family(point: GrassmannPoint, flow: FlowGroupElement):
    """Callable ``times -> (J, {label: dJ/dt})`` for the closedness check."""

    def family(times):
        f = flow.with_times(times)
        J = jump(point, f)
        return J, {label: jump_derivative(J, f, label) for label in f.generators}

    return family


def tau_ssw(point: GrassmannPoint, flow: FlowGroupElement, method: str = "fredholm",
            M_H: int | None = None, schedule: Sequence[int] = (16, 32, 64, 128)) -> TauEvaluation:
    """``log tau_SSW(t) = log D_inf(g^-1 gamma)``."""
    J = jump(point, flow)
    if method == "fredholm":
        value = fredholm_det(J, flow.grid, M_H)
        return TauEvaluation(value, dict(flow.times), method, {"M_H": M_H})
    if method == "extrapolation":
        est: LimitEstimate = szego_widom_limit(J, schedule, flow.grid)
        return TauEvaluation(est.value, dict(flow.times), method, est)
    raise ValueError(f"unknown method {method!r}")


def rh_solution(point: GrassmannPoint, flow: FlowGroupElement, P: int = 32) -> RHSolution:
    return birkhoff_factorize(jump(point, flow), P, flow.grid)


def baker_function(point: GrassmannPoint, flow: FlowGroupElement, P: int = 32) -> BakerFunction:
    sol = rh_solution(point, flow, P)
    w = flow.g_samples @ invert_samples(sample(sol.gamma_minus, flow.grid))
    return BakerFunction(w, sol, flow.grid)


def _neg_mass(samples: np.ndarray) -> float:
    ks, c = fourier_coefficients(samples)
    return float(np.sum(block_norms(c[ks < 0])))


def membership_residual(w: BakerFunction | np.ndarray, point: GrassmannPoint,
                        grid: CircleGrid | None = None) -> float:
    """Size of ``p_-(gamma^-1 w)``; zero iff the columns of ``w`` lie in ``W``."""
    if isinstance(w, BakerFunction):
        grid, w = w.grid, w.samples
    vals = invert_samples(sample(point.gamma, grid)) @ w
    return _neg_mass(vals)


def normalization_residual(w: BakerFunction, flow: FlowGroupElement) -> float:
    """Size of ``p_+(g^-1 w) - Id``."""
    ks, c = fourier_coefficients(flow.g_inv_samples @ w.samples)
    c = c[ks >= 0].copy()
    c[0] -= np.eye(flow.n)
    return float(np.sum(block_norms(c)))


def generalized_sato_logderiv(point: GrassmannPoint, flow: FlowGroupElement, label,
                              P: int = 32, baker: BakerFunction | None = None) -> complex:
    """``oint Tr(w' w^-1 Lambda_j) dz / 2 pi i``, the Baker-function route to ``d log tau``."""
    w = baker or baker_function(point, flow, P)
    dw = sample_derivative(w.samples)
    vals = dw @ invert_samples(w.samples) @ flow.generator_samples(label)
    return contour_trace_integral(vals)


def jmu_logderiv(point: GrassmannPoint, flow: FlowGroupElement, label, P: int = 32,
                 solution: RHSolution | None = None) -> complex:
    """Malgrange-form route to ``d log tau / dt_label``."""
    J = jump(point, flow)
    sol = solution or birkhoff_factorize(J, P, flow.grid)
    return malgrange_jmu_logderiv(sol, J, jump_derivative(J, flow, label), flow.grid)


def sato_shift_check(point: GrassmannPoint, flow: FlowGroupElement, z0: complex, K_trunc: int,
                     P: int = 32) -> float:
    """Relative gap between ``w(t; z0)`` and ``g(t; z0) tau(t - [1/z0]) / tau(t)``.

    The Miwa shift ``[1/z0] = (1/z0, 1/(2 z0^2), ...)`` is cut after
    ``K_trunc`` entries, which costs about ``|z0|^-K_trunc``.
    """
    if point.n != 1:
        raise NotScalar("Sato's shift formula is stated for scalar KP")
    z0 = complex(z0)
    if abs(z0) <= 1:
        raise ValueError("z0 must lie outside the unit circle")
    if any(int(k) > K_trunc for k, t in flow.times.items() if t != 0):
        raise ValueError("flow times must vanish beyond K_trunc")
    f = kp_flow(flow.times, flow.grid, max_index=K_trunc)
    shifted = {k: complex(f.times.get(k, 0.0)) - z0 ** (-k) / k for k in range(1, K_trunc + 1)}
    base = tau_ssw(point, f)
    moved = tau_ssw(point, f.with_times(shifted))
    sol = birkhoff_factorize(jump(point, f), P, f.grid)
    gm_inv = from_samples(invert_samples(sample(sol.gamma_minus, f.grid)), k_ceil=0)
    w0 = complex((f.g_at(z0) @ gm_inv(z0))[0, 0])
    rhs = complex(f.g_at(z0)[0, 0]) * np.exp(moved.log_value - base.log_value)
    return float(abs(w0 - rhs) / abs(w0))


def _d(f, axis, order, h):
    """Central differences of ``f`` along ``axis`` (second-order accurate)."""
    s = lambda k: np.roll(f, -k, axis=axis)  # noqa: E731
    if order == 1:
        return (s(1) - s(-1)) / (2 * h)
    if order == 2:
        return (s(1) - 2 * f + s(-1)) / h ** 2
    if order == 3:
        return (s(2) - 2 * s(1) + 2 * s(-1) - s(-2)) / (2 * h ** 3)
    if order == 4:
        return (s(2) - 4 * s(1) + 6 * f - 4 * s(-1) + s(-2)) / h ** 4
    raise ValueError(order)


def tau_lattice(point: GrassmannPoint, center: Sequence[float], h: float, size: int,
                grid: CircleGrid) -> np.ndarray:
    """``tau`` on the cubic ``(t1, t2, t3)`` lattice ``center + h * (i - size//2)``."""
    offs = h * (np.arange(size) - size // 2)
    tau = np.empty((size, size, size), dtype=complex)
    for i, j, k in itertools.product(range(size), repeat=3):
        times = {1: center[0] + offs[i], 2: center[1] + offs[j], 3: center[2] + offs[k]}
        tau[i, j, k] = np.exp(tau_ssw(point, kp_flow(times, grid)).log_value)
    return tau


def hirota_kp_residual(point: GrassmannPoint, center: Sequence[float] = (0.0, 0.0, 0.0),
                       h: float = 1e-2, size: int = 9, grid: CircleGrid | None = None) -> float:
    """``max |(D1^4 + 3 D2^2 - 4 D1 D3) tau.tau| / max |tau|^2`` over interior lattice points."""
    if point.n != 1:
        raise NotScalar("the KP bilinear equation is scalar")
    grid = grid or CircleGrid(256)
    tau = tau_lattice(point, center, h, size, grid)
    t1, t11 = _d(tau, 0, 1, h), _d(tau, 0, 2, h)
    t111, t1111 = _d(tau, 0, 3, h), _d(tau, 0, 4, h)
    t2, t22 = _d(tau, 1, 1, h), _d(tau, 1, 2, h)
    t3 = _d(tau, 2, 1, h)
    t13 = _d(_d(tau, 0, 1, h), 2, 1, h)
    d1_4 = 2 * (tau * t1111 - 4 * t1 * t111 + 3 * t11 ** 2)
    d2_2 = 2 * (tau * t22 - t2 ** 2)
    d1d3 = 2 * (tau * t13 - t1 * t3)
    res = d1_4 + 3 * d2_2 - 4 * d1d3
    interior = res[2:size - 2, 1:size - 1, 1:size - 1]
    return float(np.max(np.abs(interior)) / np.max(np.abs(tau)) ** 2)
