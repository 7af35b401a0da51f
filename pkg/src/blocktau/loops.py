"""Matrix-valued loops on the unit circle.

A loop is stored through finitely many block Fourier coefficients
``phi(z) = sum_k phi_k z^k`` for ``k_min <= k <= k_max``.  Anything that is not
a Laurent polynomial (inverses, exponentials, products with entire flows) is
produced by sampling on a uniform :class:`CircleGrid`, acting nodewise, and
transforming back with an explicit truncation tolerance.

Sign and index conventions: sample ``m`` sits at ``z_m = exp(2 pi i m / M)``,
coefficients are recovered as ``fft(samples) / M`` and the coefficient of
``z^k`` lives at index ``k mod M``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    GridTooCoarse,
    NonzeroWinding,
    PhaseJumpTooLarge,
    SingularAtNode,
    TailNotConverged,
    ZeroArgument,
)

DEFAULT_TAIL_TOL = 1e-14

# relative size of |det| below which a node is treated as singular
_SINGULAR_RTOL = 1e-14


@dataclass(frozen=True)
class BlockLoop:
    """Laurent polynomial with ``n x n`` complex matrix coefficients.

    ``coeffs[i]`` is the coefficient of ``z**(k_min + i)``.  ``tail_tol`` is
    the truncation tolerance the loop was produced with (0 for exact data) and
    ``tail_mass`` the Hilbert-Schmidt mass that truncation discarded.
    """

    coeffs: np.ndarray
    k_min: int = 0
    tail_tol: float = 0.0
    tail_mass: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim == 2:
            c = c[None]
        if c.ndim != 3 or c.shape[1] != c.shape[2] or c.shape[0] == 0:
            raise ValueError(f"coefficients must have shape (K, n, n), got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "k_min", int(self.k_min))

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    @property
    def k_max(self) -> int:
        return self.k_min + self.coeffs.shape[0] - 1

    @property
    def bandwidth(self) -> int:
        return max(abs(self.k_min), abs(self.k_max))

    # --- constructors -----------------------------------------------------

    @classmethod
    def constant(cls, matrix) -> "BlockLoop":
        m = np.atleast_2d(np.asarray(matrix, dtype=complex))
        return cls(m[None], 0)

    @classmethod
    def identity(cls, n: int) -> "BlockLoop":
        return cls(np.eye(n, dtype=complex)[None], 0)

    @classmethod
    def zero(cls, n: int) -> "BlockLoop":
        return cls(np.zeros((1, n, n), dtype=complex), 0)

    @classmethod
    def from_dict(cls, blocks: dict, n: int | None = None) -> "BlockLoop":
        """Build from ``{k: matrix}``; scalars are accepted for ``n = 1``."""
        if not blocks:
            return cls.zero(n or 1)
        mats = {int(k): np.atleast_2d(np.asarray(v, dtype=complex)) for k, v in blocks.items()}
        n = n or next(iter(mats.values())).shape[0]
        lo, hi = min(mats), max(mats)
        c = np.zeros((hi - lo + 1, n, n), dtype=complex)
        for k, v in mats.items():
            if v.shape != (n, n):
                raise DimensionMismatch(f"block {k} has shape {v.shape}, expected {(n, n)}")
            c[k - lo] = v
        return cls(c, lo)

    # --- access -----------------------------------------------------------

    def coeff(self, k: int) -> np.ndarray:
        """Coefficient of ``z**k`` (zero outside the support)."""
        if self.k_min <= k <= self.k_max:
            return self.coeffs[k - self.k_min]
        return np.zeros((self.n, self.n), dtype=complex)

    def coeff_range(self, lo: int, hi: int) -> np.ndarray:
        """Coefficients for ``k = lo..hi`` as a ``(hi - lo + 1, n, n)`` array."""
        out = np.zeros((hi - lo + 1, self.n, self.n), dtype=complex)
        a, b = max(lo, self.k_min), min(hi, self.k_max)
        if a <= b:
            out[a - lo:b - lo + 1] = self.coeffs[a - self.k_min:b - self.k_min + 1]
        return out

    def __call__(self, z) -> np.ndarray:
        return eval_loop(self, z)

    def trim(self) -> "BlockLoop":
        """Drop exactly-zero margin coefficients (never thresholds)."""
        nz = np.flatnonzero(np.any(self.coeffs != 0, axis=(1, 2)))
        if nz.size == 0:
            return BlockLoop.zero(self.n)
        return BlockLoop(self.coeffs[nz[0]:nz[-1] + 1], self.k_min + nz[0],
                         self.tail_tol, self.tail_mass)

    def samples(self, grid: "CircleGrid") -> np.ndarray:
        return sample(self, grid)

    # --- algebra ----------------------------------------------------------

    def __add__(self, other: "BlockLoop") -> "BlockLoop":
        _check_dims(self, other)
        lo, hi = min(self.k_min, other.k_min), max(self.k_max, other.k_max)
        return BlockLoop(self.coeff_range(lo, hi) + other.coeff_range(lo, hi), lo,
                         max(self.tail_tol, other.tail_tol))

    def __neg__(self) -> "BlockLoop":
        return BlockLoop(-self.coeffs, self.k_min, self.tail_tol, self.tail_mass)

    def __sub__(self, other: "BlockLoop") -> "BlockLoop":
        return self + (-other)

    def __mul__(self, scalar) -> "BlockLoop":
        if isinstance(scalar, BlockLoop):
            return multiply(self, scalar)
        return BlockLoop(self.coeffs * complex(scalar), self.k_min, self.tail_tol,
                         abs(complex(scalar)) * self.tail_mass)

    __rmul__ = __mul__

    def __matmul__(self, other: "BlockLoop") -> "BlockLoop":
        return multiply(self, other)

    def shift(self, p: int) -> "BlockLoop":
        """Multiply by ``z**p``."""
        return BlockLoop(self.coeffs, self.k_min + p, self.tail_tol, self.tail_mass)

    def conj_transpose(self) -> "BlockLoop":
        """Pointwise adjoint on the circle: ``phi(z)^*`` has coefficients ``phi_{-k}^*``."""
        c = np.conj(np.transpose(self.coeffs[::-1], (0, 2, 1)))
        return BlockLoop(c, -self.k_max, self.tail_tol, self.tail_mass)

    def max_abs_coeff(self) -> float:
        return float(np.max(block_norms(self.coeffs)))


@dataclass(frozen=True)
class CircleGrid:
    """``M`` uniform nodes ``z_m = exp(2 pi i m / M)`` on the unit circle."""

    M: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("grid needs at least two nodes")
        nodes = np.exp(2j * np.pi * np.arange(self.M) / self.M)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def for_loops(cls, *loops: BlockLoop, minimum: int = 0) -> "CircleGrid":
        """Smallest power of two >= 4 * (total bandwidth) + 16."""
        total = sum(lp.bandwidth for lp in loops)
        need = max(4 * total + 16, minimum)
        return cls(1 << max(1, math.ceil(math.log2(need))))


def _check_dims(a: BlockLoop, b: BlockLoop):
    if a.n != b.n:
        raise DimensionMismatch(f"loop dimensions differ: {a.n} vs {b.n}")


def block_norms(blocks: np.ndarray) -> np.ndarray:
    """Hilbert-Schmidt norm of each block of a ``(..., n, n)`` array."""
    return np.sqrt(np.sum(np.abs(blocks) ** 2, axis=(-2, -1)))


def eval_loop(loop: BlockLoop, z) -> np.ndarray:
    z = complex(z)
    if z == 0:
        if loop.k_min < 0:
            raise ZeroArgument("loop has negative modes; cannot evaluate at z = 0")
        return loop.coeff(0).copy()
    ks = np.arange(loop.k_min, loop.k_max + 1)
    return np.tensordot(z ** ks.astype(float), loop.coeffs, axes=(0, 0))


def multiply(a: BlockLoop, b: BlockLoop) -> BlockLoop:
    """Exact block convolution ``(ab)_k = sum_j a_j b_{k-j}``."""
    _check_dims(a, b)
    ka, kb = a.coeffs.shape[0], b.coeffs.shape[0]
    out = np.zeros((ka + kb - 1, a.n, a.n), dtype=complex)
    for i in range(ka):
        out[i:i + kb] += a.coeffs[i] @ b.coeffs
    return BlockLoop(out, a.k_min + b.k_min, max(a.tail_tol, b.tail_tol))


def z_derivative(loop: BlockLoop) -> BlockLoop:
    ks = np.arange(loop.k_min, loop.k_max + 1)
    c = loop.coeffs * ks[:, None, None]
    if loop.coeffs.shape[0] == 1 and loop.k_min == 0:
        return BlockLoop.zero(loop.n)
    return BlockLoop(c, loop.k_min - 1, loop.tail_tol)


def project(loop: BlockLoop, sign: str) -> BlockLoop:
    """``plus`` keeps modes ``k >= 0``, ``minus`` keeps ``k < 0``."""
    if sign in ("plus", "+"):
        if loop.k_max < 0:
            return BlockLoop.zero(loop.n)
        lo = max(loop.k_min, 0)
        return BlockLoop(loop.coeff_range(lo, loop.k_max), lo, loop.tail_tol)
    if sign in ("minus", "-"):
        if loop.k_min >= 0:
            return BlockLoop.zero(loop.n)
        hi = min(loop.k_max, -1)
        return BlockLoop(loop.coeff_range(loop.k_min, hi), loop.k_min, loop.tail_tol)
    raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")


def sample(loop: BlockLoop, grid: CircleGrid) -> np.ndarray:
    """Values ``phi(z_m)`` as an ``(M, n, n)`` array."""
    M = grid.M
    if loop.k_max - loop.k_min + 1 > M:
        raise GridTooCoarse(f"loop spans {loop.k_max - loop.k_min + 1} modes, grid has {M} nodes")
    buf = np.zeros((M, loop.n, loop.n), dtype=complex)
    idx = np.arange(loop.k_min, loop.k_max + 1) % M
    buf[idx] = loop.coeffs
    return np.fft.ifft(buf, axis=0) * M


def fourier_coefficients(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(ks, coeffs)`` with ``ks`` running over ``-M/2 .. M/2 - 1``."""
    samples = np.asarray(samples, dtype=complex)
    M = samples.shape[0]
    c = np.fft.fft(samples, axis=0) / M
    ks = np.fft.fftfreq(M, d=1.0 / M).astype(int)
    order = np.argsort(ks)
    return ks[order], c[order]


def from_samples(samples: np.ndarray, tail_tol: float = DEFAULT_TAIL_TOL,
                 k_floor: int | None = None, k_ceil: int | None = None) -> BlockLoop:
    """Fourier-transform grid samples and truncate the tails.

    Coefficients are kept out to the outermost one whose block norm exceeds
    ``tail_tol * max(1, largest block norm)``.  The three outermost modes on
    each side of the Nyquist band must lie below that threshold, otherwise
    :class:`TailNotConverged` is raised.  ``k_floor``/``k_ceil`` clamp the
    support when analyticity is known a priori.
    """
    samples = np.asarray(samples, dtype=complex)
    if samples.ndim == 1:
        samples = samples[:, None, None]
    M = samples.shape[0]
    ks, c = fourier_coefficients(samples)
    norms = block_norms(c)
    thr = tail_tol * max(1.0, float(norms.max()))
    big = norms > thr
    if np.any(big[:3]) or np.any(big[-3:]):
        raise TailNotConverged(
            f"Fourier tail above {thr:.3g} at the Nyquist band of an M={M} grid; refine the grid")
    sig = ks[big]
    lo = min(int(sig.min()), 0) if sig.size else 0
    hi = max(int(sig.max()), 0) if sig.size else 0
    if k_floor is not None:
        lo = max(lo, k_floor)
        hi = max(hi, lo)
    if k_ceil is not None:
        hi = min(hi, k_ceil)
        lo = min(lo, hi)
    lo, hi = lo - ks[0], hi - ks[0]
    dropped = np.ones(M, dtype=bool)
    dropped[lo:hi + 1] = False
    mass = float(np.sqrt(np.sum(norms[dropped] ** 2)))
    return BlockLoop(c[lo:hi + 1], int(ks[lo]), tail_tol, mass)


def _dets(samples: np.ndarray) -> np.ndarray:
    d = np.linalg.det(samples)
    scale = np.max(np.abs(d))
    bad = np.flatnonzero(np.abs(d) <= _SINGULAR_RTOL * scale) if scale > 0 else np.arange(len(d))
    if bad.size:
        raise SingularAtNode(bad[0])
    return d


def invert_samples(samples: np.ndarray) -> np.ndarray:
    _dets(samples)
    return np.linalg.inv(samples)


def inverse(loop: BlockLoop, grid: CircleGrid | None = None,
            tail_tol: float = DEFAULT_TAIL_TOL) -> BlockLoop:
    """Pointwise inverse on the grid, transformed back and truncated."""
    grid = grid or CircleGrid.for_loops(loop, minimum=256)
    return from_samples(invert_samples(sample(loop, grid)), tail_tol)


def _unwrapped_phase(values: np.ndarray, jump_limit: float) -> tuple[np.ndarray, int]:
    """Continuous phase along the grid and the winding number.

    Successive nodes are joined along the nearest branch; a step larger than
    ``jump_limit`` means the grid cannot resolve the phase and is refused.
    """
    ang = np.angle(values)
    steps = np.diff(np.append(ang, ang[0]))
    steps = (steps + np.pi) % (2 * np.pi) - np.pi
    worst = int(np.argmax(np.abs(steps)))
    if abs(steps[worst]) > jump_limit:
        raise PhaseJumpTooLarge(
            f"phase of det jumps by {steps[worst]:.3f} rad between nodes {worst} and {worst + 1}")
    phase = ang[0] + np.concatenate(([0.0], np.cumsum(steps[:-1])))
    winding = int(round(np.sum(steps) / (2 * np.pi)))
    return phase, winding


def winding_number(loop: BlockLoop, grid: CircleGrid | None = None,
                   jump_limit: float = np.pi / 2) -> int:
    grid = grid or CircleGrid.for_loops(loop, minimum=256)
    d = _dets(sample(loop, grid))
    return _unwrapped_phase(d, jump_limit)[1]


def log_det_samples(samples: np.ndarray, jump_limit: float = np.pi / 2) -> np.ndarray:
    """Continuous branch of ``log det phi(z_m)``; requires zero winding."""
    d = _dets(samples)
    phase, winding = _unwrapped_phase(d, jump_limit)
    if winding != 0:
        raise NonzeroWinding(winding)
    return np.log(np.abs(d)) + 1j * phase


def log_geometric_mean(loop: BlockLoop, grid: CircleGrid | None = None) -> complex:
    """Circle average of the continuous ``log det``; ``exp`` of it is G(phi)."""
    grid = grid or CircleGrid.for_loops(loop, minimum=256)
    return complex(np.mean(log_det_samples(sample(loop, grid))))


def geometric_mean(loop: BlockLoop, grid: CircleGrid | None = None) -> complex:
    return complex(np.exp(log_geometric_mean(loop, grid)))


def contour_trace_integral(values: np.ndarray) -> complex:
    """``oint Tr F(z) dz / (2 pi i)`` from samples on the uniform grid."""
    values = np.asarray(values, dtype=complex)
    M = values.shape[0]
    tr = np.trace(values, axis1=1, axis2=2) if values.ndim == 3 else values
    nodes = np.exp(2j * np.pi * np.arange(M) / M)
    return complex(np.sum(tr * nodes) / M)


def l_half_norm(loop: BlockLoop) -> float:
    """``(sum_k |k| ||phi_k||_HS^2)^(1/2)``."""
    ks = np.arange(loop.k_min, loop.k_max + 1)
    return float(np.sqrt(np.sum(np.abs(ks) * block_norms(loop.coeffs) ** 2)))


def sup_norm(loop: BlockLoop, grid: CircleGrid | None = None) -> float:
    """Grid maximum of the spectral norm."""
    grid = grid or CircleGrid.for_loops(loop, minimum=256)
    return float(np.max(np.linalg.norm(sample(loop, grid), ord=2, axis=(1, 2))))


def sample_derivative(samples: np.ndarray) -> np.ndarray:
    """Spectral ``d/dz`` of a function known only on the grid."""
    samples = np.asarray(samples, dtype=complex)
    M = samples.shape[0]
    c = np.fft.fft(samples, axis=0) / M
    ks = np.fft.fftfreq(M, d=1.0 / M)
    if M % 2 == 0:
        ks[M // 2] = 0.0  # Nyquist mode has no unambiguous derivative
    nodes = np.exp(2j * np.pi * np.arange(M) / M)
    shape = (M,) + (1,) * (samples.ndim - 1)
    deriv = np.fft.ifft(c * ks.reshape(shape), axis=0) * M
    return deriv / nodes.reshape(shape)


def expm_samples(samples: np.ndarray) -> np.ndarray:
    """Nodewise matrix exponential (scaling and squaring, Pade 13)."""
    return scipy.linalg.expm(np.asarray(samples, dtype=complex))


def grid_max_norm(samples: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(samples, ord=2, axis=(-2, -1))))


# --- presets and literals ---------------------------------------------------

def one_pole(c: complex = 0.3, a: complex = 0.0, n: int = 1, depth: int | None = None,
             tol: float = 1e-17) -> BlockLoop:
    """``Id + c/(z - a)`` expanded at infinity, ``|a| < 1``.

    ``c/(z - a) = sum_{m>=0} c a^m z^{-m-1}``; the expansion stops after
    ``depth`` terms, or once ``|c a^m|`` falls below ``tol``.
    """
    c, a = complex(c), complex(a)
    if abs(a) >= 1:
        raise ValueError("pole must lie inside the unit disc")
    if depth is None:
        depth = 1 if a == 0 else max(1, int(math.ceil(math.log(tol / max(abs(c), tol)) / math.log(abs(a)))) + 1)
    blocks = {0: np.eye(n)}
    for m in range(depth):
        blocks[-m - 1] = c * a ** m * np.eye(n)
    return BlockLoop.from_dict(blocks, n)


def exp_of(exponent: BlockLoop, grid: CircleGrid | None = None,
           tail_tol: float = DEFAULT_TAIL_TOL) -> BlockLoop:
    """``exp(X(z))`` of a matrix Laurent polynomial, nodewise on the grid.

    If ``X`` has only negative (resp. positive) modes the result is clamped to
    the matching half-line, since the exact exponential has no other modes.
    """
    grid = grid or CircleGrid.for_loops(exponent, minimum=256)
    vals = expm_samples(sample(exponent, grid))
    floor = ceil = None
    if exponent.k_max < 0:
        ceil = 0
    if exponent.k_min > 0:
        floor = 0
    out = from_samples(vals, tail_tol, k_floor=floor, k_ceil=ceil)
    if exponent.k_max < 0 or exponent.k_min > 0:
        # constant term of exp(X) is exactly Id in these cases
        c = out.coeffs.copy()
        c[-out.k_min] = np.eye(exponent.n)
        out = BlockLoop(c, out.k_min, out.tail_tol, out.tail_mass)
    return out


def loop_from_literal(records: Sequence[dict]) -> BlockLoop:
    """Parse ``[{"k": int, "re": matrix, "im": matrix}, ...]``; ``im`` optional."""
    blocks: dict[int, np.ndarray] = {}
    for rec in records:
        re = np.atleast_2d(np.asarray(rec["re"], dtype=float))
        im = np.atleast_2d(np.asarray(rec.get("im", np.zeros_like(re)), dtype=float))
        if re.shape != im.shape:
            raise DimensionMismatch("re and im parts differ in shape")
        k = int(rec["k"])
        blocks[k] = blocks.get(k, 0) + re + 1j * im
    return BlockLoop.from_dict(blocks)


def loop_to_literal(loop: BlockLoop) -> list[dict]:
    return [{"k": k, "re": loop.coeff(k).real.tolist(), "im": loop.coeff(k).imag.tolist()}
            for k in range(loop.k_min, loop.k_max + 1)]


def random_loop(rng: np.random.Generator, n: int, k_min: int, k_max: int,
                scale: float = 1.0) -> BlockLoop:
    shape = (k_max - k_min + 1, n, n)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return BlockLoop(scale * c, k_min)

