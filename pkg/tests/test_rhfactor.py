import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blocktau.errors import NonzeroWinding, SingularSystem
from blocktau.grassmann import GrassmannPoint, jump, jump_derivative, jump_family, kp_flow
from blocktau.kacmoody import principal_flow
from blocktau.loops import BlockLoop, CircleGrid, one_pole, random_loop, sample
from blocktau.rhfactor import (
    birkhoff_factorize,
    closedness_residual,
    dual_factorize,
    jump_residual,
    malgrange_jmu_logderiv,
    widom_derivative,
)
from blocktau.toeplitz import fredholm_det

from conftest import two_by_two_gamma


def test_identity_jump():
    sol = birkhoff_factorize(BlockLoop.identity(2))
    assert np.allclose(sol.gamma_minus.coeff_range(-sol.P, 0)[-1], np.eye(2))
    assert np.max(np.abs(sol.gamma_minus.coeff_range(-sol.P, -1))) < 1e-15
    assert sol.residual < 1e-15


def test_scalar_gamma_minus_is_inverse_series():
    # Gamma_- (1 + 0.3/z) = 1 forces Gamma_- = sum (-0.3)^m z^-m
    sol = birkhoff_factorize(one_pole(0.3))
    for m in range(12):
        assert sol.gamma_minus.coeff(-m)[0, 0] == pytest.approx((-0.3) ** m, abs=1e-14)
    assert sol.residual < 1e-13


def test_nonzero_winding_refused():
    lam = BlockLoop.from_dict({0: [[0, 0], [1, 0]], 1: [[0, 1], [0, 0]]})
    with pytest.raises(NonzeroWinding):
        birkhoff_factorize(lam)


def test_nonzero_partial_indices_are_singular():
    J = BlockLoop.from_dict({1: np.diag([1.0, 0.0]), -1: np.diag([0.0, 1.0])})
    with pytest.raises(SingularSystem):
        birkhoff_factorize(J)


@given(st.integers(0, 2**32 - 1))
def test_random_near_identity_jump(seed):
    rng = np.random.default_rng(seed)
    J = BlockLoop.identity(2) + random_loop(rng, 2, -2, 2, scale=0.05)
    grid = CircleGrid(256)
    sol = birkhoff_factorize(J, 32, grid)
    assert sol.gamma_plus.k_min >= 0
    assert np.array_equal(sol.gamma_minus.coeff(0), np.eye(2))
    assert jump_residual(sol, J, grid) < 1e-10


def _two_by_two(t, grid):
    point = GrassmannPoint(two_by_two_gamma())
    return point, principal_flow(2, {1: t, 2: 0.0, 3: 0.0}, grid)


def test_widom_and_jmu_match_fredholm_difference(grid):
    point, flow = _two_by_two(0.4, grid)
    J = jump(point, flow)
    sol = birkhoff_factorize(J, 32, grid)
    dual = dual_factorize(J, sol, point.gamma, flow.g_samples, grid)
    assert dual.residual_T < 1e-12 and dual.residual_S < 1e-12
    dJ = jump_derivative(J, flow, 1)
    jmu = malgrange_jmu_logderiv(sol, J, dJ, grid)
    wid = widom_derivative(J, dual, dJ, grid)
    h = 1e-4
    fd = (fredholm_det(jump(point, flow.shifted(1, h)), grid)
          - fredholm_det(jump(point, flow.shifted(1, -h)), grid)) / (2 * h)
    assert abs(jmu - wid) < 1e-10
    assert abs(jmu - fd) < 1e-6


def test_scalar_jmu_is_plane_wave_derivative(grid):
    # log tau = sum t_k (-c)^k, so d/dt_2 = c^2
    point = GrassmannPoint(one_pole(0.3))
    flow = kp_flow({1: 0.6, 2: -0.2}, grid)
    J = jump(point, flow)
    sol = birkhoff_factorize(J, 32, grid)
    assert malgrange_jmu_logderiv(sol, J, jump_derivative(J, flow, 2), grid) == pytest.approx(0.09, abs=1e-12)


def test_closedness_small(grid):
    point, flow = _two_by_two(0.2, grid)
    fam = jump_family(point, flow)
    assert closedness_residual(fam, 1, 3, 1e-3, dict(flow.times), 32, grid) < 1e-6


def test_jump_residual_samples(grid):
    J = one_pole(0.3)
    sol = birkhoff_factorize(J, 32, grid)
    prod = sample(sol.gamma_minus, grid) @ sample(J, grid)
    assert np.allclose(prod, sample(sol.gamma_plus, grid), atol=1e-12)
