import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blocktau.errors import NotScalar
from blocktau.grassmann import (
    FlowGroupElement,
    GrassmannPoint,
    baker_function,
    generalized_sato_logderiv,
    hirota_kp_residual,
    jmu_logderiv,
    jump,
    kp_flow,
    membership_residual,
    normalization_residual,
    sato_shift_check,
    tau_ssw,
)
from blocktau.kacmoody import principal_flow
from blocktau.loops import BlockLoop, CircleGrid, expm_samples, one_pole, sample

from conftest import two_by_two_gamma

times_st = st.floats(-1.0, 1.0)
c_st = st.floats(-0.45, 0.45)


def plane_wave_log_tau(c, times):
    # log D of exp(-sum t_k z^k)(1 + c/z): sum_k k s_k s_-k with s_k = -t_k, s_-k = -(-c)^k / k
    return sum(t * (-c) ** k for k, t in times.items())


def test_point_validation():
    with pytest.raises(ValueError):
        GrassmannPoint(BlockLoop.from_dict({0: 1.0, 1: 0.1}))
    with pytest.raises(ValueError):
        GrassmannPoint(BlockLoop.from_dict({0: 2.0, -1: 0.1}))
    p = GrassmannPoint(BlockLoop.from_dict({0: 1.0 + 1e-14, -1: 0.1}))
    assert p.gamma.coeff(0)[0, 0] == 1.0


def test_flow_rejects_noncommuting_generators():
    a = BlockLoop.from_dict({1: [[0, 1], [0, 0]]})
    b = BlockLoop.from_dict({1: [[0, 0], [1, 0]]})
    with pytest.raises(ValueError):
        FlowGroupElement({1: a, 2: b}, {1: 0.1}, CircleGrid(64))


def test_flow_rejects_negative_modes():
    with pytest.raises(ValueError):
        FlowGroupElement({1: BlockLoop.from_dict({-1: 1.0})}, {1: 0.1}, CircleGrid(64))


def test_jump_is_nodewise_product(grid):
    point = GrassmannPoint(two_by_two_gamma())
    flow = principal_flow(2, {1: 0.3}, grid)
    J = jump(point, flow)
    lam = sample(flow.generators[1], grid)
    ref = expm_samples(-0.3 * lam) @ sample(point.gamma, grid)
    assert np.allclose(sample(J, grid), ref, atol=1e-13)
    assert J.k_min >= -1


@given(c_st, times_st, times_st)
def test_scalar_tau_is_plane_wave(c, t1, t2):
    grid = CircleGrid(256)
    point = GrassmannPoint(one_pole(c))
    tau = tau_ssw(point, kp_flow({1: t1, 2: t2}, grid))
    assert tau.log_value == pytest.approx(plane_wave_log_tau(c, {1: t1, 2: t2}), abs=1e-12)
    assert tau.in_big_cell


def test_tau_methods_agree(grid):
    point = GrassmannPoint(two_by_two_gamma())
    flow = principal_flow(2, {1: 0.4}, grid)
    a = tau_ssw(point, flow)
    b = tau_ssw(point, flow, "extrapolation")
    assert abs(a.log_value - b.log_value) < 1e-8
    with pytest.raises(ValueError):
        tau_ssw(point, flow, "guess")


def test_identity_point_is_trivial(grid):
    point = GrassmannPoint(BlockLoop.identity(1))
    flow = kp_flow({1: 0.7, 3: -0.2}, grid)
    assert abs(tau_ssw(point, flow).log_value) < 1e-14
    assert abs(generalized_sato_logderiv(point, flow, 1)) < 1e-13
    w = baker_function(point, flow)
    assert np.allclose(w.samples, flow.g_samples, atol=1e-13)


@given(c_st, times_st, times_st)
def test_scalar_baker_is_g_times_gamma(c, t1, t2):
    # gamma^-1 w = g lies in H_+ and g^-1 w = gamma is normalized
    grid = CircleGrid(256)
    point = GrassmannPoint(one_pole(c))
    flow = kp_flow({1: t1, 2: t2}, grid)
    w = baker_function(point, flow)
    assert np.allclose(w.samples, flow.g_samples @ sample(point.gamma, grid), atol=1e-11)
    assert membership_residual(w, point) < 1e-12
    assert normalization_residual(w, flow) < 1e-12


@given(c_st, times_st, times_st, st.sampled_from([1, 2, 3]))
def test_scalar_sato_route_is_plane_wave_derivative(c, t1, t2, k):
    grid = CircleGrid(256)
    point = GrassmannPoint(one_pole(c))
    flow = kp_flow({1: t1, 2: t2, 3: 0.0}, grid)
    assert generalized_sato_logderiv(point, flow, k) == pytest.approx((-c) ** k, abs=1e-11)


def test_two_by_two_baker_properties(grid):
    point = GrassmannPoint(two_by_two_gamma())
    flow = principal_flow(2, {1: 0.4, 3: 0.1}, grid)
    w = baker_function(point, flow)
    assert membership_residual(w, point) < 1e-8
    assert normalization_residual(w, flow) < 1e-9


def test_two_by_two_routes_agree(grid):
    point = GrassmannPoint(two_by_two_gamma())
    flow = principal_flow(2, {1: 0.4, 2: -0.3, 3: 0.2}, grid)
    for j in (1, 2, 3):
        assert abs(generalized_sato_logderiv(point, flow, j) - jmu_logderiv(point, flow, j)) < 1e-10


def test_sato_shift(grid):
    point = GrassmannPoint(one_pole(0.3, 0.2))
    assert sato_shift_check(point, kp_flow({1: 0.5, 2: 0.3}, grid), 2.0, 12) < 1e-6


def test_sato_shift_rejects_matrix_point(grid):
    with pytest.raises(NotScalar):
        sato_shift_check(GrassmannPoint(two_by_two_gamma()), principal_flow(2, {1: 0.1}, grid), 2.0, 8)


def test_sato_shift_rejects_point_inside_disc(grid):
    with pytest.raises(ValueError):
        sato_shift_check(GrassmannPoint(one_pole(0.3)), kp_flow({1: 0.1}, grid), 0.5, 8)


def test_hirota_small_lattice(grid):
    point = GrassmannPoint(one_pole(0.3))
    assert hirota_kp_residual(point, (0.1, 0.0, 0.0), 1e-2, 5, grid) < 1e-4
