"""Acceptance suite: thirteen criteria at their stated tolerances.

Each test prints one ``[PASS]`` or ``[FAIL]`` line; the lines are repeated
in the pytest terminal summary.  Run standalone with
``python tests/test_acceptance.py``.
"""

import itertools
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import ACCEPTANCE_LINES, SCENARIOS, two_by_two_gamma  # noqa: E402

from blocktau.cli import main  # noqa: E402
from blocktau.grassmann import (  # noqa: E402
    GrassmannPoint,
    baker_function,
    generalized_sato_logderiv,
    hirota_kp_residual,
    jmu_logderiv,
    jump,
    jump_derivative,
    jump_family,
    kp_flow,
    membership_residual,
    normalization_residual,
    sato_shift_check,
)
from blocktau.kacmoody import (  # noqa: E402
    AffineData,
    ExtendedElement,
    adjoint_c_coefficient,
    cocycle,
    ds_tau_relation_check,
    extended_bracket,
    lambda_j,
    lambda_power,
    principal_flow,
)
from blocktau.loops import BlockLoop, CircleGrid, exp_of, one_pole, random_loop  # noqa: E402
from blocktau.rhfactor import (  # noqa: E402
    birkhoff_factorize,
    closedness_residual,
    dual_factorize,
    malgrange_jmu_logderiv,
    widom_derivative,
)
from blocktau.scenario import load  # noqa: E402
from blocktau.toeplitz import (  # noqa: E402
    fredholm_det,
    identity_residual,
    strong_szego_scalar,
    szego_widom_limit,
)

pytestmark = pytest.mark.acceptance

GRID = CircleGrid(256)
SEED = 20240611


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] C{number:<2} {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def standard_examples():
    """``(point, flow factory)`` for the scalar and the 2x2 standard examples."""
    scalar = (GrassmannPoint(one_pole(0.3)), lambda t: kp_flow(t, GRID))
    matrix = (GrassmannPoint(two_by_two_gamma()), lambda t: principal_flow(2, t, GRID))
    return {"scalar": scalar, "2x2": matrix}


def random_times(rng, count=5):
    """Points of the unit ball in ``(t1, t2, t3)``."""
    out = []
    while len(out) < count:
        v = rng.uniform(-1, 1, 3)
        if np.linalg.norm(v) <= 1:
            out.append({1: v[0], 2: v[1], 3: v[2]})
    return out


def test_c01_strong_szego_oracle():
    t0 = time.perf_counter()
    point = GrassmannPoint(one_pole(0.3))
    J = jump(point, kp_flow({1: 1.0, 2: 0.5}, GRID))
    values = {
        "fredholm": fredholm_det(J, GRID),
        "extrapolation": szego_widom_limit(J, [16, 32, 64, 128], GRID).value,
        "strong_szego": strong_szego_scalar(J, GRID),
    }
    elapsed = time.perf_counter() - t0
    spread = max(abs(a - b) for a, b in itertools.combinations(values.values(), 2))
    err = max(abs(v - (-0.255)) for v in values.values())
    record(1, "strong Szego oracle", spread <= 1e-8 and err <= 1e-8 and elapsed < 10,
           f"pairwise spread {spread:.2e}, |value + 0.255| {err:.2e}, {elapsed:.2f} s")


def test_c02_sato_route_equals_jmu():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for point, make in standard_examples().values():
        for times in random_times(rng):
            flow = make(times)
            for j in (1, 2, 3):
                d = abs(generalized_sato_logderiv(point, flow, j) - jmu_logderiv(point, flow, j))
                worst = max(worst, d)
    record(2, "generalized Sato vs Malgrange form", worst <= 1e-6, f"max gap {worst:.2e}")


def test_c03_widom_chain():
    rng = np.random.default_rng(SEED + 1)
    h = 1e-4
    worst_w, worst_fd = 0.0, 0.0
    for point, make in standard_examples().values():
        for times in random_times(rng):
            flow = make(times)
            J = jump(point, flow)
            sol = birkhoff_factorize(J, 32, GRID)
            dual = dual_factorize(J, sol, point.gamma, flow.g_samples, GRID)
            for j in (1, 2, 3):
                dJ = jump_derivative(J, flow, j)
                jmu = malgrange_jmu_logderiv(sol, J, dJ, GRID)
                wid = widom_derivative(J, dual, dJ, GRID)
                fd = (fredholm_det(jump(point, flow.shifted(j, h)), GRID)
                      - fredholm_det(jump(point, flow.shifted(j, -h)), GRID)) / (2 * h)
                worst_w = max(worst_w, abs(jmu - wid))
                worst_fd = max(worst_fd, abs(jmu - fd), abs(wid - fd))
    record(3, "Malgrange vs Widom vs finite difference", worst_w <= 1e-6 and worst_fd <= 1e-6,
           f"max |jmu - widom| {worst_w:.2e}, max gap to FD {worst_fd:.2e}")


def test_c04_toeplitz_hankel_identity():
    rng = np.random.default_rng(SEED + 2)
    worst = max(identity_residual(random_loop(rng, 2, -2, 2), random_loop(rng, 2, -2, 2), 32)
                for _ in range(20))
    record(4, "Toeplitz-Hankel identity", worst <= 1e-12, f"max residual {worst:.2e} over 20 pairs")


def test_c05_szego_widom_convergence():
    phi = exp_of(BlockLoop.from_dict({1: 0.5, -1: 0.5}))
    est = szego_widom_limit(phi, [16, 32, 64, 128])
    seq = [x.real for x in est.normalized_sequence]
    steps = np.abs(np.diff(seq))
    floor = 1e-12
    ratios = [b / a for a, b in zip(steps, steps[1:]) if a > floor and b > floor]
    contracting = all(r < 1 for r in ratios)
    err = abs(est.value - 0.25)
    record(5, "Szego-Widom convergence", contracting and err <= 1e-8,
           f"final error {err:.2e}, increments {', '.join(f'{s:.1e}' for s in steps)}, "
           f"ratios above {floor:g} floor: {ratios or 'none'}")


def test_c06_malgrange_closedness():
    worst = 0.0
    for point, make in standard_examples().values():
        flow = make({1: 0.3, 2: -0.2, 3: 0.1})
        fam = jump_family(point, flow)
        for a, b in ((1, 2), (1, 3)):
            worst = max(worst, closedness_residual(fam, a, b, 1e-3, dict(flow.times), 32, GRID))
    record(6, "Malgrange form closedness", worst <= 1e-6, f"max cross-derivative gap {worst:.2e}")


def _scenario_states():
    for name in ("standard_scalar", "two_by_two", "ds_n2", "ds_n3"):
        sc = load(SCENARIOS / f"{name}.json")
        times = sc.base_times()
        for t in sc.lattice():
            yield name, sc.point(), sc.flow({**times, **t})


def test_c07_baker_properties():
    worst_norm, worst_mem = 0.0, 0.0
    for _, point, flow in _scenario_states():
        w = baker_function(point, flow)
        worst_norm = max(worst_norm, normalization_residual(w, flow))
        worst_mem = max(worst_mem, membership_residual(w, point))
    record(7, "Baker function properties", worst_norm <= 1e-9 and worst_mem <= 1e-8,
           f"normalization {worst_norm:.2e}, membership {worst_mem:.2e}")


def test_c08_sato_shift():
    worst = 0.0
    # Gamma_- decays like |a - c|^k, so the slowest example needs depth 64
    for c, a, P in ((0.3, 0.0, 32), (0.3, 0.2, 32), (-0.2, 0.4, 64)):
        point = GrassmannPoint(one_pole(c, a))
        worst = max(worst, sato_shift_check(point, kp_flow({1: 1.0, 2: 0.5}, GRID), 2.0, 12, P))
    record(8, "Sato shift formula", worst <= 1e-6, f"max relative gap {worst:.2e}")


def _traceless(rng, n, lo, hi):
    lp = random_loop(rng, n, lo, hi)
    c = lp.coeffs - np.trace(lp.coeffs, axis1=1, axis2=2)[:, None, None] * np.eye(n) / n
    return BlockLoop(c, lp.k_min)


def test_c09_kac_moody_layer():
    exact = True
    for n in range(2, 7):
        expected = np.zeros((n + 3, n, n))
        expected[2] = np.eye(n)
        exact &= np.array_equal(lambda_power(n, n).coeff_range(-1, n + 1), expected)
    worst_cocycle = 0.0
    for n in range(2, 7):
        data = AffineData(n=n)
        ex = data.exponents(2 * n + 1)
        lams = {j: lambda_j(n, j) for j in ex}
        for j, k in itertools.product(ex, ex):
            want = j if j == -k else 0
            worst_cocycle = max(worst_cocycle, abs(cocycle(lams[j], lams[k], data) - want))
    rng = np.random.default_rng(SEED + 3)
    worst_jacobi = 0.0
    for trial in range(50):
        n = 2 + trial % 3
        data = AffineData(n=n)
        x, y, z = (ExtendedElement(_traceless(rng, n, -2, 2)) for _ in range(3))
        b = lambda p, q: extended_bracket(p, q, data)  # noqa: E731
        jac = b(x, b(y, z)) + b(y, b(z, x)) + b(z, b(x, y))
        worst_jacobi = max(worst_jacobi, float(np.max(np.abs(jac.loop.coeffs))), abs(jac.central))
    record(9, "Kac-Moody layer", exact and worst_cocycle <= 1e-10 and worst_jacobi <= 1e-10,
           f"Lambda^n = z Id exact: {exact}, cocycle error {worst_cocycle:.2e}, "
           f"Jacobi residual {worst_jacobi:.2e}")


def test_c10_adjoint_c_coefficient():
    rng = np.random.default_rng(SEED + 4)
    worst = 0.0
    count = 0
    for n, powers in ((2, (1, 3)), (3, (1, 2, 3, 4))):
        data = AffineData(n=n)
        for _ in range(20):
            X = _traceless(rng, n, -2, -1)
            X = X * (rng.uniform(0.05, 0.5) / np.linalg.norm(X.coeffs))
            for p in powers:
                series, contour = adjoint_c_coefficient(X, lambda_power(n, p), data)
                worst = max(worst, abs(series - contour))
                count += 1
    record(10, "adjoint c-coefficient two routes", worst <= 1e-8, f"max gap {worst:.2e} over {count} cases")


def test_c11_ds_tau_relation():
    worst = 0.0
    for name, js in (("ds_n2", (1, 3)), ("ds_n3", (1, 2))):
        sc = load(SCENARIOS / f"{name}.json")
        point, flow = sc.point(), sc.flow(sc.base_times())
        data = AffineData(n=sc.flow_n)
        for j in js:
            worst = max(worst, ds_tau_relation_check(point, flow, j, data))
    record(11, "Drinfeld-Sokolov tau relation", worst <= 1e-6, f"max residual {worst:.2e}")


def test_c12_hirota():
    point = GrassmannPoint(one_pole(0.3))
    res = hirota_kp_residual(point, (0.0, 0.0, 0.0), 1e-2, 9, GRID)
    record(12, "Hirota KP bilinear residual", res <= 1e-4, f"residual / max|tau|^2 = {res:.2e}")


def test_c13_reproducibility(tmp_path):
    scen = str(SCENARIOS / "standard_scalar.json")
    outs = {}
    for tag, jobs in (("a", "1"), ("b", "1"), ("c", "4")):
        d = tmp_path / tag
        assert main(["tau", "--scenario", scen, "--out", str(d), "--jobs", jobs]) == 0
        outs[tag] = ((d / "tau.csv").read_bytes(), (d / "tau_report.json").read_bytes())
    same_runs = outs["a"] == outs["b"]
    same_jobs = outs["a"] == outs["c"]
    rows = outs["a"][0].count(b"\n") - 1
    record(13, "byte-identical tau output", same_runs and same_jobs,
           f"two runs identical: {same_runs}, jobs 1 vs 4 identical: {same_jobs}, {rows} rows")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
