"""Command-line front end.

``blocktau {symbol,dn,tau,rh,ds} --scenario FILE [--out DIR] [--jobs N] [--verify]``

Exit codes: 0 success, 1 a verified identity exceeded its tolerance,
2 unreadable or invalid scenario, 3 numerical failure (the report names the
failing stage).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NumericalFailure
from .grassmann import (
    generalized_sato_logderiv,
    jump,
    jump_derivative,
    tau_ssw,
)
from .kacmoody import AffineData, ExtendedElement, ds_tau_relation_check, extended_bracket
from .loops import (
    geometric_mean,
    l_half_norm,
    random_loop,
    sup_norm,
    winding_number,
)
from .rhfactor import (
    birkhoff_factorize,
    dual_factorize,
    jump_residual,
    malgrange_jmu_logderiv,
    widom_derivative,
)
from .scenario import Scenario, ScenarioError, format_label, load, validate
from .toeplitz import SINGULAR, fredholm_det, identity_residual, szego_widom_limit

EXIT_OK, EXIT_BREACH, EXIT_SCHEMA, EXIT_NUMERICAL = 0, 1, 2, 3


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _jsonable(obj.real), "im": _jsonable(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


class Run:
    """Collects results, residual checks, the current stage and optional timings."""

    def __init__(self, command: str, scenario: Scenario, tolerance: float, timings: bool):
        self.command, self.scenario, self.tolerance = command, scenario, tolerance
        self.results: dict = {}
        self.checks: list[dict] = []
        self.stage = "setup"
        self.timings: dict | None = {} if timings else None

    @contextmanager
    def step(self, name: str):
        self.stage = name
        t0 = time.perf_counter()
        yield
        if self.timings is not None:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0

    def check(self, name: str, method: str, value: float, tol: float | None = None):
        tol = self.tolerance if tol is None else tol
        self.checks.append({"name": name, "method": method, "value": float(value),
                            "tolerance": tol, "passed": bool(value <= tol)})

    @property
    def breaches(self) -> list[dict]:
        return [c for c in self.checks if not c["passed"]]

    def report(self, status: str, message: str = "") -> dict:
        out = {
            "command": self.command,
            "version": __version__,
            "scenario": self.scenario.name,
            "scenario_digest": self.scenario.digest,
            "status": status,
            "stage": self.stage,
            "results": self.results,
            "checks": self.checks,
        }
        if message:
            out["message"] = message
        if self.timings is not None:
            out["timings_s"] = self.timings
        return _jsonable(out)


# --- commands ----------------------------------------------------------------

def cmd_symbol(sc: Scenario, run: Run) -> None:
    with run.step("symbol"):
        phi = sc.symbol()
        w = winding_number(phi, sc.grid)
        run.results.update({
            "n": phi.n, "k_min": phi.k_min, "k_max": phi.k_max, "bandwidth": phi.bandwidth,
            "winding": w, "sup_norm": sup_norm(phi, sc.grid), "l_half_norm": l_half_norm(phi),
        })
        if w == 0:
            run.results["geometric_mean"] = geometric_mean(phi, sc.grid)
        else:
            run.results["geometric_mean"] = None
            run.results["note"] = "nonzero winding: factorization refused"


def cmd_dn(sc: Scenario, run: Run) -> list[list]:
    with run.step("szego_widom_limit"):
        phi = sc.symbol()
        est = szego_widom_limit(phi, sc.numerics["N_schedule"], sc.grid)
    rows = [["N", "re_logDN", "im_logDN", "re_normalized", "im_normalized"]]
    done = dict(zip(est.schedule, zip(est.log_dn, est.normalized_sequence)))
    for N in sc.numerics["N_schedule"]:
        if N in done:
            ld, nz = done[N]
            rows.append([N, ld.real, ld.imag, nz.real, nz.imag])
        else:
            rows.append([N, "nan", "nan", "nan", "nan"])
    run.results.update({"limit": est.value, "log_G": est.log_g,
                        "extrapolated_error": est.extrapolated_error})
    run.check("extrapolation_correction", "szego_widom_limit", est.extrapolated_error)
    return rows


def _tau_header(labels) -> list[str]:
    head = [f"t_{format_label(l)}" for l in labels] + ["big_cell", "status", "re_logtau", "im_logtau"]
    for l in labels:
        s = format_label(l)
        head += [f"re_dlogtau_sato_{s}", f"im_dlogtau_sato_{s}",
                 f"re_dlogtau_jmu_{s}", f"im_dlogtau_jmu_{s}", f"residual_{s}"]
    return head


def _tau_row(raw: dict, times: list[tuple]) -> list:
    """One lattice point; numerical failures become a sentinel row."""
    sc = validate(raw)
    labels = sc.labels()
    t = dict(times)
    row = [t[l] for l in labels]
    nan = float("nan")
    try:
        point, flow = sc.point(), sc.flow(t)
        tau = tau_ssw(point, flow, M_H=sc.numerics["M_H"])
        if tau.log_value == SINGULAR:
            return row + [0, "singular", nan, nan] + [nan] * (5 * len(labels))
        out = row + [1, "ok", tau.log_value.real, tau.log_value.imag]
        J = jump(point, flow)
        sol = birkhoff_factorize(J, sc.numerics["P"], flow.grid)
        for l in labels:
            sato = generalized_sato_logderiv(point, flow, l, sc.numerics["P"])
            jmu = malgrange_jmu_logderiv(sol, J, jump_derivative(J, flow, l), flow.grid)
            out += [sato.real, sato.imag, jmu.real, jmu.imag, abs(sato - jmu)]
        return out
    except NumericalFailure as exc:
        return row + [0, type(exc).__name__, nan, nan] + [nan] * (5 * len(labels))


def cmd_tau(sc: Scenario, run: Run, jobs: int = 1) -> list[list]:
    labels = sc.labels()
    points = [[(l, t[l]) for l in labels] for t in sc.lattice()]
    with run.step("tau_lattice"):
        if jobs > 1 and len(points) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                body = list(ex.map(_tau_row, [sc.raw] * len(points), points))
        else:
            body = [_tau_row(sc.raw, p) for p in points]
    n_l = len(labels)
    failed = sum(1 for r in body if r[n_l] == 0)
    run.results.update({"points": len(body), "outside_big_cell": failed})
    for r in body:
        if r[n_l] == 1:
            res = r[n_l + 4 + 4::5]
            run.check("sato_vs_jmu", "generalized_sato_logderiv/malgrange_jmu_logderiv", max(res))
    return [_tau_header(labels)] + body


def cmd_rh(sc: Scenario, run: Run) -> list[list]:
    P, h = sc.numerics["P"], sc.numerics["h"]
    times = sc.base_times()
    labels = sc.labels()
    for l in labels:
        times.setdefault(l, 0.0)
    point, flow = sc.point(), sc.flow(times)
    grid = flow.grid
    with run.step("birkhoff_factorize"):
        J = jump(point, flow)
        sol = birkhoff_factorize(J, P, grid)
        jr = jump_residual(sol, J, grid)
    run.results.update({"P": sol.P, "condition": sol.condition,
                        "factorization_residual": sol.residual, "jump_residual": jr})
    run.check("factorization_residual", "birkhoff_factorize", sol.residual)
    run.check("jump_residual", "birkhoff_factorize", jr)
    with run.step("dual_factorize"):
        dual = dual_factorize(J, sol, point.gamma, flow.g_samples, grid)
    run.results.update({"dual_residual_T": dual.residual_T, "dual_residual_S": dual.residual_S})
    run.check("dual_residual_T", "dual_factorize", dual.residual_T)
    run.check("dual_residual_S", "dual_factorize", dual.residual_S)
    derivs = {}
    with run.step("derivatives"):
        for l in labels:
            dJ = jump_derivative(J, flow, l)
            jmu = malgrange_jmu_logderiv(sol, J, dJ, grid)
            wid = widom_derivative(J, dual, dJ, grid)
            up = fredholm_det(jump(point, flow.shifted(l, h)), grid, sc.numerics["M_H"])
            dn = fredholm_det(jump(point, flow.shifted(l, -h)), grid, sc.numerics["M_H"])
            fd = (up - dn) / (2 * h)
            derivs[format_label(l)] = {"jmu": jmu, "widom": wid, "fd_fredholm": fd}
            run.check(f"jmu_vs_widom_{format_label(l)}", "malgrange_jmu_logderiv/widom_derivative",
                      abs(jmu - wid))
            run.check(f"jmu_vs_fd_{format_label(l)}", "malgrange_jmu_logderiv/fredholm_det",
                      abs(jmu - fd))
    run.results["derivatives"] = derivs
    rows = [["k", "row", "col", "re_gamma_minus", "im_gamma_minus"]]
    gm = sol.gamma_minus
    for k in range(gm.k_max, gm.k_min - 1, -1):
        c = gm.coeff(k)
        for i in range(gm.n):
            for j in range(gm.n):
                rows.append([k, i, j, c[i, j].real, c[i, j].imag])
    return rows


def cmd_ds(sc: Scenario, run: Run) -> list[list]:
    if sc.family != "principal_A":
        raise ScenarioError("ds needs the principal_A flow family")
    data = AffineData(n=sc.flow_n)
    times = sc.base_times()
    labels = [l for l in sc.labels() if data.is_exponent(l)]
    for l in labels:
        times.setdefault(l, 0.0)
    point, flow = sc.point(), sc.flow(times)
    rows = [["j", "residual"]]
    with run.step("ds_tau_relation_check"):
        for j in labels:
            r = ds_tau_relation_check(point, flow, j, data, sc.numerics["P"])
            rows.append([j, r])
            run.check(f"ds_relation_{j}", "ds_tau_relation_check", r)
    return rows


def random_identity_suite(run: Run, seed: int, n: int, trials: int = 5) -> None:
    """Seeded Toeplitz-Hankel and Jacobi checks appended to the report."""
    rng = np.random.default_rng(seed)
    with run.step("random_suite"):
        worst = max(identity_residual(random_loop(rng, 2, -2, 2), random_loop(rng, 2, -2, 2), 32)
                    for _ in range(trials))
        run.check("toeplitz_hankel_identity", "identity_residual", worst, 1e-12)
        n = max(n, 2)
        data = AffineData(n=n)
        worst = 0.0
        for _ in range(trials):
            x, y, z = (_random_traceless(rng, n) for _ in range(3))
            jac = (extended_bracket(x, extended_bracket(y, z, data), data)
                   + extended_bracket(y, extended_bracket(z, x, data), data)
                   + extended_bracket(z, extended_bracket(x, y, data), data))
            worst = max(worst, float(np.max(np.abs(jac.loop.coeffs), initial=0.0)), abs(jac.central))
        run.check("jacobi_central", "extended_bracket", worst, 1e-10)


def _random_traceless(rng, n) -> ExtendedElement:
    lp = random_loop(rng, n, -2, 2)
    c = lp.coeffs - np.trace(lp.coeffs, axis1=1, axis2=2)[:, None, None] * np.eye(n) / n
    return ExtendedElement(type(lp)(c, lp.k_min), 0j)


COMMANDS = {"symbol": cmd_symbol, "dn": cmd_dn, "tau": cmd_tau, "rh": cmd_rh, "ds": cmd_ds}


def write_csv(path: Path, rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rows[0])
        for r in rows[1:]:
            w.writerow([fmt(x) for x in r])


def write_report(path: Path, report: dict) -> None:
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blocktau", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "symbol": "band, winding, norms and geometric mean of a symbol",
        "dn": "log D_N along the schedule and its normalized limit",
        "tau": "log tau and both derivative routes over a time lattice",
        "rh": "factorization, dual factorization and derivative comparisons",
        "ds": "Drinfeld-Sokolov tau relation residuals (A1 family)",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text)
        s.add_argument("--scenario", required=True, type=Path)
        s.add_argument("--out", type=Path, default=Path("."))
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--verify", action="store_true",
                       help="run the identity suite and exit 1 on any tolerance breach")
        s.add_argument("--timings", action="store_true",
                       help="record wall-clock per stage in the report")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load(args.scenario)
    except ScenarioError as exc:
        print(f"blocktau: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    args.out.mkdir(parents=True, exist_ok=True)
    outputs = sc.raw.get("outputs", {})
    csv_path = args.out / outputs.get("csv", f"{args.command}.csv")
    report_path = args.out / outputs.get("report", f"{args.command}_report.json")
    run = Run(args.command, sc, sc.numerics["tolerance"], args.timings)
    try:
        fn = COMMANDS[args.command]
        rows = fn(sc, run, args.jobs) if args.command == "tau" else fn(sc, run)
        if args.verify:
            random_identity_suite(run, args.seed, sc.flow_n)
    except ScenarioError as exc:
        print(f"blocktau: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except NumericalFailure as exc:
        write_report(report_path, run.report("numerical_failure", f"{type(exc).__name__}: {exc}"))
        print(f"blocktau: numerical failure in stage {run.stage}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if rows:
        write_csv(csv_path, rows)
    breaches = run.breaches if args.verify else []
    write_report(report_path, run.report("breach" if breaches else "ok"))
    for b in breaches:
        print(f"blocktau: {b['name']} = {b['value']:.3g} exceeds {b['tolerance']:.3g}", file=sys.stderr)
    return EXIT_BREACH if breaches else EXIT_OK
