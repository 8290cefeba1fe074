"""Acceptance criteria, one test (or test group) per criterion.

Each criterion writes one PASS/FAIL line that is printed in the pytest
terminal summary.  Run directly with ``python3 tests/test_acceptance.py``.
"""

import contextlib
import io
import json
import math
import sys
import time

import numpy as np
import pytest

from equivar import cli
from equivar.analysis import (existence_criterion, harmonic_profile, linearised_tail_rate,
                              pohozaev_residual, scaling_check, tail_fit)
from equivar.potential import landau_lifshitz, zero_potential
from equivar.series import fixed_point_solve
from equivar.shooting import (BvpSolution, ShootingOptions, find_bvp_solution,
                              harmonic_blowup_distance, shoot)

from conftest import ACCEPTANCE_LINES, LL_G, ll_spec

HARMONIC_CASES = [(1, 1.0, 2.0), (2, 1.0, 2.0), (3, 0.5, 2 * 0.5 ** 3)]
THRESHOLD_YES = [0.1, 0.25, 0.4, 0.45]
THRESHOLD_NO = [0.55, 0.6, 0.75, 0.9]
REFINE = np.linspace(0.4, 0.6, 99)

_harmonic_runs: dict = {}


def record(n, ok, text):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {text}"
    ACCEPTANCE_LINES[n] = line
    print(line)


def _cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli.main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


# --------------------------------------------------------------------------
# shared CLI runs for criteria 3, 4, 7 and 10

def _threshold_run(workdir, tag):
    t0 = time.perf_counter()
    solves = {}
    for omega in THRESHOLD_YES + THRESHOLD_NO:
        spec = workdir / f"ll_{omega}.json"
        spec.write_text(json.dumps(ll_spec(1.0, omega)))
        rep = workdir / f"solve_{omega}_{tag}.json"
        code, _, err = _cli(["solve", spec, "--m", 2, "--out-report", rep])
        solves[omega] = (code, rep.read_bytes(), err)
    template = workdir / "template.json"
    template.write_text(json.dumps({"g": LL_G, "params": {"lambda": 1.0, "omega": None}}))
    rep = workdir / f"sweep_{tag}.json"
    out_csv = workdir / f"sweep_{tag}.csv"
    code, _, err = _cli(["sweep", template, "--param", "omega", "--from", REFINE[0],
                         "--to", REFINE[-1], "--steps", len(REFINE), "--m", 2,
                         "--workers", 1, "--out-csv", out_csv, "--out-report", rep])
    sweep = (code, rep.read_bytes(), out_csv.read_bytes(), err)
    return {"solves": solves, "sweep": sweep, "seconds": time.perf_counter() - t0}


def _variational_run(workdir, tag):
    spec = workdir / "ll_var.json"
    spec.write_text(json.dumps(ll_spec(1.0, 0.25)))
    rep = workdir / f"variational_{tag}.json"
    t0 = time.perf_counter()
    code, _, err = _cli(["variational", spec, "--m", 2, "--s", 3, "--R", 40,
                         "--n", 2048, "--out-report", rep])
    return {"code": code, "report": rep.read_bytes(), "err": err,
            "seconds": time.perf_counter() - t0}


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    work = tmp_path_factory.mktemp("acceptance")
    return {
        "threshold": [_threshold_run(work, "first"), _threshold_run(work, "second")],
        "variational": [_variational_run(work, "first"), _variational_run(work, "second")],
    }


# --------------------------------------------------------------------------
# 1. harmonic-map oracle

@pytest.mark.parametrize("m,lam,a", HARMONIC_CASES)
def test_c01_harmonic_oracle(m, lam, a):
    p = zero_potential()
    t0 = time.perf_counter()
    ls, tr = shoot(p, m, a, ShootingOptions(allow_unvalidated=True), r_max=10.0)
    seconds = time.perf_counter() - t0
    err = float(np.max(np.abs(tr.h - harmonic_profile(m, lam, tr.r))))
    _harmonic_runs[(m, lam, a)] = (tr, err, seconds)
    ok = err <= 1e-6 and seconds < 1.0 and tr.r[0] == ls.delta and tr.r[-1] == 10.0
    if len(_harmonic_runs) == len(HARMONIC_CASES):
        worst = max(v[1] for v in _harmonic_runs.values())
        slowest = max(v[2] for v in _harmonic_runs.values())
        all_ok = all(v[1] <= 1e-6 and v[2] < 1.0 for v in _harmonic_runs.values())
        record(1, all_ok, f"max |dh| = {worst:.2e} (<= 1e-6), slowest {slowest:.3f} s (< 1 s)")
    assert ok, f"max |dh| = {err:.3e}, {seconds:.3f} s"


# --------------------------------------------------------------------------
# 2. criterion closed form vs quadrature

def test_c02_criterion_closed_form():
    t0 = time.perf_counter()
    worst = 0.0
    for m in (2, 3, 4):
        for omega in (0.0, 0.1, 0.25):
            num = existence_criterion(landau_lifshitz(1.0, omega), m).value
            c0 = math.pi / (m * math.sin(math.pi / m))
            ref = (1.0 / m - omega) * c0
            # m=4, omega=0.25 has ref = 0 exactly; measure relative to the lambda/m term
            worst = max(worst, abs(num - ref) / max(abs(ref), c0 / m))
    seconds = time.perf_counter() - t0
    ok = worst <= 1e-8 and seconds < 1.0
    record(2, ok, f"worst relative error {worst:.2e} (<= 1e-8), {seconds:.3f} s (< 1 s)")
    assert ok


# --------------------------------------------------------------------------
# 3. existence threshold

def _flip(sweep_report):
    rows = json.loads(sweep_report)["result"]["rows"]
    exists = [r["exists"] for r in rows]
    params = [r["param"] for r in rows]
    return params, exists


def test_c03_existence_threshold(runs):
    first = runs["threshold"][0]
    codes = {om: first["solves"][om][0] for om in THRESHOLD_YES + THRESHOLD_NO}
    codes_ok = (all(codes[om] == 0 for om in THRESHOLD_YES)
                and all(codes[om] == 2 for om in THRESHOLD_NO))
    code, rep, _, err = first["sweep"]
    params, exists = _flip(rep)
    cell = float(REFINE[1] - REFINE[0])
    no_errors = code == 0 and "error" not in exists
    k = exists.index("false") if "false" in exists else len(exists)
    monotone = exists == ["true"] * k + ["false"] * (len(exists) - k)
    flip_ok = (monotone and 0 < k < len(exists)
               and params[k - 1] < 0.5 <= params[k] and params[k] - params[k - 1] <= cell
               and abs(0.5 * (params[k - 1] + params[k]) - 0.5) <= cell)
    seconds = first["seconds"]
    ok = codes_ok and no_errors and flip_ok and seconds < 120.0
    where = f"({params[k - 1]:.5f}, {params[k]:.5f})" if 0 < k < len(params) else "none"
    record(3, ok, f"exit codes {'as expected' if codes_ok else codes}; flip in {where}, "
                  f"cell {cell:.5f}; {seconds:.1f} s (< 120 s)")
    assert codes_ok, codes
    assert no_errors, err
    assert flip_ok
    assert seconds < 120.0


# --------------------------------------------------------------------------
# 4. Pohozaev residual

def test_c04_pohozaev(runs):
    values = []
    p0 = zero_potential()
    for (m, lam, a), (tr, _, _) in sorted(_harmonic_runs.items()):
        values.append(pohozaev_residual(tr, p0, m)[0])
    if len(values) < len(HARMONIC_CASES):  # criterion 1 was deselected
        for m, lam, a in HARMONIC_CASES:
            _, tr = shoot(p0, m, a, ShootingOptions(allow_unvalidated=True), r_max=10.0)
            values.append(pohozaev_residual(tr, p0, m)[0])
    first = runs["threshold"][0]
    for om in THRESHOLD_YES:
        res = json.loads(first["solves"][om][1])["result"]
        values.append(res["diagnostics"]["pohozaev_max_rel"])
    rows = json.loads(first["sweep"][1])["result"]["rows"]
    values += [r["pohozaev_max_rel"] for r in rows if r["exists"] == "true"]
    worst = max(values)
    ok = worst <= 1e-6
    record(4, ok, f"worst residual {worst:.2e} over {len(values)} trajectories (<= 1e-6)")
    assert ok


# --------------------------------------------------------------------------
# 5. monotone connecting orbit

@pytest.fixture(scope="module")
def orbit():
    sol = find_bvp_solution(landau_lifshitz(1.0, 0.25), 2)
    assert isinstance(sol, BvpSolution)
    return sol


def _c5_monotone(sol):
    tr, ls = sol.trajectory, sol.series
    r_in = ls.grid[1:]
    h_in = ls.a * r_in ** 2 + r_in ** 4 * ls.phi[1:]
    h_all = np.concatenate([h_in, tr.h])
    return bool(np.all(tr.hprime > 0.0) and np.all(np.diff(h_in) > 0.0)
                and np.all((h_all > 0.0) & (h_all < math.pi)))


def _c5_tail(sol):
    fit = tail_fit(sol.trajectory)
    target = math.sqrt(0.75 / 2)
    return fit, abs(abs(fit.rate) - target) / target


def _c5_record(sol):
    mono = _c5_monotone(sol)
    fit, dev = _c5_tail(sol)
    ok = mono and dev <= 0.05
    record(5, ok, f"monotone and inside (0, pi): {mono}; tail rate |{fit.rate:.4f}| vs "
                  f"0.61237 ({100 * dev:.1f}% off, limit 5%); the linearisation about pi "
                  f"gives sqrt(0.75) = 0.86603")


def test_c05_monotone_orbit(orbit):
    _c5_record(orbit)
    assert _c5_monotone(orbit)


@pytest.mark.xfail(strict=True, reason=(
    "the solution decays like the modified Bessel function K_m(sqrt(g'(pi)) r), so the "
    "fitted rate is near -sqrt(0.75) = -0.866 (steeper with the 1/(2r) correction); "
    "sqrt(g'(pi)/2) = 0.61237 is only a lower bound on the decay rate"))
def test_c05_tail_rate_matches_target(orbit):
    _, dev = _c5_tail(orbit)
    assert dev <= 0.05


def test_c05_tail_rate_is_the_linearised_rate(orbit):
    # the decay is at least sqrt(g'(pi)/2) and follows the linearisation about pi
    fit, _ = _c5_tail(orbit)
    p = landau_lifshitz(1.0, 0.25)
    assert fit.exponential
    assert abs(fit.rate) >= math.sqrt(0.75 / 2)
    r_mid = 0.5 * (fit.r_from + fit.r_to)
    bessel = linearised_tail_rate(p) - 1.0 / (2.0 * r_mid)
    assert fit.rate == pytest.approx(bessel, rel=0.02)


# --------------------------------------------------------------------------
# 6. series fixed point

def test_c06_series_fixed_point():
    a = fixed_point_solve(zero_potential(), 1, 1.0, 0.5).phi0
    b = fixed_point_solve(landau_lifshitz(1.0, 0.25), 2, 1.0, 0.3).phi0
    da, db = abs(a + 1 / 12), abs(b - 1.25 / 12)
    ok = da <= 1e-9 and db <= 1e-8
    record(6, ok, f"g=0,m=1: |dphi0| = {da:.1e} (<= 1e-9); LL,m=2: |dphi0| = {db:.1e} "
                  f"(<= 1e-8)")
    assert ok


# --------------------------------------------------------------------------
# 7. cross-oracle

def test_c07_cross_oracle(runs):
    first = runs["variational"][0]
    res = json.loads(first["report"])["result"]
    theta, v = res["shooting_slope"], res["initial_slope"]
    diff = abs(theta - v)
    ok = first["code"] == 0 and theta > 0 and v > 0 and diff <= 5e-3 and first["seconds"] < 30
    record(7, ok, f"shooting {theta:.6f}, variational {v:.6f}, |diff| = {diff:.2e} "
                  f"(<= 5e-3), {first['seconds']:.2f} s (< 30 s)")
    assert ok


# --------------------------------------------------------------------------
# 8. scaling law

SCALING = [((1.0, 0.25), 2, 2.0), ((1.0, 0.4), 3, 0.5), ((2.0, 0.3), 4, 1.7)]


def test_c08_scaling_law():
    worst = 0.0
    for (lam, omega), m, scale in SCALING:
        lhs, rhs = scaling_check(landau_lifshitz(lam, omega), m, scale)
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    ok = worst <= 1e-8
    record(8, ok, f"worst relative disagreement {worst:.2e} over {len(SCALING)} triples "
                  f"(<= 1e-8)")
    assert ok


# --------------------------------------------------------------------------
# 9. large-a blow-up

def test_c09_blowup():
    p = landau_lifshitz(1.0, 0.25)
    d = [harmonic_blowup_distance(p, 2, a) for a in (10.0, 50.0, 250.0)]
    ok = d[0] > d[1] > d[2]
    record(9, ok, "sup distances " + ", ".join(f"{x:.3e}" for x in d)
                  + " for a = 10, 50, 250 (strictly decreasing)")
    assert ok


# --------------------------------------------------------------------------
# 10. determinism

def test_c10_determinism(runs):
    t1, t2 = runs["threshold"]
    same = [t1["solves"][om][1] == t2["solves"][om][1] for om in t1["solves"]]
    same.append(t1["sweep"][1] == t2["sweep"][1])
    same.append(t1["sweep"][2] == t2["sweep"][2])
    v1, v2 = runs["variational"]
    same.append(v1["report"] == v2["report"])
    ok = all(same)
    record(10, ok, f"{sum(same)}/{len(same)} report files byte-identical across two runs")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider", *sys.argv[1:]]))
