import io
import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from equivar.integrate import (EventKind, IntegrationError, default_rmax, integrate,
                               rhs, write_trajectory_csv)
from equivar.series import fixed_point_solve, handoff_delta
from equivar.potential import landau_lifshitz


def start(p, m, a, delta=None):
    d = delta if delta is not None else handoff_delta(p, m, a)
    ls = fixed_point_solve(p, m, a, d)
    return ls.h_delta, ls.hprime_delta, ls.delta


def test_rhs_trivial_solution(ll025):
    assert rhs(ll025, 2, 3.7, math.pi, 0.0) == (0.0, pytest.approx(0.0, abs=1e-15))


def test_rhs_harmonic_midpoint(zero):
    dh, dhp = rhs(zero, 1, 1.0, math.pi / 2, 0.0)
    assert dh == 0.0 and abs(dhp) < 1e-16


def test_rhs_substitution(ll025):
    dh, dhp = rhs(ll025, 2, 1.0, math.pi / 2, 1.0)
    assert dh == 1.0
    assert dhp == pytest.approx(-0.75, abs=1e-15)


def test_harmonic_map_reproduced(zero):
    tr = integrate(zero, 1, start(zero, 1, 2.0, 0.1), 5.0)
    assert tr.termination.kind == EventKind.REACHED_RMAX
    assert tr.r[-1] == 5.0
    assert tr.h[-1] == pytest.approx(2 * math.atan(5.0), abs=1e-6)
    assert np.max(np.abs(tr.h - 2 * np.arctan(tr.r))) <= 1e-6


def test_large_a_undershoots(ll025):
    tr = integrate(ll025, 2, start(ll025, 2, 50.0), default_rmax(ll025))
    ev = tr.termination
    assert ev.kind == EventKind.SLOPE_ZERO
    assert ev.h < math.pi
    assert abs(ev.hprime) <= 1e-10


def test_small_a_reaches_pi(ll025):
    tr = integrate(ll025, 2, start(ll025, 2, 0.05), default_rmax(ll025))
    ev = tr.termination
    assert ev.kind == EventKind.REACHED_PI
    assert abs(ev.h - math.pi) <= 1e-10
    assert np.all(tr.hprime > 0.0)


def test_trajectory_invariants(ll025):
    s = start(ll025, 2, 0.3)
    tr = integrate(ll025, 2, s, 50.0)
    assert tr.r[0] == s[2]
    assert np.all(np.diff(tr.r) > 0.0)
    assert np.all(np.isfinite(tr.h)) and np.all(np.isfinite(tr.hprime))


def test_zero_amplitude_stays_zero(ll025):
    tr = integrate(ll025, 2, (0.0, 0.0, 0.3), 20.0)
    assert np.all(tr.h == 0.0) and np.all(tr.hprime == 0.0)
    assert tr.termination.kind == EventKind.REACHED_RMAX


def test_step_tolerance_consistency(ll025):
    s = start(ll025, 2, 0.05)
    a = integrate(ll025, 2, s, 5.0, step_tol=1e-10)
    b = integrate(ll025, 2, s, 5.0, step_tol=1e-11)
    assert a.termination.kind == b.termination.kind == EventKind.REACHED_RMAX
    assert abs(a.h[-1] - b.h[-1]) <= 10 * 1e-10


def test_agrees_with_independent_integrator(ll025):
    m = 2
    h0, hp0, r0 = start(ll025, m, 0.06)

    def f(r, y):
        return [y[1], -y[1] / r + m * m / r ** 2 * math.sin(y[0]) * math.cos(y[0])
                + ll025.g(y[0])]

    tr = integrate(ll025, m, (h0, hp0, r0), 6.0)
    ref = solve_ivp(f, (r0, 6.0), [h0, hp0], method="DOP853", rtol=1e-13, atol=1e-14,
                    t_eval=tr.r, dense_output=False)
    assert np.max(np.abs(ref.y[0] - tr.h)) <= 1e-8
    assert np.max(np.abs(ref.y[1] - tr.hprime)) <= 1e-8


def test_event_radius_agrees_with_independent_integrator(ll025):
    m = 2
    h0, hp0, r0 = start(ll025, m, 1.0)

    def f(r, y):
        return [y[1], -y[1] / r + m * m / r ** 2 * math.sin(y[0]) * math.cos(y[0])
                + ll025.g(y[0])]

    def slope(r, y):
        return y[1]
    slope.terminal, slope.direction = True, -1

    tr = integrate(ll025, m, (h0, hp0, r0), 50.0)
    ref = solve_ivp(f, (r0, 50.0), [h0, hp0], method="DOP853", rtol=1e-13, atol=1e-14,
                    events=slope)
    assert tr.termination.kind == EventKind.SLOPE_ZERO
    assert tr.termination.r_event == pytest.approx(ref.t_events[0][0], abs=1e-8)


def test_exit_below_detected():
    # g = -1 drives h negative straight away
    p = SimpleNamespace(g=lambda x: -1.0, label="push-down")
    tr = integrate(p, 1, (0.0, -0.1, 1.0), 10.0)
    assert tr.termination.kind == EventKind.EXITED_BELOW
    assert tr.termination.h == pytest.approx(-1e-6, abs=1e-9)


def test_blow_up_reported():
    # g is singular at h = 1, so the slope diverges before h gets there
    p = SimpleNamespace(g=lambda x: 1 / (1 - x) ** 2 if x < 1 else math.inf, label="blow-up")
    with pytest.raises(IntegrationError, match="underflow") as info:
        integrate(p, 1, (0.0, 1.0, 1.0), 100.0)
    assert 1.0 < info.value.r < 2.0
    assert 0.99 < info.value.h < 1.0


def test_bad_arguments(ll025):
    with pytest.raises(ValueError):
        integrate(ll025, 2, (0.0, 0.0, 0.0), 1.0)
    with pytest.raises(ValueError):
        integrate(ll025, 2, (0.0, 0.0, 2.0), 1.0)
    with pytest.raises(IntegrationError):
        integrate(ll025, 2, (math.nan, 0.0, 1.0), 2.0)


def test_default_rmax():
    assert default_rmax(landau_lifshitz(1.0, 0.25)) == pytest.approx(100 / math.sqrt(0.375))
    assert default_rmax(landau_lifshitz(1.0, 0.9)) > 100.0


def test_csv_export_round_trip(ll025):
    tr = integrate(ll025, 2, start(ll025, 2, 0.3), 5.0)
    buf = io.StringIO()
    write_trajectory_csv(tr, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "r,h,hprime"
    assert len(lines) == len(tr) + 1
    back = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    assert np.array_equal(back[:, 0], tr.r) and np.array_equal(back[:, 1], tr.h)
    assert np.array_equal(back[:, 2], tr.hprime)


def test_truncated_keeps_prefix(ll025):
    tr = integrate(ll025, 2, start(ll025, 2, 0.3), 20.0)
    cut = tr.truncated(2.0)
    assert cut.r[-1] <= 2.0 and len(cut) < len(tr)
    assert cut.termination.kind == EventKind.REACHED_RMAX
