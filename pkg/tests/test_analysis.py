import math

import numpy as np
import pytest

from equivar.analysis import (beta_numeric, beta_reflection, existence_criterion,
                              expected_tail_rate, harmonic_profile, harmonic_slope,
                              linearised_tail_rate, ll_criterion_closed_form,
                              pohozaev_residual, scaling_check, tail_fit)
from equivar.integrate import EventKind, TerminationEvent, Trajectory
from equivar.potential import landau_lifshitz
from equivar.shooting import ShootingOptions, shoot

UNVALIDATED = ShootingOptions(allow_unvalidated=True)


def traj(r, h, hp=None):
    r = np.asarray(r, dtype=float)
    h = np.asarray(h, dtype=float)
    hp = np.zeros_like(r) if hp is None else np.asarray(hp, dtype=float)
    ev = TerminationEvent(EventKind.REACHED_RMAX, float(r[-1]), float(h[-1]), float(hp[-1]))
    return Trajectory(r, h, hp, ev, {})


def test_harmonic_profile_values():
    assert harmonic_profile(1, 1.0, 1.0) == pytest.approx(math.pi / 2, abs=1e-15)
    assert harmonic_profile(2, 0.5, 2.0) == pytest.approx(math.pi / 2, abs=1e-15)
    r = np.array([0.1, 1.0, 7.0])
    assert np.allclose(harmonic_slope(2, 1.0, r), 4 * r / (1 + r ** 4), rtol=1e-14)


def test_harmonic_map_is_a_solution_of_the_zero_potential_ode():
    m, lam = 3, 0.7
    r = np.linspace(0.3, 5.0, 40)
    eps = 1e-4
    q = lambda x: x * harmonic_slope(m, lam, x)
    lhs = (q(r + eps) - q(r - eps)) / (2 * eps)
    h = harmonic_profile(m, lam, r)
    assert np.max(np.abs(lhs - m * m / r * np.sin(h) * np.cos(h))) <= 1e-7


@pytest.mark.parametrize("m", [2, 3, 4])
@pytest.mark.parametrize("omega", [0.0, 0.1, 0.25])
def test_criterion_matches_closed_form(m, omega):
    p = landau_lifshitz(1.0, omega)
    num = existence_criterion(p, m)
    ref = (1.0 / m - omega) * math.pi / (m * math.sin(math.pi / m))
    assert num.kind == "finite"
    assert abs(num.value - ref) <= 1e-8 * max(abs(ref), 1.0)
    assert num.quadrature_error < 1e-10
    assert ll_criterion_closed_form(1.0, omega, m).value == pytest.approx(ref, rel=1e-15)


def test_criterion_closed_form_examples():
    assert ll_criterion_closed_form(1.0, 0.25, 2).value == pytest.approx(math.pi / 8, rel=1e-15)
    assert ll_criterion_closed_form(1.0, 0.5, 2).value == 0.0
    assert ll_criterion_closed_form(1.0, 0.25, 1).is_infinite


def test_criterion_at_threshold_is_not_positive():
    c = existence_criterion(landau_lifshitz(1.0, 0.5), 2)
    assert abs(c.value) <= 1e-14
    assert not c.positive()


def test_criterion_m1_is_infinite(ll025):
    c = existence_criterion(ll025, 1)
    assert c.is_infinite and c.positive()
    assert c.to_json()["kind"] == "plus_infinity"
    assert "value" not in c.to_json()


def test_criterion_zero_potential(zero):
    c = existence_criterion(zero, 2)
    assert c.value == 0.0 and not c.positive()


def test_criterion_rejects_bad_m(ll025):
    with pytest.raises(ValueError):
        existence_criterion(ll025, 0)


@pytest.mark.parametrize("m", range(2, 9))
def test_beta_reflection(m):
    assert abs(beta_numeric(1 / m) - beta_reflection(1 / m)) <= 1e-12
    assert beta_reflection(0.5) == pytest.approx(math.pi, rel=1e-15)


@pytest.mark.parametrize("lam,omega,m,scale", [
    (1.0, 0.25, 2, 2.0),
    (1.0, 0.4, 3, 0.5),
    (2.0, 0.3, 4, 1.7),
])
def test_scaling_law(lam, omega, m, scale):
    lhs, rhs = scaling_check(landau_lifshitz(lam, omega), m, scale)
    assert abs(lhs - rhs) <= 1e-8 * abs(rhs)


def test_scaling_frozen_values(ll025):
    lhs, rhs = scaling_check(ll025, 2, 2.0)
    assert lhs == pytest.approx(math.pi / 32, rel=1e-12)
    assert rhs == pytest.approx(math.pi / 32, rel=1e-12)


def test_scaling_check_rejects_m1(ll025):
    with pytest.raises(ValueError):
        scaling_check(ll025, 1, 2.0)


@pytest.mark.parametrize("m,a", [(1, 2.0), (2, 2.0), (3, 0.25)])
def test_pohozaev_on_harmonic_shots(zero, m, a):
    _, tr = shoot(zero, m, a, UNVALIDATED, r_max=10.0)
    mx, rel = pohozaev_residual(tr, zero, m)
    assert mx <= 1e-6
    assert rel.shape == tr.r.shape and rel[0] == 0.0


def test_pohozaev_on_constant_pi(ll025):
    r = np.linspace(1.0, 50.0, 200)
    mx, _ = pohozaev_residual(traj(r, np.full_like(r, math.pi)), ll025, 2)
    # every term vanishes; what is left comes from g(fl(pi)) ~ 1e-16 in the interpolant
    assert mx <= 1e-12


def test_pohozaev_stable_under_subsampling(zero):
    _, tr = shoot(zero, 2, 2.0, UNVALIDATED, r_max=10.0)
    sub = traj(tr.r[::2], tr.h[::2], tr.hprime[::2])
    a, _ = pohozaev_residual(tr, zero, 2)
    b, _ = pohozaev_residual(sub, zero, 2)
    assert b <= 1e-6 and abs(a - b) <= 1e-8


def test_pohozaev_detects_a_wrong_profile(ll025):
    # h = 2 arctan(r^2) does not solve the Landau-Lifshitz equation
    r = np.linspace(0.1, 10.0, 400)
    t = traj(r, harmonic_profile(2, 1.0, r), harmonic_slope(2, 1.0, r))
    mx, _ = pohozaev_residual(t, ll025, 2)
    assert mx > 1e-2


def test_pohozaev_needs_two_samples(ll025):
    with pytest.raises(ValueError):
        pohozaev_residual(traj([1.0], [1.0]), ll025, 2)


def test_tail_fit_exact_exponential():
    r = np.linspace(0.0, 20.0, 400)
    fit = tail_fit(traj(r, math.pi - 0.05 * np.exp(-0.5 * r)))
    assert fit.rate == pytest.approx(-0.5, abs=1e-8)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.exponential
    assert fit.r_from >= 15.0 and fit.r_to == 20.0


def test_tail_fit_flags_non_exponential_tail():
    r = np.linspace(0.0, 40.0, 400)
    gap = 0.05 * np.exp(-0.1 * r) * (1.0 + 0.95 * np.sin(2.0 * r))
    fit = tail_fit(traj(r, math.pi - gap))
    assert not fit.exponential


@pytest.mark.parametrize("h_tail", [2.0, math.pi])
def test_tail_fit_rejects_unusable_tails(h_tail):
    r = np.linspace(0.0, 10.0, 50)
    with pytest.raises(ValueError, match="insufficient tail data"):
        tail_fit(traj(r, np.full_like(r, h_tail)))
    with pytest.raises(ValueError, match="insufficient tail data"):
        tail_fit(traj([1.0, 2.0, 3.0], [3.1, 3.1, 3.1]))


def test_rate_references(ll025):
    assert expected_tail_rate(ll025) == pytest.approx(-math.sqrt(0.375), rel=1e-15)
    assert linearised_tail_rate(ll025) == pytest.approx(-math.sqrt(0.75), rel=1e-15)
