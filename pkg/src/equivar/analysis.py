"""Closed forms and diagnostics.

The harmonic family ``phi_lambda(r) = 2 arctan((lambda r)^m)``, the existence
criterion ``int_0^inf G(phi_1(r)) r dr``, its Landau-Lifshitz closed form, the
Pohozaev first-integral residual along a trajectory and exponential tail fits.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate as spi
from scipy.interpolate import BPoly

from .integrate import Trajectory
from .potential import Potential

__all__ = [
    "CriterionValue",
    "TailFit",
    "harmonic_profile",
    "harmonic_slope",
    "existence_criterion",
    "ll_criterion_closed_form",
    "beta_reflection",
    "beta_numeric",
    "pohozaev_residual",
    "tail_fit",
    "tail_rate",
    "expected_tail_rate",
    "linearised_tail_rate",
    "scaling_check",
    "harmonic_comparison_margin",
]

TAIL_REL = 1e-10
_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)
RC_MAX = 1e7


@dataclass(frozen=True)
class CriterionValue:
    kind: str  # "finite" | "plus_infinity"
    value: float = math.inf
    quadrature_error: float = 0.0
    tail_exponent: float = math.nan

    @property
    def is_infinite(self) -> bool:
        return self.kind == "plus_infinity"

    def positive(self) -> bool:
        """Strictly positive, with a finite value required to clear its error bar."""
        if self.is_infinite:
            return True
        return self.value > self.quadrature_error

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "finite":
            out["value"] = self.value
            out["quadrature_error"] = self.quadrature_error
        out["tail_exponent"] = self.tail_exponent
        return out


# --------------------------------------------------------------------------
# harmonic maps

def harmonic_profile(m: int, lam: float, r):
    r = np.asarray(r, dtype=float)
    out = 2.0 * np.arctan((lam * r) ** m)
    return float(out) if out.ndim == 0 else out


def harmonic_slope(m: int, lam: float, r):
    """``phi_lambda'(r) = m sin(phi_lambda)/r`` for ``r > 0``."""
    r = np.asarray(r, dtype=float)
    out = m * np.sin(harmonic_profile(m, lam, r)) / r
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# existence criterion

def _criterion_integrand(p: Potential, m: int, lam: float):
    # G(phi_lambda(r)) r, with G evaluated from the pi side: pi - phi = 2 arctan((lam r)^-m)
    def f(r):
        if r == 0.0:
            return 0.0
        y = 2.0 * math.atan((lam * r) ** (-m))
        return float(p.G_from_pi(y)) * r
    return f


def _quad_decades(f, r_end: float, r_start: float = 0.0, unit: float = 1.0):
    """Integrate ``f`` on ``[r_start, r_end]`` piecewise over decades of ``r / unit``."""
    edges = [r_start]
    x0 = r_start / unit
    e = 1.0 if x0 < 1.0 else 10.0 ** math.floor(math.log10(x0) + 1)
    if x0 < 0.25:
        edges += [0.25 * unit, 0.5 * unit]
    while e * unit < r_end:
        if e * unit > edges[-1]:
            edges.append(e * unit)
        e *= 10.0
    edges.append(r_end)
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("error", spi.IntegrationWarning)
            v, e_ = spi.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)
        total += v
        err += e_
    return total, err


def _criterion_integral(p: Potential, m: int, lam: float = 1.0) -> CriterionValue:
    if m < 1:
        raise ValueError("m must be a positive integer")
    gp = p.gprime_pi
    if m == 1:
        if gp > 0.0:
            return CriterionValue("plus_infinity", math.inf, 0.0, -1.0)
        # degenerate: the tail is governed by higher-order terms we do not model
        raise ValueError("m=1 with g'(pi) <= 0 is outside the supported class")
    f = _criterion_integrand(p, m, lam)
    head_guess, _ = _quad_decades(f, 10.0 / lam, unit=1.0 / lam)
    scale = max(abs(head_guess), spi.quad(lambda r: abs(f(r)), 0.0, 10.0 / lam,
                                          limit=200)[0])

    # tail of 2 g'(pi) lam^(-2m) r^(1-2m) beyond R_c; choose R_c to make it negligible
    coef = 2.0 * gp * lam ** (-2 * m)

    def tail(Rc):
        return coef * Rc ** (2 - 2 * m) / (2 * m - 2)

    Rc = 10.0 / lam
    while abs(tail(Rc)) > TAIL_REL * scale and Rc < RC_MAX:
        Rc *= 10.0
    Rc = min(Rc, RC_MAX)
    head, qerr = _quad_decades(f, Rc, unit=1.0 / lam)
    t_est = tail(Rc)
    # next-order size of the tail, from quadrature of the window [Rc, 2Rc]
    # only an error estimate; a user g loses relative digits this close to pi
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spi.IntegrationWarning)
        window, _ = spi.quad(f, Rc, 2.0 * Rc, epsabs=0.0, epsrel=1e-12, limit=200)
    window_asym = t_est - tail(2.0 * Rc)
    rel_dev = abs(window - window_asym) / abs(window_asym) if window_asym != 0.0 else 0.0
    err = qerr + abs(t_est) * rel_dev + 1e-15 * scale
    return CriterionValue("finite", head + t_est, err, float(1 - 2 * m))


def existence_criterion(p: Potential, m: int) -> CriterionValue:
    """``int_0^inf G(phi_1(r)) r dr`` with ``phi_1 = 2 arctan(r^m)``."""
    return _criterion_integral(p, m, 1.0)


def beta_reflection(x: float) -> float:
    """``B(x, 1-x) = pi / sin(pi x)`` for ``0 < x < 1``."""
    return math.pi / math.sin(math.pi * x)


def beta_numeric(x: float) -> float:
    """``B(x, 1-x)`` from its defining integral (algebraic-weight quadrature)."""
    v, _ = spi.quad(lambda t: 1.0, 0.0, 1.0, weight="alg", wvar=(x - 1.0, -x),
                    epsabs=0.0, epsrel=1e-13, limit=200)
    return v


def ll_criterion_closed_form(lam: float, omega: float, m: int) -> CriterionValue:
    """``(lambda/m - omega) C0`` with ``C0 = B(1/m, 1 - 1/m)/m``; infinite for m = 1."""
    if not lam > 0.0:
        raise ValueError("lambda must be positive")
    if m < 1:
        raise ValueError("m must be a positive integer")
    if m == 1:
        return CriterionValue("plus_infinity", math.inf, 0.0, -1.0)
    c0 = beta_reflection(1.0 / m) / m
    return CriterionValue("finite", (lam / m - omega) * c0, 0.0, float(1 - 2 * m))


def scaling_check(p: Potential, m: int, lam: float) -> tuple[float, float]:
    """``(int G(phi_lambda) r dr, lambda^-2 int G(phi_1) r dr)``, both by quadrature."""
    if m < 2:
        raise ValueError("scaling_check needs m >= 2 (finite criterion)")
    if not lam > 0.0:
        raise ValueError("lambda must be positive")
    lhs = _criterion_integral(p, m, lam).value
    rhs = _criterion_integral(p, m, 1.0).value / lam ** 2
    return lhs, rhs


# --------------------------------------------------------------------------
# Pohozaev identity

def pohozaev_residual(t: Trajectory, p: Potential, m: int) -> tuple[float, np.ndarray]:
    """Relative residual of the Pohozaev first integral between the first sample and each r.

    The running integral of ``G(h) t`` is taken per step by 8-point
    Gauss-Legendre on the quintic Hermite interpolant of the samples, whose
    second derivatives come from the ODE itself.  The plain or
    endpoint-corrected trapezoid rule on the integrator's steps leaves a
    quadrature error of order 1e-6 at the default tolerances, larger than
    the trajectory error the check is meant to expose.
    """
    r, h, hp = np.asarray(t.r), np.asarray(t.h), np.asarray(t.hprime)
    if len(r) < 2:
        raise ValueError("need at least two samples")
    G = p.G_ext(h)
    G = np.asarray(G, dtype=float) * np.ones_like(h)
    hpp = -hp / r + (m * m / r ** 2) * np.sin(h) * np.cos(h) + p.g_array(h)
    interp = BPoly.from_derivatives(r, np.column_stack([h, hp, hpp]))
    lo, hi = r[:-1], r[1:]
    half = 0.5 * (hi - lo)
    nodes = half[:, None] * _GL8_X[None, :] + 0.5 * (hi + lo)[:, None]
    F = np.asarray(p.G_ext(interp(nodes)), dtype=float) * nodes
    pieces = half * (F @ _GL8_W)
    I = np.concatenate([[0.0], np.cumsum(pieces)])

    s = 0
    terms = [
        (r * hp) ** 2,
        -np.full_like(r, (r[s] * hp[s]) ** 2),
        -m * m * np.sin(h) ** 2,
        np.full_like(r, m * m * math.sin(h[s]) ** 2),
        -2.0 * G * r ** 2,
        np.full_like(r, 2.0 * G[s] * r[s] ** 2),
        4.0 * I,
    ]
    total = np.sum(terms, axis=0)
    # the terms are O(m^2); below m^2 * eps they are rounding noise, not a scale
    scale = np.maximum(np.max(np.abs(terms), axis=0), m * m * np.finfo(float).eps)
    rel = np.abs(total) / scale
    return float(np.max(rel)), rel


# --------------------------------------------------------------------------
# tail fits

@dataclass(frozen=True)
class TailFit:
    rate: float
    r_squared: float
    n_points: int
    r_from: float
    r_to: float

    @property
    def exponential(self) -> bool:
        return self.r_squared >= 0.99


def tail_fit(t: Trajectory, p: Potential | None = None) -> TailFit:
    """Least-squares slope of ``log(pi - h)`` against ``r`` over the final quarter in r."""
    r, h = np.asarray(t.r), np.asarray(t.h)
    if len(r) < 4:
        raise ValueError("insufficient tail data: fewer than 4 samples")
    r_cut = r[-1] - 0.25 * (r[-1] - r[0])
    sel = r >= r_cut
    gap = math.pi - h[sel]
    if np.count_nonzero(sel) < 4:
        raise ValueError("insufficient tail data: fewer than 4 samples in the final quarter")
    if np.any(gap >= 0.1):
        raise ValueError("insufficient tail data: pi - h >= 0.1 in the final quarter")
    if np.any(gap <= 0.0):
        raise ValueError("insufficient tail data: h reaches pi in the final quarter")
    x, y = r[sel], np.log(gap)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ coef
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return TailFit(float(coef[0]), r2, int(np.count_nonzero(sel)), float(x[0]), float(x[-1]))


def tail_rate(t: Trajectory, p: Potential | None = None) -> float:
    return tail_fit(t, p).rate


def expected_tail_rate(p: Potential) -> float:
    """``-sqrt(g'(pi)/2)``, the decay the exponential-tail argument guarantees."""
    return -math.sqrt(0.5 * p.gprime_pi)


def linearised_tail_rate(p: Potential) -> float:
    """``-sqrt(g'(pi))``: the decay of the linearisation about pi (modified Bessel K_m)."""
    return -math.sqrt(p.gprime_pi)


# --------------------------------------------------------------------------
# comparison with the harmonic family

def harmonic_comparison_margin(t: Trajectory, p: Potential, m: int,
                               r_front: np.ndarray | None = None,
                               h_front: np.ndarray | None = None) -> float | None:
    """``min(phi(r) - h(r))`` over samples before h first reaches xi.

    ``phi`` is the harmonic profile rescaled so that ``phi(s_a) = xi`` at the
    first radius ``s_a`` with ``h(s_a) = xi``.  Optional ``r_front``/``h_front``
    prepend samples inside the hand-off radius.  Returns None if h never
    reaches xi.
    """
    r, h = np.asarray(t.r), np.asarray(t.h)
    xi = p.xi
    idx = np.nonzero(h >= xi)[0]
    if len(idx) == 0:
        return None
    k = int(idx[0])
    if k == 0:
        s_a = float(r[0])
    else:
        # linear interpolation for the crossing radius is enough for a margin test
        r0, r1, h0, h1 = r[k - 1], r[k], h[k - 1], h[k]
        s_a = float(r0 + (xi - h0) * (r1 - r0) / (h1 - h0))
    lam = math.tan(0.5 * xi) ** (1.0 / m) / s_a
    rs, hs = r[:k], h[:k]
    if r_front is not None:
        rs = np.concatenate([np.asarray(r_front), rs])
        hs = np.concatenate([np.asarray(h_front), hs])
    if len(rs) == 0:
        return math.inf
    return float(np.min(harmonic_profile(m, lam, rs) - hs))
