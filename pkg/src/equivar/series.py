"""Local solution at the singular origin.

Near ``r = 0`` we write ``h(r) = a r^m + r^(m+2) phi(r)`` and solve for the
correction ``phi`` as the fixed point of the operator

    T(phi)(r) = r^-(m+2) [ int_0^r 1/s int_0^s (m^2/(2t) sin 2h + g(h) t) dt ds - a r^m ].

The ``a r^m`` term cancels analytically against the linear part of ``sin 2h``,
leaving ``T(phi)(r) = int_0^r ... = int_0^1 w^(m+1) log(1/w) f(r w) dw`` with
the bounded integrand

    f(t) = m^2 phi(t) + m^2 (sin 2h - 2h) / (2 t^(m+2)) + g(h) / t^m.

Substituting ``w = exp(-z/(m+2))`` turns the kernel into ``z exp(-z)``, so each
grid value of ``T(phi)`` is one generalised Gauss-Laguerre sum.  No
subtraction of nearly equal quantities appears anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_genlaguerre

from .potential import Potential

__all__ = [
    "LocalSeriesSolution",
    "SeriesError",
    "choose_delta",
    "contraction_constant",
    "c1_bound",
    "default_kappa_max",
    "handoff_delta",
    "fixed_point_solve",
    "initial_state",
    "phi0_limit",
]

N_GRID = 256
GRID_POWER = 1.5
N_LAGUERRE = 28
N_LEGENDRE = 32
HANDOFF_AMPLITUDE = 0.1

_LAG_Z, _LAG_W = roots_genlaguerre(N_LAGUERRE, 1.0)
_LAG_W = _LAG_W / _LAG_W.sum()
_LEG_X, _LEG_W = np.polynomial.legendre.leggauss(N_LEGENDRE)
_LEG_U = 0.5 * (_LEG_X + 1.0)
_LEG_W = 0.5 * _LEG_W


class SeriesError(RuntimeError):
    pass


def contraction_constant(m: int, C1_bound: float, delta: float) -> float:
    return m * m / (m + 2) ** 2 + C1_bound * delta * delta / (m + 4) ** 2


def choose_delta(m: int, C1_bound: float, kappa_max: float) -> float:
    """Largest ``delta <= 1`` whose contraction bound stays below *kappa_max*."""
    if m < 1:
        raise ValueError("m must be a positive integer")
    floor = m * m / (m + 2) ** 2
    if not floor < kappa_max < 1.0:
        raise ValueError(f"kappa_max must lie in ({floor:.6g}, 1) for m={m}")
    if C1_bound < 0.0:
        raise ValueError("C1_bound must be non-negative")
    if C1_bound == 0.0:
        return 1.0
    return min(1.0, math.sqrt((kappa_max - floor) * (m + 4) ** 2 / C1_bound))


def default_kappa_max(m: int) -> float:
    return max(0.5, 0.5 * (1.0 + m * m / (m + 2) ** 2))


def c1_bound(p: Potential, n: int = 512) -> float:
    """``max |g| + |g'|`` on ``[-pi/4, 5 pi/4]`` (covers the reflected extension)."""
    x = np.linspace(-0.25 * math.pi, 1.25 * math.pi, n)
    step = 1e-5
    gv = p.g_array(x)
    dg = (p.g_array(x + step) - p.g_array(x - step)) / (2.0 * step)
    return float(np.max(np.abs(gv) + np.abs(dg)))


def handoff_delta(p: Potential, m: int, a: float, C1: float | None = None) -> float:
    """Hand-off radius: the contraction radius, shrunk so ``|a| delta^m <= 0.1``."""
    if C1 is None:
        C1 = c1_bound(p)
    delta = choose_delta(m, C1, default_kappa_max(m))
    if a != 0.0:
        delta = min(delta, (HANDOFF_AMPLITUDE / abs(a)) ** (1.0 / m))
    return delta


def phi0_limit(m: int, a: float, gprime_0: float) -> float:
    """Fixed point value ``phi*(0)`` from the order ``r^m`` balance."""
    if m == 1:
        return (gprime_0 * a - 2.0 * a ** 3 / 3.0) / 8.0
    return gprime_0 * a / (4.0 * m + 4.0)


def _sin_minus_x(x):
    """``sin(x) - x`` without cancellation for small ``|x|``."""
    x = np.asarray(x, dtype=float)

    def series(xs):
        x2 = xs * xs
        return -xs * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (
            1.0 - x2 / 72.0 * (1.0 - x2 / 110.0 * (1.0 - x2 / 156.0)))))

    if x.size and np.max(np.abs(x)) < 0.25:
        return series(x)
    out = np.sin(x) - x
    small = np.abs(x) < 0.25
    if np.any(small):
        out[small] = series(x[small])
    return out


class _SplineMap:
    """Not-a-knot cubic spline through ``(u_j, phi_j)`` evaluated at fixed points.

    The spline is linear in the data and invariant under rescaling of the
    abscissae, so for the graded grid ``u_j = (j/N)^p`` and the quadrature
    points ``u_j w_k`` the evaluation reduces to a knot-slope matrix product
    and a Hermite gather, computed once per ``m``.
    """

    def __init__(self, knots: np.ndarray, points: np.ndarray):
        n = len(knots)
        self.D = CubicSpline(knots, np.eye(n), axis=0)(knots, 1)
        i = np.clip(np.searchsorted(knots, points, side="right") - 1, 0, n - 2)
        dx = knots[i + 1] - knots[i]
        t = (points - knots[i]) / dx
        t2, t3 = t * t, t * t * t
        self.i = i
        self.h00 = 2 * t3 - 3 * t2 + 1
        self.h01 = -2 * t3 + 3 * t2
        self.h10 = (t3 - 2 * t2 + t) * dx
        self.h11 = (t3 - t2) * dx

    def __call__(self, phi: np.ndarray) -> np.ndarray:
        slope = self.D @ phi
        i = self.i
        return (phi[i] * self.h00 + phi[i + 1] * self.h01
                + slope[i] * self.h10 + slope[i + 1] * self.h11)


def _unit_grid() -> np.ndarray:
    return (np.arange(N_GRID + 1) / N_GRID) ** GRID_POWER


@lru_cache(maxsize=16)
def _laguerre_map(m: int) -> tuple[_SplineMap, np.ndarray]:
    u = _unit_grid()
    pts = np.outer(u, np.exp(-_LAG_Z / (m + 2)))
    return _SplineMap(u, pts.ravel()), pts


@dataclass
class LocalSeriesSolution:
    m: int
    a: float
    delta: float
    grid: np.ndarray
    phi: np.ndarray
    h_delta: float
    hprime_delta: float
    iterations: int
    contraction_kappa: float
    last_step: float
    residual: float
    gprime_0: float
    _potential: Potential | None = None

    @property
    def phi0(self) -> float:
        return float(self.phi[0])

    def phi_at(self, r):
        return CubicSpline(self.grid, self.phi)(r)

    def h_at(self, r):
        r = np.asarray(r, dtype=float)
        return self.a * r ** self.m + r ** (self.m + 2) * self.phi_at(r)

    def hprime_at(self, r):
        """h' from the once-integrated equation ``r h' = int_0^r (...) dt``."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        spline = CubicSpline(self.grid, self.phi)
        f = _integrand(self._potential, self.m, self.a, spline, np.outer(r, _LEG_U),
                       self.gprime_0)
        inner = (f * _LEG_U ** (self.m + 1)) @ _LEG_W
        out = self.m * self.a * r ** (self.m - 1) + r ** (self.m + 1) * inner
        return out if out.size > 1 else float(out[0])


def _integrand_values(p: Potential, m: int, a: float, phi, t, gprime_0: float):
    """Bounded integrand ``f(t)`` of the fixed-point operator given ``phi(t)``."""
    tiny = t <= 1e-12
    ts = np.where(tiny, 1.0, t)
    tm = ts ** m
    h = a * tm + ts ** (m + 2) * phi
    f = m * m * phi + m * m * _sin_minus_x(2.0 * h) / (2.0 * ts ** (m + 2)) + p.g_array(h) / tm
    if np.any(tiny):
        f0 = m * m * phi + gprime_0 * a
        if m == 1:
            f0 = f0 - 2.0 * a ** 3 / 3.0
        f = np.where(tiny, f0, f)
    return f


def _integrand(p: Potential, m: int, a: float, spline, t, gprime_0: float):
    t = np.asarray(t, dtype=float)
    return _integrand_values(p, m, a, spline(t), t, gprime_0)


def _apply_T(p: Potential, m: int, a: float, grid: np.ndarray, phi: np.ndarray,
             gprime_0: float) -> np.ndarray:
    smap, unit_pts = _laguerre_map(m)
    delta = grid[-1]
    pts = delta * unit_pts
    vals = smap(phi).reshape(pts.shape)
    f = _integrand_values(p, m, a, vals, pts, gprime_0)
    return (f @ _LAG_W) / (m + 2) ** 2


def fixed_point_solve(p: Potential, m: int, a: float, delta: float,
                      tol: float = 1e-12, max_iter: int = 200,
                      C1: float | None = None) -> LocalSeriesSolution:
    """Picard iteration ``phi_{k+1} = T(phi_k)`` from ``phi_0 = 0`` on ``[0, delta]``.

    Iteration stops once the step is below ``tol (1 - kappa)/kappa`` (scaled by
    ``max(1, |phi|)``), which bounds the distance to the true fixed point by
    ``tol`` in the same scale.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    if not delta > 0.0:
        raise ValueError("delta must be positive")
    if C1 is None:
        C1 = c1_bound(p)
    kappa = contraction_constant(m, C1, delta)
    if kappa >= 1.0:
        raise SeriesError(f"delta={delta:.6g} gives contraction bound {kappa:.6g} >= 1")
    grid = delta * _unit_grid()
    phi = np.zeros_like(grid)
    g0 = p.gprime_0
    stop = tol * (1.0 - kappa) / max(kappa, 1e-300)
    step = math.inf
    for it in range(1, max_iter + 1):
        new = _apply_T(p, m, a, grid, phi, g0)
        if not np.all(np.isfinite(new)):
            raise SeriesError("non-finite iterate in fixed-point solve")
        step = float(np.max(np.abs(new - phi)))
        phi = new
        scale = max(1.0, float(np.max(np.abs(phi))))
        if step <= stop * scale:
            break
    else:
        raise SeriesError(
            f"fixed point not reached in {max_iter} iterations (last step {step:.3e}); "
            "delta is too large for this g")
    residual = float(np.max(np.abs(_apply_T(p, m, a, grid, phi, g0) - phi)))
    ls = LocalSeriesSolution(m=m, a=a, delta=delta, grid=grid, phi=phi,
                             h_delta=math.nan, hprime_delta=math.nan, iterations=it,
                             contraction_kappa=kappa, last_step=step, residual=residual,
                             gprime_0=g0, _potential=p)
    ls.h_delta = float(a * delta ** m + delta ** (m + 2) * phi[-1])
    ls.hprime_delta = float(ls.hprime_at(delta))
    return ls


def initial_state(ls: LocalSeriesSolution) -> tuple[float, float, float]:
    return ls.h_delta, ls.hprime_delta, ls.delta
