"""Discrete minimisation of the half-line energy from ``h(s) = xi``.

    J_s(h) = 1/2 int_s^R [(h')^2 + (m^2/r^2) sin^2 h] r dr + int_s^R G(h) r dr

on continuous piecewise-linear ``h`` over geometric nodes, with ``h(s) = xi``
and ``h(R) = pi`` pinned and ``xi <= h <= pi`` enforced by clamping.  The
kinetic term is integrated exactly per element; the rest by the trapezoid
rule, which makes the Hessian tridiagonal.  The descent direction is the
gradient preconditioned by that (positivity-clipped) Hessian, followed by
projection onto the box and Armijo backtracking.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .analysis import harmonic_profile
from .potential import Potential

__all__ = [
    "VariationalOptions",
    "DiscreteProfile",
    "VariationalError",
    "geometric_nodes",
    "default_R",
    "discrete_energy",
    "ramp_profile",
    "minimize_Js",
    "euler_lagrange_residual",
    "initial_slope",
    "pohozaev_slope_squared",
    "harmonic_comparison_margin",
    "write_profile_csv",
]


class VariationalError(RuntimeError):
    pass


@dataclass(frozen=True)
class VariationalOptions:
    grad_tol: float = 1e-8
    max_iter: int = 500
    armijo: float = 1e-4
    max_backtracks: int = 60


@dataclass
class DiscreteProfile:
    s: float
    R: float
    m: int
    nodes: np.ndarray
    values: np.ndarray
    energy: float
    iterations: int = 0
    grad_norm: float = math.nan
    clamp_active: bool = False
    energy_history: list = field(default_factory=list, repr=False)
    potential: str = ""

    @property
    def n(self) -> int:
        return len(self.nodes) - 1

    def to_json(self, p: Potential | None = None) -> dict:
        out = {
            "s": self.s, "R": self.R, "m": self.m, "n": self.n,
            "energy": self.energy, "iterations": self.iterations,
            "grad_norm": self.grad_norm, "clamp_active": self.clamp_active,
            "initial_slope": initial_slope(self),
            "potential": self.potential,
        }
        if p is not None:
            out["euler_lagrange_residual"] = euler_lagrange_residual(self, p, self.m)
        return out


def geometric_nodes(s: float, R: float, n: int) -> np.ndarray:
    r = s * (R / s) ** (np.arange(n + 1) / n)
    r[0], r[-1] = s, R
    return r


def default_R(p: Potential, s: float) -> float:
    return s + 20.0 / math.sqrt(0.5 * p.gprime_pi)


def _weights(r: np.ndarray) -> np.ndarray:
    dr = np.diff(r)
    w = np.zeros_like(r)
    w[:-1] += 0.5 * dr
    w[1:] += 0.5 * dr
    return w


def discrete_energy(p: Potential, m: int, r: np.ndarray, h: np.ndarray) -> float:
    dr = np.diff(r)
    dh = np.diff(h)
    kinetic = 0.25 * np.sum(dh * dh * (r[1:] + r[:-1]) / dr)
    q = 0.5 * m * m * np.sin(h) ** 2 / r + np.asarray(p.G_ext(h)) * r
    return float(kinetic + np.sum(_weights(r) * q))


def _gradient(p, m, r, h, w):
    dr = np.diff(r)
    c = 0.5 * (r[1:] + r[:-1]) / dr  # element stiffness
    flux = c * np.diff(h)
    grad = np.zeros_like(h)
    grad[1:-1] = flux[:-1] - flux[1:]
    grad[1:-1] += w[1:-1] * (0.5 * m * m * np.sin(2.0 * h[1:-1]) / r[1:-1]
                             + p.g_array(h[1:-1]) * r[1:-1])
    return grad, c


def _gprime(p: Potential, x, step: float = 1e-5):
    return (p.g_array(x + step) - p.g_array(x - step)) / (2.0 * step)


def _hessian_bands(p, m, r, h, w, c):
    """Tridiagonal Hessian on interior nodes; the potential diagonal is clipped at 0."""
    hi = h[1:-1]
    ri = r[1:-1]
    pot = w[1:-1] * (m * m * np.cos(2.0 * hi) / ri + _gprime(p, hi) * ri)
    diag = c[:-1] + c[1:] + np.maximum(pot, 0.0)
    n = len(hi)
    ab = np.zeros((3, n))
    ab[0, 1:] = -c[1:-1]
    ab[1] = diag
    ab[2, :-1] = -c[1:-1]
    return ab


def ramp_profile(xi: float, r: np.ndarray) -> np.ndarray:
    """Linear ramp from ``xi`` at ``r[0]`` to ``pi`` at ``r[-1]``."""
    return xi + (math.pi - xi) * (r - r[0]) / (r[-1] - r[0])


def minimize_Js(p: Potential, m: int, s: float, R: float | None = None, n: int = 1024,
                opts: VariationalOptions = VariationalOptions(),
                allow_unvalidated: bool = False) -> DiscreteProfile:
    if not (p.report.ok or allow_unvalidated):
        raise ValueError(f"potential {p.label} fails the structural conditions")
    if not s > 0.0:
        raise ValueError("s must be positive")
    if R is None:
        R = default_R(p, s)
    if not R > s:
        raise ValueError("R must exceed s")
    if n < 128:
        raise ValueError("n must be at least 128")
    xi = p.xi
    r = geometric_nodes(s, R, n)
    w = _weights(r)
    h = ramp_profile(xi, r)
    E = discrete_energy(p, m, r, h)
    history = [E]
    grad, c = _gradient(p, m, r, h, w)
    gnorm = float(np.max(np.abs(grad)))
    it = 0
    while gnorm > opts.grad_tol:
        it += 1
        if it > opts.max_iter:
            raise VariationalError(
                f"no convergence in {opts.max_iter} iterations (|grad| = {gnorm:.3e})")
        ab = _hessian_bands(p, m, r, h, w, c)
        d = np.zeros_like(h)
        d[1:-1] = -solve_banded((1, 1), ab, grad[1:-1])
        t = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            trial = np.clip(h + t * d, xi, math.pi)
            trial[0], trial[-1] = xi, math.pi
            E_new = discrete_energy(p, m, r, trial)
            decrease = float(grad @ (trial - h))
            if E_new <= E + opts.armijo * decrease:
                accepted = True
                break
            # rounding floor: the energy cannot resolve the change but the gradient can
            if abs(E_new - E) <= 1e-14 * max(1.0, abs(E)):
                g_trial, _ = _gradient(p, m, r, trial, w)
                if np.max(np.abs(g_trial)) < gnorm:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            raise VariationalError(f"line search failed at iteration {it} (|grad| = {gnorm:.3e})")
        h, E = trial, E_new
        history.append(E)
        grad, c = _gradient(p, m, r, h, w)
        gnorm = float(np.max(np.abs(grad)))
    interior = h[1:-1]
    clamp_active = bool(np.any(interior <= xi) or np.any(interior >= math.pi))
    return DiscreteProfile(s=s, R=R, m=m, nodes=r, values=h, energy=E, iterations=it,
                           grad_norm=gnorm, clamp_active=clamp_active,
                           energy_history=history, potential=p.label)


def euler_lagrange_residual(dp: DiscreteProfile, p: Potential, m: int) -> float:
    """Scaled sup over interior nodes of ``|(r h')' - (m^2/r) sin h cos h - g(h) r|``."""
    r, h = dp.nodes, dp.values
    dr = np.diff(r)
    flux = 0.5 * (r[1:] + r[:-1]) * np.diff(h) / dr
    div = (flux[1:] - flux[:-1]) / (0.5 * (dr[1:] + dr[:-1]))
    hi, ri = h[1:-1], r[1:-1]
    res = div - m * m / ri * np.sin(hi) * np.cos(hi) - p.g_array(hi) * ri
    g_sup = float(np.max(np.abs(p.g_array(np.linspace(0.0, math.pi, 2049)))))
    return float(np.max(np.abs(res)) / max(1.0, g_sup * dp.R))


def initial_slope(dp: DiscreteProfile) -> float:
    """One-sided three-point derivative at ``s`` on the non-uniform grid."""
    r, h = dp.nodes, dp.values
    d0, d1 = r[1] - r[0], r[2] - r[1]
    return float(-(2 * d0 + d1) / (d0 * (d0 + d1)) * h[0]
                 + (d0 + d1) / (d0 * d1) * h[1]
                 - d0 / (d1 * (d0 + d1)) * h[2])


def pohozaev_slope_squared(dp: DiscreteProfile, p: Potential, m: int) -> float:
    """``m^2 sin^2 xi + 2 G(xi) s^2 + 4 int_s^R G(h) t dt`` (trapezoid on the nodes)."""
    r, h = dp.nodes, dp.values
    F = np.asarray(p.G_ext(h)) * r
    integral = float(np.sum(0.5 * np.diff(r) * (F[1:] + F[:-1])))
    return (m * m * math.sin(h[0]) ** 2 + 2.0 * float(p.G_ext(h[0])) * dp.s ** 2
            + 4.0 * integral)


def harmonic_comparison_margin(dp: DiscreteProfile, m: int) -> float:
    """``min(h - phi)`` over interior nodes, ``phi`` the harmonic profile with ``phi(s) = h(s)``."""
    lam = math.tan(0.5 * dp.values[0]) ** (1.0 / m) / dp.s
    r = dp.nodes[1:-1]
    return float(np.min(dp.values[1:-1] - harmonic_profile(m, lam, r)))


def write_profile_csv(dp: DiscreteProfile, path_or_buf) -> None:
    lines = ["r,h"] + [f"{r:.17g},{h:.17g}" for r, h in zip(dp.nodes, dp.values)]
    text = "\n".join(lines) + "\n"
    if isinstance(path_or_buf, io.TextIOBase) or hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", newline="") as fh:
            fh.write(text)
