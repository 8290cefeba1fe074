"""Potential pairs ``(g, G)`` on ``[0, pi]`` and the structural checks on ``g``.

``G`` is always the primitive normalised at the south pole,
``G(x) = -int_x^pi g(t) dt``, so ``G(pi) = 0`` and ``G' = g``.

The admissible class asks for a single interior zero ``xi`` of ``g`` with
``g > 0`` on ``(0, xi)``, ``g < 0`` on ``(xi, pi)``, ``g(0) = g(pi) = 0``,
``int_0^pi g > 0`` and ``g'(pi) > 0``.  These are checked on a sample grid,
not proven.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from numpy.polynomial import Chebyshev
from scipy import integrate

from .expr import DomainError, ExprError, parse

__all__ = [
    "PotentialSpec",
    "ConditionReport",
    "Potential",
    "PotentialError",
    "build_potential",
    "landau_lifshitz",
    "zero_potential",
    "eval_G",
    "check_conditions",
]

PI = math.pi
DERIV_STEP = 1e-5
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_S = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class PotentialError(ValueError):
    pass


@dataclass(frozen=True)
class PotentialSpec:
    g_text: str
    params: Mapping[str, float] = field(default_factory=dict)
    G_text: str | None = None

    @classmethod
    def from_json(cls, obj) -> "PotentialSpec":
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        if not isinstance(obj, dict) or not isinstance(obj.get("g"), str):
            raise PotentialError('potential spec must be an object with a string "g"')
        params = obj.get("params")
        if params is None:
            params = {}
        if not isinstance(params, dict):
            raise PotentialError('"params" must be an object')
        bad = [k for k, v in params.items()
               if isinstance(v, bool) or not isinstance(v, (int, float))]
        if bad:
            raise PotentialError(f"non-numeric parameter(s): {', '.join(sorted(bad))}")
        G_text = obj.get("G")
        if G_text is not None and not isinstance(G_text, str):
            raise PotentialError('"G" must be a string when given')
        return cls(obj["g"], {k: float(v) for k, v in params.items()}, G_text)

    def to_json(self) -> dict:
        out = {"g": self.g_text, "params": {k: self.params[k] for k in sorted(self.params)}}
        if self.G_text is not None:
            out["G"] = self.G_text
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class ConditionReport:
    ok: bool
    xi: float
    zeros_found: tuple[float, ...]
    sign_violations: tuple[tuple[float, float], ...]
    integral_g: float
    gprime_pi: float
    messages: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "xi": self.xi,
            "zeros_found": list(self.zeros_found),
            "sign_violations": [list(v) for v in self.sign_violations],
            "integral_g": self.integral_g,
            "gprime_pi": self.gprime_pi,
            "messages": list(self.messages),
        }


def _reflect(x):
    """Map ``x`` into ``[0, pi]`` and return ``(y, sign)`` with g(x) = sign*g(y).

    Odd reflection about 0 and about pi; the composition is a 2*pi shift.
    """
    y = math.fmod(x + PI, 2.0 * PI)
    if y < 0.0:
        y += 2.0 * PI
    y -= PI
    if y < 0.0:
        return -y, -1.0
    return y, 1.0


class Potential:
    """The pair ``(g, G)`` together with ``xi``, ``g'(0)``, ``g'(pi)`` and a report.

    ``g`` and ``g_array`` extend the user function outside ``[0, pi]`` by odd
    reflection, so an integrator that overshoots a pole sees a C^1 continuation.
    ``G_ext`` is the matching even extension.  Use :func:`eval_G` for the
    range-checked primitive.
    """

    def __init__(self, *, g: Callable, g_array: Callable, G_array: Callable,
                 xi: float, gprime_0: float, gprime_pi: float,
                 report: ConditionReport, label: str,
                 spec: PotentialSpec | None = None,
                 ll_params: tuple[float, float] | None = None,
                 G_from_pi: Callable | None = None,
                 closed_form: bool = False):
        self._g_inner = g
        self._g_array_inner = g_array
        self._G_array = G_array
        self.xi = xi
        self.gprime_0 = gprime_0
        self.gprime_pi = gprime_pi
        self.report = report
        self.label = label
        self.spec = spec
        self.ll_params = ll_params
        self.closed_form = closed_form
        self._G_from_pi = G_from_pi

    def __repr__(self) -> str:
        return f"Potential({self.label})"

    # g ------------------------------------------------------------------
    def g(self, x: float) -> float:
        if 0.0 <= x <= PI:
            return self._g_inner(x)
        y, sgn = _reflect(x)
        return sgn * self._g_inner(y)

    def g_array(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x <= PI)
        if np.all(inside):
            return np.asarray(self._g_array_inner(x), dtype=float) * np.ones_like(x)
        y = np.mod(x + PI, 2.0 * PI) - PI
        sgn = np.where(y < 0.0, -1.0, 1.0)
        return sgn * np.asarray(self._g_array_inner(np.abs(y)), dtype=float) * np.ones_like(x)

    # G ------------------------------------------------------------------
    def G_ext(self, x):
        """Even extension of G about 0 and pi; equals G on [0, pi]."""
        x = np.asarray(x, dtype=float)
        y = np.abs(np.mod(x + PI, 2.0 * PI) - PI)
        out = self._G_near(y)
        return float(out) if out.ndim == 0 else out

    def G_from_pi(self, y):
        """``G(pi - y)`` for ``0 <= y``, accurate when y is tiny."""
        y = np.asarray(y, dtype=float)
        if self._G_from_pi is not None:
            out = np.asarray(self._G_from_pi(y), dtype=float) * np.ones_like(y)
        else:
            out = self._G_from_pi_quad(y).reshape(y.shape)
        return float(out) if out.ndim == 0 else out

    def _G_from_pi_quad(self, y):
        y = np.atleast_1d(y)
        out = np.empty_like(y)
        small = y < 1e-3
        if np.any(small):
            ys = y[small]
            pts = PI - np.outer(ys, _GL_S)
            out[small] = -ys * (self.g_array(pts) @ _GL_W)
        if np.any(~small):
            out[~small] = self._G_array(PI - y[~small])
        return out

    def _G_near(self, x):
        # x in [0, pi]; route the neighbourhood of pi through G_from_pi
        x = np.asarray(x, dtype=float)
        near = (PI - x) < 1e-6
        if not np.any(near):
            return np.asarray(self._G_array(x), dtype=float) * np.ones_like(x)
        out = np.asarray(self._G_array(np.where(near, 0.0, x)), dtype=float) * np.ones_like(x)
        out = np.where(near, self.G_from_pi(np.maximum(PI - x, 0.0)), out)
        return out


def eval_G(p: Potential, x):
    """Range-checked ``G(x)`` on ``[0, pi]``."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0.0) or np.any(xa > PI) or np.any(np.isnan(xa)):
        raise PotentialError("G is defined on [0, pi] only")
    out = p._G_near(xa)
    out = np.where(xa == PI, 0.0, out)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# condition checks

def _bisect_root(f: Callable, lo: float, hi: float, tol_root: float) -> float:
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0 or (hi - lo <= tol_root and abs(fm) <= tol_root):
            return mid
        if mid in (lo, hi):
            return mid
        if (fm > 0.0) == (flo > 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def check_conditions(g_scalar: Callable, g_array: Callable, integral_g: float,
                     gprime_pi: float, n_grid: int = 2048,
                     tol_root: float = 1e-12) -> ConditionReport:
    """Sampled check of the sign pattern of ``g`` plus the two scalar conditions."""
    if n_grid < 64:
        raise PotentialError("n_grid must be at least 64")
    x = np.linspace(0.0, PI, n_grid)
    gv = np.asarray(g_array(x), dtype=float) * np.ones_like(x)
    messages = []
    if not np.all(np.isfinite(gv)):
        messages.append("g is not finite on the sample grid")
        return ConditionReport(False, math.nan, (), (), integral_g, gprime_pi,
                               tuple(messages))
    scale = max(float(np.max(np.abs(gv))), 1e-300)
    ztol = 1e-13 * scale
    violations = []
    for xe, ge in ((0.0, gv[0]), (PI, gv[-1])):
        if abs(ge) > 1e-10 * max(scale, 1.0):
            violations.append((xe, float(ge)))
            messages.append(f"g({xe:.6g}) = {ge:.3e} is not zero")

    inner = gv[1:-1]
    xin = x[1:-1]
    sign = np.where(np.abs(inner) <= ztol, 0, np.sign(inner)).astype(int)
    zeros = []
    i = 0
    while i < len(sign) - 1:
        if sign[i] * sign[i + 1] < 0:
            zeros.append(_bisect_root(g_scalar, xin[i], xin[i + 1], tol_root))
        elif sign[i] == 0:
            j = i
            while j + 1 < len(sign) and sign[j + 1] == 0:
                j += 1
            zeros.append(float(0.5 * (xin[i] + xin[j])))
            i = j
        i += 1
    if sign[-1] == 0 and (not zeros or zeros[-1] < xin[-1]):
        zeros.append(float(xin[-1]))

    if len(zeros) == 0:
        messages.append("no interior zero of g in (0, pi)")
        xi = math.nan
    elif len(zeros) > 1:
        messages.append(f"{len(zeros)} interior zeros of g in (0, pi); exactly one required")
        xi = math.nan
    else:
        xi = float(zeros[0])

    if not math.isnan(xi):
        band = 4.0 * PI / (n_grid - 1)
        left = (xin < xi - band) & (inner <= 0.0)
        right = (xin > xi + band) & (inner >= 0.0)
        for k in np.flatnonzero(left | right)[:32]:
            violations.append((float(xin[k]), float(inner[k])))
        if np.any(left):
            messages.append("g is not positive on (0, xi)")
        if np.any(right):
            messages.append("g is not negative on (xi, pi)")

    if not integral_g > 0.0:
        messages.append(f"integral of g over [0, pi] is {integral_g:.6g}, must be positive")
    if not gprime_pi > 0.0:
        messages.append(f"g'(pi) = {gprime_pi:.6g}, must be positive")

    ok = (len(zeros) == 1 and not violations and integral_g > 0.0 and gprime_pi > 0.0)
    if ok:
        messages.append("conditions hold on the sample grid")
    return ConditionReport(ok, xi, tuple(float(z) for z in zeros), tuple(violations),
                           float(integral_g), float(gprime_pi), tuple(messages))


def _central_diff(f: Callable, x: float, h: float = DERIV_STEP) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


# --------------------------------------------------------------------------
# constructors

def _chebyshev_primitive(g_array: Callable):
    """Chebyshev interpolant of g on [0, pi] and its primitive vanishing at pi."""
    coef_tol = 1e-15
    prev = None
    for deg in (32, 64, 128, 256, 512, 1024):
        cheb = Chebyshev.interpolate(g_array, deg, domain=[0.0, PI])
        c = np.abs(cheb.coef)
        if np.max(c[-4:]) <= coef_tol * max(np.max(c), 1.0):
            return cheb.integ(lbnd=PI), True
        prev = cheb
    return prev.integ(lbnd=PI), False


def build_potential(spec: PotentialSpec, n_grid: int = 2048,
                    tol_root: float = 1e-12) -> Potential:
    """Build ``(g, G)`` from expression text and check the admissibility conditions."""
    try:
        g_expr = parse(spec.g_text)
        g_scalar = g_expr.compile(spec.params)
        g_vec = g_expr.compile(spec.params, vectorized=True)
    except ExprError as exc:
        raise PotentialError(f"bad g expression: {exc}") from exc
    extra_msgs = []

    def g_inner(x):
        return g_scalar(x)

    def g_array_inner(x):
        return g_vec(x)

    if spec.G_text is not None:
        try:
            G_expr = parse(spec.G_text)
            G_vec_raw = G_expr.compile(spec.params, vectorized=True)
            G_at_pi = float(G_expr.compile(spec.params)(PI))
        except ExprError as exc:
            raise PotentialError(f"bad G expression: {exc}") from exc

        def G_array(x):
            return np.asarray(G_vec_raw(x), dtype=float) - G_at_pi
    else:
        try:
            G_cheb, converged = _chebyshev_primitive(g_vec)
        except DomainError as exc:
            raise PotentialError(f"g is not evaluable on [0, pi]: {exc}") from exc
        if not converged:
            extra_msgs.append("Chebyshev expansion of g did not converge; G is approximate")

        def G_array(x):
            return G_cheb(x)

    p = Potential(g=g_inner, g_array=g_array_inner, G_array=G_array, xi=math.nan,
                  gprime_0=math.nan, gprime_pi=math.nan, report=None,
                  label=spec.g_text, spec=spec)

    def g_for_diff(x):
        # prefer the raw expression beyond the interval, else the reflection
        try:
            v = g_scalar(x)
            if math.isfinite(v):
                return v
        except (DomainError, ValueError):
            pass
        return p.g(x)

    gprime_0 = _central_diff(g_for_diff, 0.0)
    gprime_pi = _central_diff(g_for_diff, PI)
    try:
        integral_g, _ = integrate.quad(g_scalar, 0.0, PI, epsabs=1e-13, epsrel=1e-13,
                                       limit=200)
    except DomainError as exc:
        raise PotentialError(f"g is not evaluable on [0, pi]: {exc}") from exc
    report = check_conditions(g_scalar, g_vec, integral_g, gprime_pi, n_grid, tol_root)
    if extra_msgs:
        report = ConditionReport(report.ok, report.xi, report.zeros_found,
                                 report.sign_violations, report.integral_g,
                                 report.gprime_pi, report.messages + tuple(extra_msgs))
    p.xi = report.xi
    p.gprime_0 = gprime_0
    p.gprime_pi = gprime_pi
    p.report = report
    ll = _match_landau_lifshitz(spec, g_vec)
    if ll is not None:
        p.ll_params = ll
    return p


def _match_landau_lifshitz(spec: PotentialSpec, g_vec) -> tuple[float, float] | None:
    lam = spec.params.get("lambda")
    om = spec.params.get("omega")
    if lam is None or om is None:
        return None
    x = np.linspace(-1.0, 4.0, 97)
    try:
        with np.errstate(all="ignore"):
            mine = np.asarray(g_vec(x), dtype=float) * np.ones_like(x)
    except ExprError:
        return None
    ref = (om + lam * np.cos(x)) * np.sin(x)
    if np.all(np.isfinite(mine)) and np.max(np.abs(mine - ref)) <= 1e-13 * (1 + abs(lam) + abs(om)):
        return float(lam), float(om)
    return None


def landau_lifshitz(lam: float, omega: float, n_grid: int = 2048,
                    tol_root: float = 1e-12) -> Potential:
    """``g(x) = (omega + lambda cos x) sin x`` with all closed forms registered.

    ``G(x) = lambda/2 sin^2 x - omega (1 + cos x)``, ``g'(0) = lambda + omega``,
    ``g'(pi) = lambda - omega``, ``xi = arccos(-omega/lambda)``.
    """
    if not lam > 0.0:
        raise PotentialError("lambda must be positive")
    lam = float(lam)
    omega = float(omega)

    def g(x):
        return (omega + lam * math.cos(x)) * math.sin(x)

    def g_array(x):
        return (omega + lam * np.cos(x)) * np.sin(x)

    def G_array(x):
        return 0.5 * lam * np.sin(x) ** 2 - omega * (1.0 + np.cos(x))

    def G_from_pi(y):
        return 0.5 * lam * np.sin(y) ** 2 - 2.0 * omega * np.sin(0.5 * y) ** 2

    report = check_conditions(g, g_array, 2.0 * omega, lam - omega, n_grid, tol_root)
    xi = report.xi
    if report.ok:
        xi = math.acos(-omega / lam)
        report = ConditionReport(report.ok, xi, (xi,), report.sign_violations,
                                 report.integral_g, report.gprime_pi, report.messages)
    spec = PotentialSpec("(omega + lambda*cos(x))*sin(x)", {"lambda": lam, "omega": omega})
    return Potential(g=g, g_array=g_array, G_array=G_array, xi=xi,
                     gprime_0=lam + omega, gprime_pi=lam - omega, report=report,
                     label=f"landau_lifshitz(lambda={lam!r}, omega={omega!r})",
                     spec=spec, ll_params=(lam, omega), G_from_pi=G_from_pi,
                     closed_form=True)


def zero_potential() -> Potential:
    """``g = 0``: the pure harmonic-map equation.  Fails condition (i) by design."""
    def zero(x):
        return 0.0

    def zeros(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    report = ConditionReport(False, math.nan, (), (), 0.0, 0.0,
                             ("g vanishes identically",))
    return Potential(g=zero, g_array=zeros, G_array=zeros, xi=math.nan,
                     gprime_0=0.0, gprime_pi=0.0, report=report, label="zero",
                     spec=PotentialSpec("0*x", {}), G_from_pi=zeros, closed_form=True)
