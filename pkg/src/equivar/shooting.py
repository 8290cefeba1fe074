"""Shooting on the parameter ``a`` in ``h ~ a r^m``.

A shot is *type I* when h increases monotonically and reaches pi at a finite
radius, and an *undershoot* when h' vanishes first.  Small ``a`` gives type I,
and so does every ``a`` when the existence criterion is nonpositive;
otherwise large ``a`` undershoots, and the connecting orbit sits at
``a* = sup{type I}``, located here by bracketing and bisection.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import analysis
from .integrate import EventKind, Trajectory, default_rmax, integrate
from .potential import Potential
from .series import (LocalSeriesSolution, c1_bound, fixed_point_solve,
                     handoff_delta)

__all__ = [
    "ShootingOptions",
    "OutcomeKind",
    "Outcome",
    "BvpSolution",
    "NoSolution",
    "BracketError",
    "ClassificationError",
    "shoot",
    "classify",
    "find_bvp_solution",
    "slope_threshold_at",
    "half_line_shot",
    "harmonic_blowup_distance",
]


@dataclass(frozen=True)
class ShootingOptions:
    r_max: float | None = None
    step_tol: float = 1e-10
    abs_tol: float = 1e-12
    event_tol: float = 1e-10
    series_tol: float = 1e-12
    series_max_iter: int = 200
    asym_tol: float = 1e-4
    bisection_tol: float = 1e-10
    a_seed: float = 1.0
    expansion_factor: float = 2.0
    expansion_budget: int = 60
    sweep_points: int = 16
    allow_unvalidated: bool = False

    def resolved_rmax(self, p: Potential) -> float:
        return self.r_max if self.r_max is not None else default_rmax(p)

    def to_json(self) -> dict:
        return asdict(self)


class OutcomeKind(str, Enum):
    TYPE_I = "type_i"
    UNDERSHOOT = "undershoot"
    ASYMPTOTIC = "asymptotic"
    INDETERMINATE = "indeterminate"


@dataclass
class Outcome:
    kind: OutcomeKind
    a: float
    m: int
    detail: dict
    trajectory: Trajectory | None = field(default=None, repr=False)
    series: LocalSeriesSolution | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "a": self.a, "m": self.m, "detail": self.detail}


@dataclass
class NoSolution:
    reason: str
    criterion: analysis.CriterionValue

    def to_json(self) -> dict:
        return {"reason": self.reason, "criterion": self.criterion.to_json()}


@dataclass
class BvpSolution:
    m: int
    a_star: float
    bracket: tuple[float, float]
    trajectory: Trajectory
    criterion: analysis.CriterionValue
    diagnostics: dict
    shots: int
    series: LocalSeriesSolution | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "a_star": self.a_star,
            "bracket": list(self.bracket),
            "criterion": self.criterion.to_json(),
            "shots": self.shots,
            "trajectory": {
                "samples": len(self.trajectory),
                "r_first": float(self.trajectory.r[0]),
                "r_last": float(self.trajectory.r[-1]),
                "h_last": float(self.trajectory.h[-1]),
            },
            "diagnostics": self.diagnostics,
        }


class BracketError(RuntimeError):
    pass


class ClassificationError(RuntimeError):
    pass


_C1_CACHE: "weakref.WeakKeyDictionary[Potential, float]" = weakref.WeakKeyDictionary()


def _c1(p: Potential) -> float:
    v = _C1_CACHE.get(p)
    if v is None:
        v = c1_bound(p)
        _C1_CACHE[p] = v
    return v


def _check_potential(p: Potential, opts: ShootingOptions) -> None:
    if not (p.report.ok or opts.allow_unvalidated):
        raise ValueError(f"potential {p.label} fails the structural conditions: "
                         + "; ".join(p.report.messages))


# --------------------------------------------------------------------------
# single shots

def shoot(p: Potential, m: int, a: float, opts: ShootingOptions = ShootingOptions(),
          r_max: float | None = None) -> tuple[LocalSeriesSolution, Trajectory]:
    """Series start at the hand-off radius followed by outward integration."""
    C1 = _c1(p)
    delta = handoff_delta(p, m, a, C1)
    ls = fixed_point_solve(p, m, a, delta, tol=opts.series_tol,
                           max_iter=opts.series_max_iter, C1=C1)
    rm = r_max if r_max is not None else opts.resolved_rmax(p)
    tr = integrate(p, m, (ls.h_delta, ls.hprime_delta, ls.delta), rm,
                   event_tol=opts.event_tol, step_tol=opts.step_tol,
                   abs_tol=opts.abs_tol)
    tr.meta["a"] = a
    return ls, tr


def _outcome_from(tr: Trajectory, ls, m: int, a: float, opts: ShootingOptions) -> Outcome:
    ev = tr.termination
    kind = ev.kind
    if kind == EventKind.REACHED_PI:
        # type I needs h' > 0 all the way; SlopeZero would have fired otherwise
        if not np.all(tr.hprime > 0.0):
            raise ClassificationError("pi reached with a non-positive slope sample")
        return Outcome(OutcomeKind.TYPE_I, a, m, {"r_a": ev.r_event, "hprime_at_pi": ev.hprime},
                       tr, ls)
    if kind == EventKind.SLOPE_ZERO:
        return Outcome(OutcomeKind.UNDERSHOOT, a, m,
                       {"r_stall": ev.r_event, "h_stall": ev.h}, tr, ls)
    if kind == EventKind.REACHED_RMAX:
        gap = math.pi - ev.h
        sel = tr.r >= tr.r[-1] / 10.0
        rhp = tr.r[sel] * tr.hprime[sel]
        decreasing = bool(len(rhp) >= 2 and np.all(np.diff(rhp) <= 0.0))
        detail = {"r_max": ev.r_event, "pi_minus_h": gap, "r_hprime_decreasing": decreasing,
                  "r_hprime_last": float(ev.r_event * ev.hprime)}
        if 0.0 <= gap < opts.asym_tol and decreasing:
            return Outcome(OutcomeKind.ASYMPTOTIC, a, m, detail, tr, ls)
        return Outcome(OutcomeKind.INDETERMINATE, a, m, detail, tr, ls)
    return Outcome(OutcomeKind.INDETERMINATE, a, m,
                   {"event": kind.value, "r_event": ev.r_event, "h": ev.h}, tr, ls)


def classify(p: Potential, m: int, a: float, opts: ShootingOptions = ShootingOptions(),
             r_max: float | None = None) -> Outcome:
    _check_potential(p, opts)
    if not a > 0.0:
        raise ValueError("a must be positive")
    ls, tr = shoot(p, m, a, opts, r_max)
    return _outcome_from(tr, ls, m, a, opts)


# --------------------------------------------------------------------------
# the boundary value problem

def _bisect(p, m, lo: Outcome, hi: Outcome, opts, log):
    while hi.a - lo.a > opts.bisection_tol * max(1.0, 0.5 * (lo.a + hi.a)):
        mid = 0.5 * (lo.a + hi.a)
        if not lo.a < mid < hi.a:
            break
        o = classify(p, m, mid, opts)
        log.append(o.kind)
        if o.kind == OutcomeKind.TYPE_I:
            lo = o
        elif o.kind == OutcomeKind.UNDERSHOOT:
            hi = o
        else:
            # the shot stayed close to pi all the way to r_max: we hit a* to
            # within what r_max can resolve
            return lo, hi, o
    return lo, hi, None


def _bracket(p, m, opts, log):
    a = opts.a_seed
    o = classify(p, m, a, opts)
    log.append(o.kind)
    f = opts.expansion_factor
    if o.kind == OutcomeKind.TYPE_I:
        lo = o
        for _ in range(opts.expansion_budget):
            a *= f
            o = classify(p, m, a, opts)
            log.append(o.kind)
            if o.kind == OutcomeKind.UNDERSHOOT:
                return lo, o
            if o.kind == OutcomeKind.TYPE_I:
                lo = o
            else:
                raise BracketError(f"{o.kind.value} shot at a={a!r} while expanding")
        raise BracketError(f"no undershoot found up to a={a!r}")
    if o.kind == OutcomeKind.UNDERSHOOT:
        hi = o
        for _ in range(opts.expansion_budget):
            a /= f
            o = classify(p, m, a, opts)
            log.append(o.kind)
            if o.kind == OutcomeKind.TYPE_I:
                return o, hi
            if o.kind == OutcomeKind.UNDERSHOOT:
                hi = o
            else:
                raise BracketError(f"{o.kind.value} shot at a={a!r} while shrinking")
        raise BracketError(f"no type I shot found down to a={a!r}")
    raise BracketError(f"seed shot a={a!r} is {o.kind.value}")


def _on_grid(tr: Trajectory, r: np.ndarray) -> np.ndarray:
    out = np.interp(r, tr.r, tr.h)
    out[r > tr.r[-1]] = np.nan
    return out


def _trusted_radius(mid: Trajectory, lo: Trajectory, hi: Trajectory) -> float:
    """First radius where the bracketing shots separate by 1% of ``pi - h``."""
    r = mid.r
    hl, hh = _on_grid(lo, r), _on_grid(hi, r)
    gap = np.abs(hh - hl)
    bad = ~(gap <= 0.01 * (math.pi - mid.h))
    bad |= ~(mid.h < math.pi) | ~(mid.hprime > 0.0)
    idx = np.nonzero(bad[1:])[0]
    if len(idx) == 0:
        return float(r[-1])
    return float(r[idx[0]])


CROSSING_NOISE = 1e-7


def _crossings_in_band(a: Trajectory, b: Trajectory, xi: float,
                       noise: float = CROSSING_NOISE) -> int:
    """Sign changes of ``h_b - h_a`` on the union of samples where both lie in [xi, pi].

    Both paths are evaluated by cubic Hermite interpolation from their own
    samples; differences below *noise* are interpolation error, not crossings.
    """
    lo, hi = max(a.r[0], b.r[0]), min(a.r[-1], b.r[-1])
    if not hi > lo:
        return 0
    r = np.union1d(a.r, b.r)
    r = r[(r >= lo) & (r <= hi)]
    ha = CubicHermiteSpline(a.r, a.h, a.hprime)(r)
    hb = CubicHermiteSpline(b.r, b.h, b.hprime)(r)
    band = (ha >= xi) & (hb >= xi) & (ha <= math.pi) & (hb <= math.pi)
    d = (hb - ha)[band]
    d = d[np.abs(d) > noise]
    if len(d) < 2:
        return 0
    return int(np.count_nonzero(np.diff(np.sign(d)) != 0))


def find_bvp_solution(p: Potential, m: int,
                      opts: ShootingOptions = ShootingOptions()) -> BvpSolution | NoSolution:
    """Locate ``a* = sup{a : shot is type I}`` and return its trusted trajectory."""
    _check_potential(p, opts)
    crit = analysis.existence_criterion(p, m)
    if not crit.positive():
        return NoSolution("criterion nonpositive: all shots are type (I)", crit)

    log: list[OutcomeKind] = []
    lo, hi = _bracket(p, m, opts, log)
    lo, hi, hit = _bisect(p, m, lo, hi, opts, log)
    a_star = hit.a if hit is not None else 0.5 * (lo.a + hi.a)

    # classification monotonicity across (0, 2 a*)
    sweep = []
    violations = []
    n = opts.sweep_points
    below = above = None
    for k in range(1, n + 1):
        a = a_star * (k - 0.5) / (n / 2)
        o = classify(p, m, a, opts)
        if a < a_star:
            below = o
        elif above is None:
            above = o
        expect = OutcomeKind.TYPE_I if a < a_star else OutcomeKind.UNDERSHOOT
        sweep.append({"a": a, "kind": o.kind.value})
        if o.kind != expect:
            violations.append(a)

    if hit is not None:
        mid_ls, mid_tr = hit.series, hit.trajectory
    else:
        mid_ls, mid_tr = shoot(p, m, a_star, opts)
    r_trust = _trusted_radius(mid_tr, lo.trajectory, hi.trajectory)
    sol_tr = mid_tr.truncated(r_trust)
    sol_tr.meta["a"] = a_star

    # independent re-run with a doubled window; it must stay monotone on the trusted range
    rm = opts.resolved_rmax(p)
    _, rerun = shoot(p, m, a_star, opts, r_max=2.0 * rm)
    upto = rerun.r <= r_trust
    rerun_monotone = bool(np.all(rerun.hprime[upto] > 0.0)
                          and np.all((rerun.h[upto] > 0.0) & (rerun.h[upto] < math.pi)))
    rerun_dev = float(np.max(np.abs(np.interp(sol_tr.r, rerun.r, rerun.h) - sol_tr.h)))

    poh, _ = analysis.pohozaev_residual(sol_tr, p, m)
    try:
        fit = analysis.tail_fit(sol_tr, p)
        tail = {"tail_rate": fit.rate, "tail_r_squared": fit.r_squared,
                "tail_fit_range": [fit.r_from, fit.r_to]}
    except ValueError as exc:
        tail = {"tail_rate": None, "tail_r_squared": None, "tail_fit_range": None,
                "tail_fit_error": str(exc)}
    monotone = bool(np.all(sol_tr.hprime > 0.0))
    inside = bool(np.all((sol_tr.h > 0.0) & (sol_tr.h < math.pi)))
    diagnostics = {
        "criterion": crit.to_json(),
        "pohozaev_max_rel": poh,
        **tail,
        "tail_rate_expected": analysis.expected_tail_rate(p),
        "tail_rate_linearised": analysis.linearised_tail_rate(p),
        "r_trust": r_trust,
        "monotone": monotone,
        "inside_band": inside,
        "rerun_r_max": 2.0 * rm,
        "rerun_termination": rerun.termination.kind.value,
        "rerun_r_event": rerun.termination.r_event,
        "rerun_monotone_on_trusted_range": rerun_monotone,
        "rerun_max_deviation": rerun_dev,
        "bracket_crossings_in_band": _crossings_in_band(lo.trajectory, hi.trajectory, p.xi),
        "neighbour_crossings_in_band": (
            _crossings_in_band(below.trajectory, above.trajectory, p.xi)
            if below is not None and above is not None else None),
        "sweep": sweep,
        "sweep_violations": violations,
        "bisection_hit": hit is not None,
    }
    return BvpSolution(m=m, a_star=a_star, bracket=(lo.a, hi.a), trajectory=sol_tr,
                       criterion=crit, diagnostics=diagnostics, shots=len(log) + n + 1,
                       series=mid_ls)


# --------------------------------------------------------------------------
# the half-line problem from h(s) = xi

def half_line_shot(p: Potential, m: int, s: float, slope: float,
                   opts: ShootingOptions = ShootingOptions()) -> Trajectory:
    rm = s + opts.resolved_rmax(p)
    return integrate(p, m, (p.xi, slope, s), rm, event_tol=opts.event_tol,
                     step_tol=opts.step_tol, abs_tol=opts.abs_tol)


def _arrives(p, m, s, slope, opts) -> bool:
    ev = half_line_shot(p, m, s, slope, opts).termination
    if ev.kind == EventKind.REACHED_PI:
        return True
    if ev.kind in (EventKind.SLOPE_ZERO, EventKind.EXITED_BELOW):
        return False
    raise ClassificationError(f"half-line shot with slope {slope!r} reached r_max undecided")


def slope_threshold_at(p: Potential, m: int, s: float,
                       opts: ShootingOptions = ShootingOptions()) -> float:
    """Boundary of the slopes at ``h(s) = xi`` that reach pi at a finite radius.

    The bracket starts from the first-integral lower bound
    ``(s theta)^2 >= m^2 sin^2 xi + 2 G(xi) s^2``.
    """
    _check_potential(p, opts)
    if not s > 0.0:
        raise ValueError("s must be positive")
    xi = p.xi
    Gxi = float(p.G_ext(xi))
    lo = math.sqrt(max(m * m * math.sin(xi) ** 2 + 2.0 * Gxi * s * s, 0.0)) / s
    if lo <= 0.0:
        lo = 1e-3
    n = 0
    while _arrives(p, m, s, lo, opts):
        lo *= 0.5
        n += 1
        if n > 60:
            raise BracketError("every tested slope reaches pi")
    hi = 2.0 * lo
    n = 0
    while not _arrives(p, m, s, hi, opts):
        lo = hi
        hi *= 2.0
        n += 1
        if n > 60:
            raise BracketError("no slope reaching pi found")
    while hi - lo > opts.bisection_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if _arrives(p, m, s, mid, opts):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# large-a behaviour

def harmonic_blowup_distance(p: Potential, m: int, a: float,
                             opts: ShootingOptions = ShootingOptions(),
                             window: float = 3.0) -> float:
    """``sup |h_a(r) - 2 arctan((lam r)^m)|`` over ``lam r <= window``, ``lam = (a/2)^(1/m)``."""
    lam = (0.5 * a) ** (1.0 / m)
    ls, tr = shoot(p, m, a, opts)
    r_end = window / lam
    r_in = ls.grid[1:]
    h_in = ls.a * r_in ** m + r_in ** (m + 2) * ls.phi[1:]
    sel = tr.r <= r_end
    r = np.concatenate([r_in, tr.r[sel]])
    h = np.concatenate([h_in, tr.h[sel]])
    keep = r <= r_end
    if tr.r[-1] < r_end:
        raise ClassificationError(
            f"trajectory ended at r={tr.r[-1]:.6g} before the window edge {r_end:.6g}")
    return float(np.max(np.abs(h[keep] - analysis.harmonic_profile(m, lam, r[keep]))))
