"""Outward integration of the profile equation from the series hand-off radius.

    h'' = -h'/r + (m^2/r^2) sin h cos h + g(h)

Dormand-Prince 5(4) with its 4th-order continuous extension.  Three events
are watched on the dense output and bisected to ``event_tol`` in ``r``:

* ``reached_pi``   -- h crosses pi upward,
* ``slope_zero``   -- h' falls to zero,
* ``exited_below`` -- h drops below ``-EXIT_MARGIN``.

The integrator is written for a two-component state with plain floats; a
generic vector code path costs several times more per step and shooting calls
it thousands of times.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .potential import Potential

__all__ = [
    "EventKind",
    "TerminationEvent",
    "Trajectory",
    "IntegrationError",
    "rhs",
    "integrate",
    "default_rmax",
    "write_trajectory_csv",
]

EXIT_MARGIN = 1e-6
MAX_STEPS = 2_000_000

# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                          22 / 525, -1 / 40)
# dense output
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423


class EventKind(str, Enum):
    REACHED_PI = "reached_pi"
    SLOPE_ZERO = "slope_zero"
    EXITED_BELOW = "exited_below"
    REACHED_RMAX = "reached_rmax"


@dataclass(frozen=True)
class TerminationEvent:
    kind: EventKind
    r_event: float
    h: float
    hprime: float

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "r_event": self.r_event,
                "h": self.h, "hprime": self.hprime}


@dataclass
class Trajectory:
    r: np.ndarray
    h: np.ndarray
    hprime: np.ndarray
    termination: TerminationEvent
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.r)

    def truncated(self, r_end: float) -> "Trajectory":
        """Samples with ``r <= r_end``; the termination is relabelled ``reached_rmax``."""
        k = int(np.searchsorted(self.r, r_end, side="right"))
        k = max(k, 2)
        ev = TerminationEvent(EventKind.REACHED_RMAX, float(self.r[k - 1]),
                              float(self.h[k - 1]), float(self.hprime[k - 1]))
        return Trajectory(self.r[:k].copy(), self.h[:k].copy(), self.hprime[:k].copy(),
                          ev, dict(self.meta, truncated_at=float(self.r[k - 1])))


class IntegrationError(RuntimeError):
    def __init__(self, message: str, r: float, h: float, hprime: float):
        self.r, self.h, self.hprime = r, h, hprime
        super().__init__(f"{message} (r={r:.17g}, h={h:.17g}, h'={hprime:.17g})")


def rhs(p: Potential, m: int, r: float, h: float, hprime: float) -> tuple[float, float]:
    return hprime, -hprime / r + m * m / (r * r) * math.sin(h) * math.cos(h) + p.g(h)


def default_rmax(p: Potential) -> float:
    gp = p.gprime_pi
    if not gp > 0.0:
        # no exponential tail; pi - h decays like r^-m, so go far out
        return 1e5
    return 100.0 * max(1.0, 1.0 / math.sqrt(0.5 * gp))


def _dense(theta, y0, rc2, rc3, rc4, rc5):
    return y0 + theta * (rc2 + (1.0 - theta) * (rc3 + theta * (rc4 + (1.0 - theta) * rc5)))


def integrate(p: Potential, m: int, state0: tuple[float, float, float], r_max: float,
              event_tol: float = 1e-10, step_tol: float = 1e-10,
              abs_tol: float = 1e-12, first_step: float | None = None,
              watch_below: bool = True) -> Trajectory:
    """Integrate from ``state0 = (h, h', r0)`` until the first event or ``r_max``."""
    h, hp, r = (float(v) for v in state0)
    if not r > 0.0:
        raise ValueError("r0 must be positive")
    if not r_max > r:
        raise ValueError("r_max must exceed r0")
    if not (math.isfinite(h) and math.isfinite(hp)):
        raise IntegrationError("non-finite initial state", r, h, hp)

    g = p.g
    sin, cos, sqrt = math.sin, math.cos, math.sqrt
    m2 = float(m * m)
    rtol, atol = step_tol, abs_tol
    pi = math.pi

    def f(rr, y, yp):
        return -yp / rr + m2 / (rr * rr) * sin(y) * cos(y) + g(y)

    rs, hs, hps = [r], [h], [hp]
    dt = first_step if first_step is not None else 1e-2 * r
    dt = min(dt, r_max - r)
    k1h, k1p = hp, f(r, h, hp)
    event = None
    n = 0
    while True:
        n += 1
        if n > MAX_STEPS:
            raise IntegrationError("step budget exhausted", r, h, hp)
        if dt < 1e-14 * max(1.0, r):
            raise IntegrationError("step size underflow", r, h, hp)
        # stages
        y2, p2 = h + dt * A21 * k1h, hp + dt * A21 * k1p
        k2h, k2p = p2, f(r + C2 * dt, y2, p2)
        y3 = h + dt * (A31 * k1h + A32 * k2h)
        p3 = hp + dt * (A31 * k1p + A32 * k2p)
        k3h, k3p = p3, f(r + C3 * dt, y3, p3)
        y4 = h + dt * (A41 * k1h + A42 * k2h + A43 * k3h)
        p4 = hp + dt * (A41 * k1p + A42 * k2p + A43 * k3p)
        k4h, k4p = p4, f(r + C4 * dt, y4, p4)
        y5 = h + dt * (A51 * k1h + A52 * k2h + A53 * k3h + A54 * k4h)
        p5 = hp + dt * (A51 * k1p + A52 * k2p + A53 * k3p + A54 * k4p)
        k5h, k5p = p5, f(r + C5 * dt, y5, p5)
        y6 = h + dt * (A61 * k1h + A62 * k2h + A63 * k3h + A64 * k4h + A65 * k5h)
        p6 = hp + dt * (A61 * k1p + A62 * k2p + A63 * k3p + A64 * k4p + A65 * k5p)
        k6h, k6p = p6, f(r + dt, y6, p6)
        hn = h + dt * (B1 * k1h + B3 * k3h + B4 * k4h + B5 * k5h + B6 * k6h)
        pn = hp + dt * (B1 * k1p + B3 * k3p + B4 * k4p + B5 * k5p + B6 * k6p)
        rn = r + dt
        k7h, k7p = pn, f(rn, hn, pn)
        eh = dt * (E1 * k1h + E3 * k3h + E4 * k4h + E5 * k5h + E6 * k6h + E7 * k7h)
        ep = dt * (E1 * k1p + E3 * k3p + E4 * k4p + E5 * k5p + E6 * k6p + E7 * k7p)
        sh = atol + rtol * max(abs(h), abs(hn))
        sp = atol + rtol * max(abs(hp), abs(pn))
        err = sqrt(0.5 * ((eh / sh) ** 2 + (ep / sp) ** 2))
        if not math.isfinite(err):
            if not (math.isfinite(hn) and math.isfinite(pn)):
                dt *= 0.2
                continue
        if err > 1.0:
            dt *= max(0.2, 0.9 * err ** -0.2)
            continue

        # accepted; look for events in (r, rn]
        fired = []
        if h < pi <= hn:
            fired.append(EventKind.REACHED_PI)
        if hp > 0.0 >= pn:
            fired.append(EventKind.SLOPE_ZERO)
        if watch_below and h > -EXIT_MARGIN >= hn:
            fired.append(EventKind.EXITED_BELOW)
        if fired:
            rc2h, rc2p = hn - h, pn - hp
            rc3h, rc3p = dt * k1h - rc2h, dt * k1p - rc2p
            rc4h, rc4p = rc2h - dt * k7h - rc3h, rc2p - dt * k7p - rc3p
            rc5h = dt * (D1 * k1h + D3 * k3h + D4 * k4h + D5 * k5h + D6 * k6h + D7 * k7h)
            rc5p = dt * (D1 * k1p + D3 * k3p + D4 * k4p + D5 * k5p + D6 * k6p + D7 * k7p)

            def dense(theta):
                return (_dense(theta, h, rc2h, rc3h, rc4h, rc5h),
                        _dense(theta, hp, rc2p, rc3p, rc4p, rc5p))

            best = None
            for kind in fired:
                th = _locate(kind, dense, dt, event_tol)
                if best is None or th < best[1] or (
                        th == best[1] and kind == EventKind.SLOPE_ZERO):
                    best = (kind, th)
            kind, th = best
            he, pe = dense(th)
            re = r + th * dt
            if th >= 1.0:
                re, he, pe = rn, hn, pn
            if re > rs[-1]:
                rs.append(re)
                hs.append(he)
                hps.append(pe)
            event = TerminationEvent(kind, re, he, pe)
            break

        r, h, hp = rn, hn, pn
        k1h, k1p = k7h, k7p
        rs.append(r)
        hs.append(h)
        hps.append(hp)
        if r >= r_max:
            event = TerminationEvent(EventKind.REACHED_RMAX, r, h, hp)
            break
        fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        dt = min(dt * fac, r_max - r)
        if r_max - (r + dt) < 1e-12 * r_max:
            dt = r_max - r

    meta = {"m": m, "potential": p.label, "step_tol": step_tol, "abs_tol": abs_tol,
            "event_tol": event_tol, "r_max": r_max}
    return Trajectory(np.asarray(rs), np.asarray(hs), np.asarray(hps), event, meta)


def _locate(kind: EventKind, dense, dt: float, event_tol: float) -> float:
    """Bisect the dense output for the first sign change; returns theta in (0, 1]."""
    if kind == EventKind.REACHED_PI:
        def fired(th):
            return dense(th)[0] >= math.pi
    elif kind == EventKind.SLOPE_ZERO:
        def fired(th):
            return dense(th)[1] <= 0.0
    else:
        def fired(th):
            return dense(th)[0] <= -EXIT_MARGIN
    lo, hi = 0.0, 1.0
    # a coarse scan guards against a second crossing inside the step
    for k in range(1, 8):
        th = k / 8.0
        if fired(th):
            hi = th
            break
        lo = th
    tol = event_tol / dt
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fired(mid):
            hi = mid
        else:
            lo = mid
    return hi


def write_trajectory_csv(t: Trajectory, path_or_buf) -> None:
    """Write ``r,h,hprime`` with 17 significant digits."""
    lines = ["r,h,hprime"]
    for r, h, hp in zip(t.r, t.h, t.hprime):
        lines.append(f"{r:.17g},{h:.17g},{hp:.17g}")
    text = "\n".join(lines) + "\n"
    if isinstance(path_or_buf, io.TextIOBase) or hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", newline="") as fh:
            fh.write(text)
