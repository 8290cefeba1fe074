"""Command-line front end.

    equivar validate SPEC
    equivar criterion SPEC --m M
    equivar solve SPEC --m M [--rmax R] [--tol T] [--out-profile CSV] [--out-report JSON]
    equivar classify SPEC --m M --a A
    equivar sweep TEMPLATE --param NAME --from X --to Y --steps N --m M [--out-csv CSV]
    equivar variational SPEC --m M --s S [--R R] [--n N]

Exit codes: 0 success, 2 no solution, 3 potential fails the conditions,
4 bad input (arguments, files, JSON, expressions), 5 solver failure.
Reports are JSON with a fixed key order and floats printed to 17
significant digits, so identical inputs give byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, analysis
from .expr import ExprError
from .integrate import IntegrationError, write_trajectory_csv
from .potential import (Potential, PotentialError, PotentialSpec, build_potential,
                        landau_lifshitz)
from .series import SeriesError
from .shooting import (BracketError, ClassificationError, NoSolution,
                       ShootingOptions, classify, find_bvp_solution,
                       slope_threshold_at)
from .variational import (VariationalError, default_R, euler_lagrange_residual,
                          initial_slope, minimize_Js, pohozaev_slope_squared,
                          write_profile_csv)

EXIT_OK = 0
EXIT_NO_SOLUTION = 2
EXIT_CONDITIONS = 3
EXIT_INPUT = 4
EXIT_SOLVER = 5

SOLVER_ERRORS = (BracketError, ClassificationError, IntegrationError, SeriesError,
                 VariationalError, FloatingPointError)


class InputError(Exception):
    pass


# --------------------------------------------------------------------------
# deterministic JSON

def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = format(x, ".17g")
    if text.lstrip("-").isdigit():
        text += ".0"
    return text


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits and NaN/inf as null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{dumps(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "value") and isinstance(obj.value, str):  # enums
        return json.dumps(obj.value)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# --------------------------------------------------------------------------
# helpers

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_INPUT)


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON: {exc}") from exc


def _spec_from(obj) -> PotentialSpec:
    try:
        return PotentialSpec.from_json(obj)
    except PotentialError as exc:
        raise InputError(str(exc)) from exc


def load_potential(spec: PotentialSpec) -> Potential:
    """Build the potential; the Landau-Lifshitz template gets its closed forms."""
    try:
        p = build_potential(spec)
    except (PotentialError, ExprError) as exc:
        raise InputError(str(exc)) from exc
    if p.ll_params is not None and spec.G_text is None and p.ll_params[0] > 0.0:
        lam, om = p.ll_params
        p = landau_lifshitz(lam, om)
    return p


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not (v > 0.0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a positive finite number")
    return v


def _finite_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError("must be finite")
    return v


def _report(command: str, spec: PotentialSpec | None, inputs: dict, result: dict,
            started: float | None) -> dict:
    out = {
        "command": command,
        "version": __version__,
        "spec": spec.to_json() if spec is not None else None,
        "spec_sha256": spec.digest() if spec is not None else None,
        "inputs": inputs,
        "result": result,
    }
    if started is not None:
        out["timing"] = {"seconds": time.perf_counter() - started}
    return out


def _emit(report: dict, out_report: str | None) -> None:
    text = dumps(report) + "\n"
    sys.stdout.write(text)
    if out_report:
        try:
            with open(out_report, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise InputError(f"cannot write {out_report}: {exc.strerror or exc}") from exc


def _options(args) -> ShootingOptions:
    kw = {}
    if getattr(args, "rmax", None) is not None:
        kw["r_max"] = args.rmax
    if getattr(args, "tol", None) is not None:
        kw["step_tol"] = args.tol
    return ShootingOptions(**kw)


def _options_json(opts: ShootingOptions, p: Potential) -> dict:
    d = opts.to_json()
    d["r_max"] = opts.resolved_rmax(p)
    return d


def _criterion_json(p: Potential, m: int) -> dict:
    c = analysis.existence_criterion(p, m)
    out = c.to_json()
    if p.ll_params is not None:
        cf = analysis.ll_criterion_closed_form(p.ll_params[0], p.ll_params[1], m)
        out["closed_form"] = True
        out["closed_form_value"] = cf.value if cf.kind == "finite" else None
    return out


# --------------------------------------------------------------------------
# commands

def cmd_validate(args) -> int:
    spec = _spec_from(_read_json(args.spec))
    p = load_potential(spec)
    result = p.report.to_json()
    result["gprime_0"] = p.gprime_0
    result["landau_lifshitz"] = p.ll_params is not None
    _emit(_report("validate", spec, {}, result, args.started), args.out_report)
    return EXIT_OK if p.report.ok else EXIT_CONDITIONS


def _require_ok(p: Potential, spec, command, inputs, args) -> int | None:
    if p.report.ok:
        return None
    _emit(_report(command, spec, inputs, {"error": "potential fails the conditions",
                                          "conditions": p.report.to_json()},
                  args.started), args.out_report)
    return EXIT_CONDITIONS


def cmd_criterion(args) -> int:
    spec = _spec_from(_read_json(args.spec))
    p = load_potential(spec)
    inputs = {"m": args.m}
    bad = _require_ok(p, spec, "criterion", inputs, args)
    if bad is not None:
        return bad
    _emit(_report("criterion", spec, inputs, _criterion_json(p, args.m), args.started),
          args.out_report)
    return EXIT_OK


def cmd_solve(args) -> int:
    spec = _spec_from(_read_json(args.spec))
    p = load_potential(spec)
    opts = _options(args)
    inputs = {"m": args.m, "options": _options_json(opts, p)}
    bad = _require_ok(p, spec, "solve", inputs, args)
    if bad is not None:
        return bad
    sol = find_bvp_solution(p, args.m, opts)
    if isinstance(sol, NoSolution):
        result = {"status": "no_solution", **sol.to_json()}
        _emit(_report("solve", spec, inputs, result, args.started), args.out_report)
        return EXIT_NO_SOLUTION
    result = {"status": "solved", **sol.to_json()}
    if args.out_profile:
        try:
            write_trajectory_csv(sol.trajectory, args.out_profile)
        except OSError as exc:
            raise InputError(f"cannot write {args.out_profile}: {exc.strerror or exc}") from exc
        result["profile"] = args.out_profile
    _emit(_report("solve", spec, inputs, result, args.started), args.out_report)
    return EXIT_OK


def cmd_classify(args) -> int:
    spec = _spec_from(_read_json(args.spec))
    p = load_potential(spec)
    opts = _options(args)
    inputs = {"m": args.m, "a": args.a, "options": _options_json(opts, p)}
    bad = _require_ok(p, spec, "classify", inputs, args)
    if bad is not None:
        return bad
    o = classify(p, args.m, args.a, opts)
    _emit(_report("classify", spec, inputs, o.to_json(), args.started), args.out_report)
    return EXIT_OK


def cmd_variational(args) -> int:
    spec = _spec_from(_read_json(args.spec))
    p = load_potential(spec)
    R = args.R if args.R is not None else None
    inputs = {"m": args.m, "s": args.s, "R": R, "n": args.n}
    bad = _require_ok(p, spec, "variational", inputs, args)
    if bad is not None:
        return bad
    if R is None:
        R = default_R(p, args.s)
        inputs["R"] = R
    if not R > args.s:
        raise InputError("R must exceed s")
    dp = minimize_Js(p, args.m, args.s, R, args.n)
    slope_var = initial_slope(dp)
    slope_shoot = slope_threshold_at(p, args.m, args.s)
    result = {
        "energy": dp.energy,
        "iterations": dp.iterations,
        "grad_norm": dp.grad_norm,
        "clamp_active": dp.clamp_active,
        "euler_lagrange_residual": euler_lagrange_residual(dp, p, args.m),
        "initial_slope": slope_var,
        "shooting_slope": slope_shoot,
        "slope_difference": abs(slope_var - slope_shoot),
        "pohozaev_slope_squared": pohozaev_slope_squared(dp, p, args.m),
        "slope_squared_times_s2": (args.s * slope_var) ** 2,
    }
    if args.out_profile:
        try:
            write_profile_csv(dp, args.out_profile)
        except OSError as exc:
            raise InputError(f"cannot write {args.out_profile}: {exc.strerror or exc}") from exc
        result["profile"] = args.out_profile
    _emit(_report("variational", spec, inputs, result, args.started), args.out_report)
    return EXIT_OK


# sweep ----------------------------------------------------------------

def _sweep_row(job):
    """One sweep row; runs in a worker process.  Returns a dict, never raises."""
    spec_obj, m, value = job
    row = {"param": value, "exists": "error", "criterion": None, "a_star": None,
           "pohozaev_max_rel": None, "error": None}
    try:
        spec = PotentialSpec.from_json(spec_obj)
        p = load_potential(spec)
        if not p.report.ok:
            row["error"] = "potential fails the conditions"
            return row
        crit = analysis.existence_criterion(p, m)
        row["criterion"] = crit.value
        sol = find_bvp_solution(p, m, ShootingOptions())
        if isinstance(sol, NoSolution):
            row["exists"] = "false"
        else:
            row["exists"] = "true"
            row["a_star"] = sol.a_star
            row["pohozaev_max_rel"] = sol.diagnostics["pohozaev_max_rel"]
    except Exception as exc:  # recorded in-row
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def sweep_rows(template: dict, param: str, values, m: int, workers: int) -> list[dict]:
    jobs = []
    for v in values:
        obj = json.loads(json.dumps(template))
        obj.setdefault("params", {})[param] = float(v)
        jobs.append((obj, m, float(v)))
    if workers <= 1 or len(jobs) <= 1:
        return [_sweep_row(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(_sweep_row, jobs))


def _sweep_csv(rows: list[dict]) -> str:
    lines = ["param,exists,criterion,a_star"]
    for r in rows:
        c = r["criterion"]
        if c is None:
            ctext = ""
        elif math.isinf(c):
            ctext = "inf" if c > 0 else "-inf"
        else:
            ctext = format(c, ".17g")
        a = "" if r["a_star"] is None else format(r["a_star"], ".17g")
        lines.append(f"{format(r['param'], '.17g')},{r['exists']},{ctext},{a}")
    return "\n".join(lines) + "\n"


def _worker_count(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("EQUIVAR_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InputError(f"EQUIVAR_THREADS must be an integer, got {env!r}")
        if n < 1:
            raise InputError("EQUIVAR_THREADS must be positive")
        return n
    return os.cpu_count() or 1


def cmd_sweep(args) -> int:
    template = _read_json(args.template)
    if not isinstance(template, dict) or not isinstance(template.get("params", {}), dict):
        raise InputError("template must be a potential spec object")
    params = template.get("params", {})
    holes = sorted(k for k, v in params.items()
                   if v is None or isinstance(v, str))
    if holes and holes != [args.param]:
        raise InputError(f"template placeholders {holes} do not match --param {args.param!r}")
    if not holes and args.param not in params:
        raise InputError(f"template has no parameter {args.param!r} to sweep")
    if args.steps < 1:
        raise InputError("--steps must be at least 1")
    # validate the template once with a concrete value so syntax errors exit 4
    probe = json.loads(json.dumps(template))
    probe.setdefault("params", {})[args.param] = float(getattr(args, "from"))
    _spec_from(probe)
    values = (np.linspace(getattr(args, "from"), args.to, args.steps)
              if args.steps > 1 else np.array([getattr(args, "from")]))
    workers = _worker_count(args)
    rows = sweep_rows(template, args.param, values, args.m, workers)
    csv_text = _sweep_csv(rows)
    if args.out_csv:
        try:
            with open(args.out_csv, "w", encoding="utf-8", newline="") as fh:
                fh.write(csv_text)
        except OSError as exc:
            raise InputError(f"cannot write {args.out_csv}: {exc.strerror or exc}") from exc
    inputs = {"param": args.param, "from": getattr(args, "from"), "to": args.to,
              "steps": args.steps, "m": args.m}
    spec_echo = None
    result = {"rows": rows}
    report = _report("sweep", spec_echo, inputs, result, args.started)
    report["template"] = template
    if args.out_report:
        _emit_file(report, args.out_report)
    if not args.out_csv:
        sys.stdout.write(csv_text)
    elif not args.out_report:
        sys.stdout.write(dumps(report) + "\n")
    failed = [r for r in rows if r["exists"] == "error"]
    for r in failed:
        sys.stderr.write(f"row {r['param']!r}: {r['error']}\n")
    return EXIT_SOLVER if failed else EXIT_OK


def _emit_file(report: dict, path: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(dumps(report) + "\n")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror or exc}") from exc


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="equivar",
                 description="Equivariant harmonic-map-with-potential profile solver.")
    ap.add_argument("--version", action="version", version=f"equivar {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, m=True):
        sp.add_argument("--out-report", metavar="JSON", help="also write the report here")
        sp.add_argument("--timing", action="store_true",
                        help="add wall-clock timing (makes output non-reproducible)")
        if m:
            sp.add_argument("--m", type=_positive_int, required=True,
                            help="equivariance degree (positive integer)")

    sp = sub.add_parser("validate", help="check the structural conditions on g")
    sp.add_argument("spec")
    common(sp, m=False)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("criterion", help="evaluate the existence criterion integral")
    sp.add_argument("spec")
    common(sp)
    sp.set_defaults(func=cmd_criterion)

    sp = sub.add_parser("solve", help="find the connecting orbit by shooting")
    sp.add_argument("spec")
    common(sp)
    sp.add_argument("--rmax", type=_positive_float)
    sp.add_argument("--tol", type=_positive_float, help="integrator step tolerance")
    sp.add_argument("--out-profile", metavar="CSV")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("classify", help="classify one shot")
    sp.add_argument("spec")
    common(sp)
    sp.add_argument("--a", type=_positive_float, required=True)
    sp.add_argument("--rmax", type=_positive_float)
    sp.add_argument("--tol", type=_positive_float)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("sweep", help="solve over a one-parameter family")
    sp.add_argument("template")
    common(sp)
    sp.add_argument("--param", required=True)
    sp.add_argument("--from", type=_finite_float, required=True)
    sp.add_argument("--to", type=_finite_float, required=True)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--workers", type=_positive_int)
    sp.add_argument("--out-csv", metavar="CSV")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("variational",
                        help="minimise the half-line energy and compare with shooting")
    sp.add_argument("spec")
    common(sp)
    sp.add_argument("--s", type=_positive_float, required=True)
    sp.add_argument("--R", type=_positive_float)
    sp.add_argument("--n", type=int, default=1024)
    sp.add_argument("--out-profile", metavar="CSV")
    sp.set_defaults(func=cmd_variational)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_INPUT
        return code
    args.started = time.perf_counter() if args.timing else None
    if getattr(args, "n", 1024) < 128:
        sys.stderr.write("equivar: error: --n must be at least 128\n")
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        sys.stderr.write(f"equivar: error: {exc}\n")
        return EXIT_INPUT
    except SOLVER_ERRORS as exc:
        sys.stderr.write(f"equivar: solver failure: {type(exc).__name__}: {exc}\n")
        return EXIT_SOLVER
    except ValueError as exc:
        sys.stderr.write(f"equivar: error: {exc}\n")
        return EXIT_INPUT
    except Exception as exc:  # the exit-code contract is total
        sys.stderr.write(f"equivar: internal failure: {type(exc).__name__}: {exc}\n")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
