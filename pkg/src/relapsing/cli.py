"""Command-line interface.

Exit codes: 0 success, 2 invalid input, 3 failed internal cross-check,
4 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .equilibria import dfe, endemic_equilibrium, endemic_equilibrium_scan
from .exceptions import (
    ConvergenceError,
    CrossCheckError,
    DegeneratePopulationError,
    InvalidParametersError,
    NegativityError,
)
from .io import load_model, load_state, load_sweep
from .model import Finding, ModelParams, StateVec, equal_death_rates, state_labels, validate
from .reproduction import build_next_gen, r0_closed_form, r0_spectral, r0_terms, with_r0
from .simulate import integrate, write_csv
from .stability import bifurcation_coefficients, classify_bifurcation, dfe_spectrum

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CROSSCHECK = 3
EXIT_CONVERGENCE = 4

R0_AGREEMENT = 1e-9  # relative, closed form vs power iteration

_DFE_INITIAL = re.compile(r"^dfe(?:\+(.+))?$")


def _plain(obj):
    """Convert numpy containers and scalars into JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _emit_json(obj, out) -> None:
    out.write(json.dumps(_plain(obj), indent=2) + "\n")


def _warn(findings) -> None:
    for f in findings:
        if f.level != "schema":
            print(f"relapsing: {f}", file=sys.stderr)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _open_out(path):
    return open(path, "w", encoding="utf-8", newline="") if path else None


def _write_text(text: str, path) -> None:
    fh = _open_out(path)
    if fh is None:
        sys.stdout.write(text)
        return
    with fh:
        fh.write(text)


def cmd_r0(params: ModelParams, args) -> int:
    _warn(validate(params))
    pair = build_next_gen(params)
    closed, spectral = r0_closed_form(params), r0_spectral(params)
    if abs(closed - spectral) > R0_AGREEMENT * max(abs(closed), abs(spectral)):
        raise CrossCheckError(f"r0 closed form {closed!r} != spectral {spectral!r}")
    report = {
        "r0_closed": closed,
        "r0_spectral": spectral,
        "delta1": pair.delta1,
        "rho": pair.rho,
        "k": pair.k,
        "eps_last": pair.eps_last,
        "terms": r0_terms(params),
    }
    _emit_json(report, sys.stdout)
    return EXIT_OK


def _ee_for(params: ModelParams):
    return endemic_equilibrium_scan(params) if params.has_treatment else endemic_equilibrium(params)


def cmd_equilibria(params: ModelParams, args) -> int:
    _warn(validate(params))
    ee = _ee_for(params)
    report = {"r0": r0_closed_form(params), "dfe": dfe(params).to_dict()}
    if ee:
        report["ee"] = ee.to_dict()
    else:
        report["ee"] = None
        report["reason"] = ee.reason
    _emit_json(report, sys.stdout)
    return EXIT_OK


def cmd_bifurcation(params: ModelParams, args) -> int:
    _warn(validate(params))
    cls = classify_bifurcation(params)
    report = {"f_input": params.f, "f_threshold": cls.report.f}
    report.update(cls.report.to_dict())
    report.update(cls.to_dict())
    _emit_json(report, sys.stdout)
    return EXIT_OK


def _initial_state(params: ModelParams, spec: str) -> StateVec:
    m = _DFE_INITIAL.match(spec)
    if m is None:
        return load_state(spec, params.j)
    y = StateVec.dfe(params).as_array()
    if m.group(1) is not None:
        try:
            eps = float(m.group(1))
        except ValueError:
            raise InvalidParametersError([Finding("schema", "initial", f"bad perturbation {m.group(1)!r}")]) from None
        y[1] += eps
    return StateVec.from_array(y)


def cmd_simulate(params: ModelParams, args) -> int:
    _warn(validate(params))
    initial = _initial_state(params, args.initial)
    traj = integrate(
        params,
        initial,
        args.t_end,
        method="adaptive" if args.adaptive else "rk4",
        dt=args.dt,
        stop_on_convergence=not args.no_early_stop,
        record_every=args.record_every,
    )
    buf = _io.StringIO()
    write_csv(traj, buf)
    _write_text(buf.getvalue(), args.out)
    if traj.converged:
        print(f"relapsing: converged at t={traj.times[-1]!r}", file=sys.stderr)
    return EXIT_OK


def _sweep_header(spec, j: int) -> list[str]:
    cols = [spec.label]
    for out in spec.outputs:
        if out == "r0":
            cols.append("r0")
        elif out == "ee":
            cols += [f"ee_{name}" for name in state_labels(j)]
        elif out == "dfe_spectrum":
            for k in range(1, j + 5):
                cols += [f"eig{k}_re", f"eig{k}_im"]
        else:
            cols.append(out)
    return cols


def _sweep_row(params: ModelParams, value: float, outputs) -> list[str]:
    row = [_fmt(value)]
    bif = None
    for out in outputs:
        if out == "r0":
            row.append(_fmt(r0_closed_form(params)))
        elif out == "ee":
            ee = _ee_for(params)
            row += [_fmt(x) for x in ee.state.as_array()] if ee else [""] * (params.j + 4)
        elif out == "dfe_spectrum":
            eigs = sorted(dfe_spectrum(params), key=lambda z: (-z.real, -z.imag))
            for z in eigs:
                row += [_fmt(z.real), _fmt(z.imag)]
        else:
            if bif is None:
                bif = bifurcation_coefficients(with_r0(params, 1.0))
            row.append(_fmt(getattr(bif, out)))
    return row


def cmd_sweep(params: ModelParams, args) -> int:
    spec = load_sweep(args.spec, params)
    # build and check every grid point before computing anything
    grid = [spec.apply(params, v) for v in spec.values]
    needs_equal = any(o in ("ee", "a", "b") for o in spec.outputs)
    for p in grid:
        findings = validate(p)
        bad = [f for f in findings if f.level == "schema" or (needs_equal and f.level == "error")]
        if needs_equal and not equal_death_rates(p):
            bad.append(Finding("error", "mu", "ee, a and b need equal host and vector death rates"))
        if bad:
            raise InvalidParametersError(bad)
    _warn(validate(params))

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        rows = list(pool.map(lambda pv: _sweep_row(pv[0], pv[1], spec.outputs), zip(grid, spec.values)))
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_sweep_header(spec, params.j))
    writer.writerows(rows)
    _write_text(buf.getvalue(), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relapsing",
        description="Relapsing host/vector disease model: R0, equilibria, bifurcation, simulation.",
    )
    parser.add_argument("--model", help="JSON model file")
    # also accept --model after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default=argparse.SUPPRESS, help="JSON model file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("r0", parents=[common], help="reproduction number with cross-checks")
    p.set_defaults(func=cmd_r0)

    p = sub.add_parser("equilibria", parents=[common], help="DFE and endemic equilibrium")
    p.set_defaults(func=cmd_equilibria)

    p = sub.add_parser("bifurcation", parents=[common], help="bifurcation coefficients at R0 = 1")
    p.set_defaults(func=cmd_bifurcation)

    p = sub.add_parser("simulate", parents=[common], help="integrate the model, write CSV")
    p.add_argument("--t-end", type=float, required=True)
    step = p.add_mutually_exclusive_group()
    step.add_argument("--dt", type=float, help="fixed RK4 step (default: automatic)")
    step.add_argument("--adaptive", action="store_true", help="adaptive Dormand-Prince 5(4)")
    p.add_argument("--initial", default="dfe", help="'dfe', 'dfe+EPS' (EPS added to I1) or a JSON state file")
    p.add_argument("--record-every", type=int, default=1, help="keep every n-th step")
    p.add_argument("--no-early-stop", action="store_true", help="integrate to t-end even once converged")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="evaluate outputs over a parameter grid")
    p.add_argument("spec", help="sweep specification JSON")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--jobs", type=int, default=None, help="worker threads")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.model:
        parser.error("--model is required")
    try:
        params = load_model(args.model)
        return args.func(params, args)
    except (InvalidParametersError, DegeneratePopulationError) as exc:
        for f in getattr(exc, "findings", []) or [exc]:
            print(f"relapsing: {f}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"relapsing: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, NegativityError) as exc:
        print(f"relapsing: numerical failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (CrossCheckError, ArithmeticError, AssertionError) as exc:
        print(f"relapsing: cross-check failed: {exc}", file=sys.stderr)
        return EXIT_CROSSCHECK
    except ValueError as exc:
        print(f"relapsing: {exc}", file=sys.stderr)
        return EXIT_INPUT
