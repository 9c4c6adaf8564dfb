"""
Command-line entry point.

Exit codes for every subcommand: 0 success or no counterexample, 1 a
counterexample verdict, 2 a usage error or a refused input (invalid model,
incompatible data, inapplicable criterion).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import catalog, characteristics
from ._parallel import THREADS_ENV
from .exprlang import ExprError
from .fts import RefusedError, check_C0, check_C00, estimate_Topt
from .inverse import (
    DomainMembershipError,
    InverseProblem,
    NotNilpotentError,
    reconstruct_state,
    recover_source,
)
from .pifield import InitialData, PiField, default_nt, sample_Ch, write_csv
from .qcalc import QContext, StabilizationError, q_power
from .solver import IncompatibleDataError, residuals, solve_marching, solve_qpower
from .system import InvalidSpecError, SystemSpec, require_valid, validate

__all__ = ["main", "run", "split_exprs"]

OK, COUNTEREXAMPLE, REFUSED = 0, 1, 2

EXIT_CODES = ("exit codes: 0 success / no counterexample, 1 counterexample found, "
              "2 usage error or refused input")


EXAMPLE_NAMES = {
    "sine-coupling": "sine-coupling",
    "sec3-2": "sine-coupling",
    "delayed-forcing": "delayed-forcing",
    "sec3-3": "delayed-forcing",
}


class _Refusal(Exception):
    pass


def split_exprs(text):
    """Split a comma-separated expression list at top-level commas only."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur).strip())
    return [p for p in parts if p]


def _load(path):
    try:
        return SystemSpec.from_json(path)
    except FileNotFoundError:
        raise _Refusal(f"model file not found: {path}") from None
    except (InvalidSpecError, ExprError, ValueError, KeyError) as err:
        raise _Refusal(f"cannot read model {path}: {err}") from None


def _initial(spec, text, csv_path=None, label="phi"):
    if csv_path:
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        return InitialData(data[:, 1:1 + spec.n].T)
    if text is None:
        raise _Refusal(f"--{label} is required")
    exprs = split_exprs(text)
    if len(exprs) != spec.n:
        raise _Refusal(f"--{label} needs {spec.n} expressions, got {len(exprs)}")
    try:
        return InitialData.from_exprs(exprs)
    except ExprError as err:
        raise _Refusal(f"bad --{label} expression: {err}") from None


def _out(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# --- subcommands ------------------------------------------------------------------


def cmd_validate(args):
    spec = _load(args.model)
    report = validate(spec)
    print(report)
    if not report.ok:
        for name, c in report.failures().items():
            print(f"refused: {name} violated, worst {c.worst:.6g} at {c.location}",
                  file=sys.stderr)
        return REFUSED
    return OK


def cmd_solve(args):
    spec = _load(args.model)
    phi = _initial(spec, args.phi)
    solver = solve_marching if args.method == "marching" else solve_qpower
    u = solver(spec, phi, args.T, nx=args.nx, nt=args.nt, override=args.override)
    text = write_csv(u)
    _out(text, args.out)
    rep = residuals(spec, u, phi, override=args.override)
    print(rep, file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return OK


def cmd_trace(args):
    spec = _load(args.model)
    require_valid(spec, override=args.override)
    j = args.j - 1
    if not 0 <= j < spec.n:
        raise _Refusal(f"--j must lie in 1..{spec.n}")
    ex = characteristics.trace(spec, j, args.x, args.t, refine=not args.no_refine)
    print(f"component {args.j}: exit {ex.kind} at x={ex.x_exit:.12g}, t={ex.tau:.12g}, "
          f"weight {ex.weight:.12g}")
    lines = ["xi,omega"] + [f"{a:.17g},{b:.17g}" for a, b in ex.path]
    if args.out:
        _out("\n".join(lines) + "\n", args.out)
        print(f"path written to {args.out} ({len(ex.path)} points)")
    return OK


def cmd_qpower(args):
    spec = _load(args.model)
    nt = default_nt(spec, args.T, args.nx) if args.nt is None else args.nt
    if args.phi:
        phi = _initial(spec, args.phi)
        w = PiField(float(args.T), np.repeat(phi.on_grid(args.nx)[:, :, None], nt + 1, axis=2))
    else:
        w = sample_Ch(spec, args.T, args.seed, nx=args.nx, nt=nt)
        phi = w.initial()
    ctx = QContext(spec, phi, args.T, args.nx, nt, override=args.override)
    _, iterates = q_power(ctx, w, args.k, keep=True)
    head = ["iterate"] + [f"sup_u{j + 1}" for j in range(spec.n)]
    rows = [",".join(head)]
    for i, u in enumerate(iterates, start=1):
        sups = np.max(np.abs(u.data), axis=(1, 2))
        rows.append(",".join([str(i)] + [f"{s:.17g}" for s in sups]))
    _out("\n".join(rows) + "\n", args.out)
    return OK


def _parse_k(text):
    return "auto" if text == "auto" else int(text)


def cmd_fts_check(args):
    spec = _load(args.model)
    if args.criterion == "C00":
        v = check_C00(spec, args.T, _parse_k(args.k), args.k_max, args.trials, args.tol,
                      args.seed, args.nx, override=args.override)
    else:
        v = check_C0(spec, args.T, _parse_k(args.k), args.trials, args.tol, args.seed,
                     args.nx, override=args.override)
    print(v)
    return OK if v.holds else COUNTEREXAMPLE


def cmd_topt(args):
    spec = _load(args.model)
    est = estimate_Topt(spec, args.Tmax, args.bisect_tol, args.trials, args.tol, args.seed,
                        args.nx, override=args.override)
    print(est)
    print("probes: " + ", ".join(f"{T:.6g}:{'pass' if ok else 'fail'}" for T, ok in est.probes))
    return OK if est.certified else COUNTEREXAMPLE


def cmd_inverse(args):
    spec = _load(args.model)
    u0 = _initial(spec, args.u0, args.u0_csv, "u0")
    ur = _initial(spec, args.ur, args.ur_csv, "ur")
    problem = InverseProblem(spec, args.r, u0, ur, nx=args.nx)
    res = recover_source(problem)
    x = np.arange(args.nx + 1) / args.nx
    times = np.linspace(0.0, args.r, args.slices)
    states = [reconstruct_state(problem, res, t) for t in times]
    head = ["x"] + [f"f{j + 1}" for j in range(spec.n)]
    for t in times:
        head += [f"u{j + 1}@t={t:.6g}" for j in range(spec.n)]
    cols = [x] + list(res.f) + [row for s in states for row in s]
    lines = [",".join(head)]
    for i in range(args.nx + 1):
        lines.append(",".join(f"{c[i]:.17g}" for c in cols))
    _out("\n".join(lines) + "\n", args.out)
    end_err = float(np.sqrt(np.trapezoid(((states[-1] - ur.on_grid(args.nx)) ** 2).sum(0), x)))
    start_err = float(np.sqrt(np.trapezoid(((states[0] - u0.on_grid(args.nx)) ** 2).sum(0), x)))
    info = sys.stderr if args.out in (None, "-") else sys.stdout
    bracket = problem.bracket
    if bracket is not None:
        print(f"vanishing time bracket [{bracket.lo:.6g}, {bracket.hi:.6g}]", file=info)
    print(f"branch {res.branch}, T = {res.T:.6g}, n0 = {res.n0}", file=info)
    print(f"L2 residual at t=0: {start_err:.3e}, at t=r: {end_err:.3e}", file=info)
    return OK


def cmd_example(args):
    if EXAMPLE_NAMES[args.name] == "sine-coupling":
        ex = catalog.nonlinear_pair(args.variant)
        v = check_C0(ex.spec, ex.T, ex.k, args.trials, 1e-10, args.seed, args.nx)
        print(ex.description)
        if v.holds:
            print(f"(C0) holds with k={v.k} at T={v.T:g} "
                  f"(no counterexample in {v.trials} sampled w, tol {v.tolerance:g})")
            return OK
        print(f"(C0) fails at T={v.T:g} with k={v.k}: witness seed {v.seed}, "
              f"component {v.component + 1}, x={v.x:.6g}, |value|={v.value:.6g}")
        return COUNTEREXAMPLE
    ex = catalog.delayed_forcing()
    spec = ex.spec
    report = validate(spec)
    hom = report.checks["homogeneous"]
    nx = args.nx
    ctx = QContext(spec, InitialData.zeros(spec.n), 3.0, nx, override=True)
    worst = 0.0
    for i in range(args.trials):
        w = sample_Ch(spec, 3.0, args.seed + i, nx=nx, nt=ctx.nt)
        u = q_power(ctx.with_phi(w.initial()), w, 2)
        worst = max(worst, float(np.max(np.abs(u.data[:, :, -1]))))
    phi = InitialData.from_exprs(["0", "0"])
    sol = solve_marching(spec, phi, 5.0, nx=nx, override=True)
    late = float(np.max(np.abs(sol.slice(5.0))))
    print(ex.description)
    print(f"[Q^2 w](., 3): max |value| {worst:.3e} over {args.trials} sampled w (vanishes)")
    print(f"solution from phi = 0 at t = 5: sup norm {late:.6g} (nonzero)")
    print(f"homogeneity check h(t, 0) = 0: {hom.status} (worst {hom.worst:.6g} at {hom.location})")
    print("the vanishing criterion does not extend to nonhomogeneous boundaries")
    return OK


# --- parser -----------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(
        prog="hypfts",
        description="Hyperbolic boundary problems: solve, trace, check finite-time "
                    "stabilization, recover sources.",
        epilog=f"{EXIT_CODES}. Set {THREADS_ENV}=N to run independent trials on N threads.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text, epilog=EXIT_CODES)
        sp.set_defaults(func=fn)
        return sp

    def model(sp, grid=True):
        sp.add_argument("--model", required=True, help="model JSON file")
        sp.add_argument("--override", action="store_true",
                        help="run even if the model fails validation")
        if grid:
            sp.add_argument("--nx", type=int, default=64, help="x-cells (default 64)")

    sp = add("validate", cmd_validate, "Check a model file's structural hypotheses.")
    sp.add_argument("--model", required=True, help="model JSON file")

    sp = add("solve", cmd_solve, "Solve for given initial data and write the field as CSV.")
    model(sp)
    sp.add_argument("--phi", required=True, help="initial data, n comma-separated expressions in x")
    sp.add_argument("--T", type=float, required=True, help="horizon")
    sp.add_argument("--nt", type=int, default=None, help="t-steps (default from speeds)")
    sp.add_argument("--method", choices=["qpower", "marching"], default="qpower")
    sp.add_argument("--out", default=None, help="CSV path (default stdout)")

    sp = add("trace", cmd_trace, "Trace one characteristic back to the boundary.")
    model(sp, grid=False)
    sp.add_argument("--j", type=int, required=True, help="component, 1-based")
    sp.add_argument("--x", type=float, required=True)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--no-refine", action="store_true", help="skip the step-halving check")
    sp.add_argument("--out", default=None, help="CSV path for the curve points")

    sp = add("qpower", cmd_qpower, "Sup-norm per component of each iterate Q^1 w .. Q^k w (CSV).")
    model(sp)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--nt", type=int, default=None)
    sp.add_argument("--phi", default=None,
                    help="start from the t-constant extension of phi (default: seeded field)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)

    sp = add("fts-check", cmd_fts_check, "Randomized check of the vanishing criterion.")
    model(sp)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--k", default="auto", help="power of Q or 'auto'")
    sp.add_argument("--criterion", choices=["C0", "C00"], default="C0")
    sp.add_argument("--k-max", type=int, default=3, help="multiples of T for C00")
    sp.add_argument("--trials", type=int, default=64)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("topt", cmd_topt, "Bracket the optimal stabilization time by bisection.")
    model(sp)
    sp.add_argument("--Tmax", type=float, required=True)
    sp.add_argument("--bisect-tol", type=float, default=0.05)
    sp.add_argument("--trials", type=int, default=16)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("inverse", cmd_inverse, "Recover the source from u(0) and u(r); write f and u(t) slices.")
    sp.add_argument("--model", required=True, help="model JSON file (autonomous, linear P)")
    sp.add_argument("--u0", default=None, help="n comma-separated expressions in x")
    sp.add_argument("--ur", default=None, help="n comma-separated expressions in x")
    sp.add_argument("--u0-csv", default=None, help="samples: columns x,u1..un with a header")
    sp.add_argument("--ur-csv", default=None, help="samples: columns x,u1..un with a header")
    sp.add_argument("--r", type=float, required=True)
    sp.add_argument("--nx", type=int, default=200)
    sp.add_argument("--slices", type=int, default=5, help="u(t) slices on [0, r]")
    sp.add_argument("--out", default=None)

    sp = add("example", cmd_example, "Run a built-in example.")
    sp.add_argument("--name", choices=sorted(EXAMPLE_NAMES), required=True,
                    help="sine-coupling (alias sec3-2): the boundary pair with windows of "
                         "zeros; delayed-forcing (alias sec3-3): the nonhomogeneous pair")
    sp.add_argument("--variant", choices=sorted(catalog.NONLINEAR_VARIANTS), default="suf2")
    sp.add_argument("--trials", type=int, default=32)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--nx", type=int, default=40)
    return p


def run(argv=None):
    """Parse `argv`, dispatch, and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _Refusal as err:
        print(f"refused: {err}", file=sys.stderr)
    except (InvalidSpecError, RefusedError, IncompatibleDataError, DomainMembershipError,
            NotNilpotentError, characteristics.SpeedSignError, StabilizationError,
            ExprError, ValueError) as err:
        print(f"refused: {err}", file=sys.stderr)
    return REFUSED


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
