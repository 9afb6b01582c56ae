"""Command-line driver: ``radius``, ``solve``, ``certify`` and ``sweep``.

Exit codes: 0 ok/certified, 1 usage or I/O error, 2 infeasible hypotheses,
3 certification violated, 4 certification not applicable.
"""

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import traceio
from .certify import certify_trace
from .errors import Infeasible, InvalidMajorant, MajorantGNError, TraceFormatError
from .majorant import (
    MajorantSpec,
    MethodParams,
    ProblemConstants,
    closed_form_radius_lipschitz,
    closed_form_radius_smale,
    lipschitz_closed_form,
    make_lipschitz_majorant,
    make_smale_majorant,
    radius,
    smale_closed_form,
)
from .problems import get_entry, problem_ids
from .runner import (
    SWEEP_COLUMNS,
    RunSpec,
    acceptance_sweep,
    expand_sweep,
    load_sweep,
    method_params,
    run_sweep,
    solver_config,
    start_point,
)
from .solver import MODES, PRECONDITIONERS, RESIDUAL_STRATEGIES, iterate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_VIOLATED = 3
EXIT_NOT_APPLICABLE = 4

#: environment variable naming the default directory for written files
OUTPUT_DIR_ENV = "MAJORANT_GN_OUTPUT_DIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _output_path(given, default_name):
    if given:
        return given
    return os.path.join(os.environ.get(OUTPUT_DIR_ENV, "."), default_name)


def _float(text):
    return float(text.replace("infinity", "inf"))


def _vector(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# -- radius -----------------------------------------------------------------------


def custom_majorant(f_expr, R=math.inf, fprime_expr=None, dplus0=None):
    """Build a :class:`MajorantSpec` from a sympy expression in ``t``.

    ``f'`` and ``D+f'(0)`` are derived symbolically unless given.
    """
    import sympy

    t = sympy.Symbol("t", nonnegative=True)
    try:
        f = sympy.sympify(f_expr, locals={"t": t})
        fp = sympy.sympify(fprime_expr, locals={"t": t}) if fprime_expr else sympy.diff(f, t)
    except (sympy.SympifyError, TypeError, SyntaxError) as exc:
        raise InvalidMajorant(f"cannot parse majorant expression: {exc}") from None
    if f.free_symbols - {t} or fp.free_symbols - {t}:
        raise InvalidMajorant("majorant expressions may only depend on t")
    if dplus0 is None:
        dplus0 = float(sympy.limit(sympy.diff(fp, t), t, 0, "+"))
    f_num = sympy.lambdify(t, f, "math")
    fp_num = sympy.lambdify(t, fp, "math")
    return MajorantSpec(
        lambda s: float(f_num(s)),
        lambda s: float(fp_num(s)),
        float(dplus0),
        R=R,
        name="custom",
    )


def _radius_inputs(args):
    consts = ProblemConstants(args.c, args.beta, args.kappa)
    params = MethodParams(args.vartheta, args.omega1, args.omega2)
    if args.family == "lipschitz":
        if args.K is None:
            raise ValueError("--K is required for the lipschitz family")
        spec = make_lipschitz_majorant(args.K)
    elif args.family == "smale":
        if args.gamma is None:
            raise ValueError("--gamma is required for the smale family")
        spec = make_smale_majorant(args.gamma)
    else:
        if args.f is None:
            raise ValueError("--f is required for the custom family")
        spec = custom_majorant(args.f, args.R, args.fprime, args.dplus0)
    return spec, consts, params


def _closed_form(args, consts, params):
    if args.family == "lipschitz":
        nu, rho = lipschitz_closed_form(args.K, consts, params)
        return nu, rho, closed_form_radius_lipschitz(args.K, consts, params)
    if args.family == "smale":
        nu, rho = smale_closed_form(args.gamma, consts, params)
        return nu, rho, closed_form_radius_smale(args.gamma, consts, params)
    return None


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def cmd_radius(args):
    try:
        spec, consts, params = _radius_inputs(args)
    except (ValueError, InvalidMajorant) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rep = radius(spec, consts, params)
    out = {"family": args.family, "bisection": rep.as_dict()}
    if not rep.feasible:
        for d in rep.diagnostics:
            print(f"infeasible: {d}", file=sys.stderr)
        _write_json(args.output, out)
        return EXIT_INFEASIBLE
    closed = None
    try:
        closed = _closed_form(args, consts, params)
    except Infeasible as exc:
        out["closed_form_error"] = str(exc)
    print(f"family: {args.family}")
    print(f"alpha = {_fmt(rep.alpha)}")
    if closed is not None:
        nu_c, rho_c, r_c = closed
        out["closed_form"] = {"nu": nu_c, "rho": rho_c, "r": r_c}
        out["difference"] = {
            "nu": abs(rep.nu - nu_c),
            "rho": _diff(rep.rho, rho_c),
            "r": _diff(rep.r, r_c),
        }
        print(f"nu = {_fmt(rep.nu)} (bisection), {_fmt(nu_c)} (closed form), difference {abs(rep.nu - nu_c):.3g}")
        print(f"rho = {_fmt(rep.rho)} (bisection), {_fmt(rho_c)} (closed form), difference {_diff(rep.rho, rho_c):.3g}")
    else:
        print(f"nu = {_fmt(rep.nu)} (bisection)")
        print(f"rho = {_fmt(rep.rho)} (bisection)")
    print(f"r = {_fmt(rep.r)}")
    _write_json(args.output, out)
    return EXIT_OK


def _diff(a, b):
    if math.isinf(a) and math.isinf(b):
        return 0.0
    return abs(a - b)


def _write_json(path, obj):
    if path:
        traceio.atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- solve ------------------------------------------------------------------------


def _runspec(args):
    forcing = args.forcing
    if forcing != "max":
        forcing = float(forcing)
    return RunSpec(
        problem_id=args.problem,
        mode=args.mode,
        family=args.family,
        vartheta=args.vartheta,
        omega1=args.omega1,
        omega2=args.omega2,
        forcing=forcing,
        preconditioner=args.preconditioner,
        residual_strategy=args.residual_strategy,
        radius_fraction=None if args.x0 is not None else args.radius_fraction,
        x0=args.x0,
        seed=args.seed,
        max_iters=args.max_iters,
    )


def cmd_solve(args):
    try:
        run = _runspec(args)
        entry = get_entry(run.problem_id)
        spec = entry.majorant(run.family)
    except (KeyError, ValueError) as exc:
        print(f"error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        params, ball = method_params(entry, spec, run)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if run.x0 is not None:
        x0 = np.array(run.x0)
    else:
        x0 = start_point(entry.x_star, ball, run.radius_fraction, run.seed)
    try:
        trace = iterate(entry.problem, solver_config(run, params), x0)
    except (MajorantGNError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    meta = run.as_dict()
    meta["x0"] = None if run.x0 is None else list(run.x0)
    meta["params"] = {"vartheta": params.vartheta, "omega1": params.omega1, "omega2": params.omega2}
    name = f"{run.problem_id}_{run.mode}_seed{run.seed}.jsonl"
    path = _output_path(args.output, name)
    try:
        traceio.write_trace(path, trace, meta)
    except OSError as exc:
        print(f"error: cannot write {path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    steps = sum(1 for rec in trace.records if rec.has_step)
    print(f"problem: {run.problem_id}  mode: {run.mode}  ball radius: {ball:.6g}")
    print(f"iterations: {steps}")
    print(f"final grad norm: {trace.records[-1].grad_norm:.3e}")
    print(f"termination: {trace.termination}")
    print(f"trace: {path}")
    return EXIT_OK


# -- certify ----------------------------------------------------------------------


def cmd_certify(args):
    try:
        trace, meta = traceio.read_trace(args.trace)
    except (OSError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    meta = meta or {}
    saved = meta.get("params", {})
    problem_id = args.problem or meta.get("problem_id")
    family = args.family or meta.get("family", "lipschitz")
    if problem_id is None:
        print("error: --problem is required for traces without run metadata", file=sys.stderr)
        return EXIT_USAGE
    try:
        entry = get_entry(problem_id)
        spec = entry.majorant(family)
        params = MethodParams(
            _pick(args.vartheta, saved, "vartheta", 0.0),
            _pick(args.omega1, saved, "omega1", 1.0),
            _pick(args.omega2, saved, "omega2", 0.0),
        )
    except (KeyError, ValueError) as exc:
        print(f"error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_USAGE
    rep = radius(spec, entry.constants, params)
    if not rep.feasible:
        for d in rep.diagnostics:
            print(f"infeasible: {d}", file=sys.stderr)
        return EXIT_INFEASIBLE
    cert = certify_trace(trace, entry.x_star, spec, entry.constants, params, grade=entry.grade)
    default = os.path.splitext(os.path.basename(args.trace))[0] + ".certificate.json"
    path = _output_path(args.output, default)
    try:
        _write_json(path, cert.as_dict())
    except OSError as exc:
        print(f"error: cannot write {path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"overall: {cert.overall}")
    print(f"t0 = {cert.t0:.6g}, r = {cert.ball_radius:.6g}")
    for d in cert.violation_details:
        print(f"  {d}")
    print(f"certificate: {path}")
    return {"certified": EXIT_OK, "violated": EXIT_VIOLATED}.get(cert.overall, EXIT_NOT_APPLICABLE)


def _pick(flag, saved, key, default):
    if flag is not None:
        return flag
    return float(saved.get(key, default))


# -- sweep ------------------------------------------------------------------------


def write_csv(path, rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    traceio.atomic_write(path, buf.getvalue())


def cmd_sweep(args):
    try:
        config = acceptance_sweep() if args.config is None else load_sweep(args.config)
        runs = expand_sweep(config)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        print(f"error: bad sweep config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rows = run_sweep(runs, jobs=args.jobs)
    path = _output_path(args.output, "sweep.csv")
    try:
        write_csv(path, rows)
    except OSError as exc:
        print(f"error: cannot write {path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    counts = {}
    for row in rows:
        counts[row["status"]] = counts.get(row["status"], 0) + 1
    summary = ", ".join(f"{k}: {v}" for k, v in sorted(counts.items())) or "no runs"
    print(f"{len(rows)} runs ({summary})")
    print(f"summary: {path}")
    failed = counts.get("violated", 0) + counts.get("error", 0)
    return EXIT_VIOLATED if failed else EXIT_OK


# -- parser -----------------------------------------------------------------------


def _add_method_flags(p, defaults=True):
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument("--vartheta", type=float, default=d(0.0), help="inexactness bound in [0, 1)")
    p.add_argument("--omega1", type=float, default=d(1.0), help="bound on ||B^{-1} J^T J||")
    p.add_argument("--omega2", type=float, default=d(0.0), help="bound on ||B^{-1} J^T J - I||")


def build_parser():
    parser = _Parser(prog="majorant-gn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("radius", help="convergence radius from majorant constants")
    p.add_argument("--family", choices=("lipschitz", "smale", "custom"), required=True)
    p.add_argument("--K", type=float, help="Lipschitz constant (lipschitz family)")
    p.add_argument("--gamma", type=float, help="Smale constant (smale family)")
    p.add_argument("--f", help="majorant expression in t (custom family)")
    p.add_argument("--fprime", help="derivative expression in t; derived when omitted")
    p.add_argument("--dplus0", type=float, help="right derivative of f' at 0; derived when omitted")
    p.add_argument("--R", type=_float, default=math.inf, help="majorant domain [0, R)")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--c", type=float, default=0.0)
    p.add_argument("--kappa", type=_float, default=math.inf)
    _add_method_flags(p)
    p.add_argument("--output", help="write the report as JSON")
    p.set_defaults(func=cmd_radius)

    p = sub.add_parser("solve", help="run an iteration on a catalog problem")
    p.add_argument("--problem", required=True, help=f"one of {', '.join(problem_ids())}")
    p.add_argument("--mode", choices=MODES, default="exact_gn")
    p.add_argument("--family", choices=("lipschitz", "smale"), default="lipschitz")
    _add_method_flags(p)
    p.add_argument("--forcing", default="max", help="'max' or a constant theta_k")
    p.add_argument("--preconditioner", choices=PRECONDITIONERS[:2], default="identity")
    p.add_argument("--residual-strategy", choices=RESIDUAL_STRATEGIES, default="none")
    p.add_argument("--radius-fraction", type=float, default=0.5)
    p.add_argument("--x0", type=_vector, help="explicit start point, comma separated")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--output", help="trace path (JSON Lines)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("certify", help="check a trace against the per-step error bound")
    p.add_argument("trace")
    p.add_argument("--problem", help="catalog id; read from the trace when omitted")
    p.add_argument("--family", choices=("lipschitz", "smale"))
    _add_method_flags(p, defaults=False)
    p.add_argument("--output", help="certificate path (JSON)")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="run and certify a grid of solves")
    p.add_argument("config", nargs="?", help="JSON sweep config; the acceptance sweep when omitted")
    p.add_argument("--output", help="CSV summary path")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
