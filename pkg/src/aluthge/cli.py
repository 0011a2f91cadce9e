"""Command line interface.

Exit codes: 0 success, 1 nonconvergence where convergence is asserted,
2 input or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io as mio
from .dynamics import SplitError, contraction_constant, numerical_derivative, split_subspaces
from .lab.continuity import continuity_probe
from .lab.experiment import ConfigError, run_experiment
from .lab.rates import RateFitError, measure_rate, projection_convergence
from .linalg import MatrixError
from .spectral import ProjectorMismatchError, SpectrumEscapeError, spectral_projections, spectrum_of
from .transform import DEFAULT_MAX_ITER, StopReason, aluthge, iterate, limit

EXIT_OK, EXIT_NONCONVERGED, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3


class _Usage(Exception):
    pass


def _matrix_rows(t):
    rows = []
    for i, row in enumerate(t):
        for j, z in enumerate(row):
            rows.append({"row": i, "col": j, "re": float(z.real), "im": float(z.imag)})
    return mio.rows_table(rows, ("row", "col", "re", "im"))


def _need_input(args):
    if not args.input:
        raise _Usage("--input is required")
    return mio.read_matrix(args.input)


def cmd_transform(args):
    t = _need_input(args)
    out = aluthge(t, args.lambda_param)
    if args.format == "delimited":
        return _matrix_rows(out), EXIT_OK
    return mio.dumps(mio.matrix_to_doc(out)), EXIT_OK


def cmd_iterate(args):
    t = _need_input(args)
    tr = iterate(t, args.lambda_param, args.tol, args.max_iter)
    code = EXIT_OK
    if tr.stop_reason is StopReason.NUMERICAL_FAILURE:
        code = EXIT_NUMERICAL
    elif args.require_convergence and not tr.converged:
        code = EXIT_NONCONVERGED
    if args.format == "delimited":
        return mio.trace_table(tr), code
    doc = {
        "lambda": tr.lambda_param,
        "converged": tr.converged,
        "stop_reason": tr.stop_reason,
        "n_final": tr.n_final,
        "final": tr.final,
        "steps": [s for s in tr.steps],
    }
    return mio.dumps(doc), code


def cmd_limit(args):
    t = _need_input(args)
    res = limit(t, args.lambda_param, args.tol, args.max_iter)
    code = EXIT_OK if res.converged else EXIT_NONCONVERGED
    if res.trace is not None and res.trace.stop_reason is StopReason.NUMERICAL_FAILURE:
        code = EXIT_NUMERICAL
    if args.format == "delimited":
        return _matrix_rows(res.limit), code
    doc = {"limit": res.limit, "converged": res.converged, "method": res.method,
           "iterations_used": res.iterations_used}
    return mio.dumps(doc), code


def cmd_spectral(args):
    t = _need_input(args)
    info = spectrum_of(t, merge_tol=args.merge_tol)
    system = spectral_projections(t, info)
    if args.format == "delimited":
        rows = [{"center_re": float(c.real), "center_im": float(c.imag), "multiplicity": m, "rank": k}
                for c, m, k in zip(info.centers, info.multiplicities, system.ranks)]
        return mio.rows_table(rows, ("center_re", "center_im", "multiplicity", "rank")), EXIT_OK
    doc = mio.projection_system_doc(system)
    doc["multiplicities"] = list(info.multiplicities)
    doc["separation_radius"] = info.radius
    doc["backend_discrepancy"] = system.backend_discrepancy
    return mio.dumps(doc), EXIT_OK


def cmd_dynamics(args):
    t = _need_input(args)
    info = spectrum_of(t)
    k = contraction_constant(info.centers)
    op = numerical_derivative(t, args.fd_step, args.lambda_param)
    split = split_subspaces(op, k, args.delta)
    doc = mio.split_doc(split)
    doc["fd_step"] = op.fd_step
    if args.format == "delimited":
        rows = [{"index": i, "angle": a} for i, a in enumerate(doc["principal_angles"])]
        return mio.rows_table(rows, ("index", "angle")), EXIT_OK
    return mio.dumps(doc), EXIT_OK


def cmd_rate(args):
    t = _need_input(args)
    if args.projections:
        rep = projection_convergence(t, lambda_param=args.lambda_param, max_iter=args.max_iter)
    else:
        rep = measure_rate(t, lambda_param=args.lambda_param, max_iter=args.max_iter)
    if args.format == "delimited":
        row = {"fitted_gamma": rep.fitted_gamma, "fitted_C": rep.fitted_C,
               "k_D_reference": rep.k_D_reference, "residual": rep.residual,
               "n_start": rep.n_range[0], "n_end": rep.n_range[1]}
        return mio.rows_table([row], tuple(row)), EXIT_OK
    return mio.dumps(rep), EXIT_OK


def cmd_continuity(args):
    t = _need_input(args)
    deltas = tuple(float(x) for x in args.deltas.split(","))
    rep = continuity_probe(t, deltas, args.samples, args.seed or 0, tol=args.tol)
    code = EXIT_OK if rep.passed else EXIT_NONCONVERGED
    if args.format == "delimited":
        rows = [{"delta": d, "m": m} for d, m in zip(rep.deltas, rep.m)]
        return mio.rows_table(rows, ("delta", "m")), code
    doc = {"deltas": rep.deltas, "m": rep.m, "monotone": rep.monotone, "passed": rep.passed,
           "target": rep.target, "samples": rep.samples}
    return mio.dumps(doc), code


def cmd_experiment(args):
    path = args.config or args.input
    if not path:
        raise _Usage("--config is required")
    with open(path) as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not a JSON document ({exc})") from exc
    if args.seed is not None:
        config["seed"] = args.seed
    if args.max_iter != DEFAULT_MAX_ITER:
        config["max_iter"] = args.max_iter
    report = run_experiment(config, workers=args.workers)
    code = EXIT_OK if report["passed"] else EXIT_NONCONVERGED
    if args.format == "delimited":
        rows = [{"suite": s["name"], "index": r["index"], "failures": ";".join(r["failures"])}
                for s in report["suites"] for r in s["records"]]
        return mio.rows_table(rows, ("suite", "index", "failures")), code
    return mio.dumps(report), code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="matrix document (JSON with r and entries)")
    common.add_argument("--lambda", dest="lambda_param", type=float, default=0.5)
    common.add_argument("--tol", type=float, default=1e-10)
    common.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--format", choices=("structured", "delimited"), default="structured")

    p = argparse.ArgumentParser(prog="aluthge", description="Aluthge transform toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("transform", parents=[common], help="one transform").set_defaults(func=cmd_transform)
    s = sub.add_parser("iterate", parents=[common], help="iterate with diagnostics")
    s.add_argument("--require-convergence", action="store_true")
    s.set_defaults(func=cmd_iterate)
    sub.add_parser("limit", parents=[common], help="limit of the iteration").set_defaults(func=cmd_limit)
    s = sub.add_parser("spectral", parents=[common], help="clusters and spectral projectors")
    s.add_argument("--merge-tol", type=float)
    s.set_defaults(func=cmd_spectral)
    s = sub.add_parser("dynamics", parents=[common], help="derivative and neutral/stable split")
    s.add_argument("--fd-step", type=float)
    s.add_argument("--delta", type=float)
    s.set_defaults(func=cmd_dynamics)
    s = sub.add_parser("rate", parents=[common], help="fit the convergence rate")
    s.add_argument("--projections", action="store_true", help="fit the spectral projectors instead")
    s.set_defaults(func=cmd_rate)
    s = sub.add_parser("continuity", parents=[common], help="continuity probe at a normal matrix")
    s.add_argument("--deltas", default="1e-1,1e-2,1e-3,1e-4")
    s.add_argument("--samples", type=int, default=5)
    s.set_defaults(func=cmd_continuity)
    s = sub.add_parser("experiment", parents=[common], help="run a batch configuration")
    s.add_argument("--config")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text, code = args.func(args)
    except (_Usage, MatrixError, ConfigError, SpectrumEscapeError, FileNotFoundError,
            RateFitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (np.linalg.LinAlgError, ProjectorMismatchError, SplitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
