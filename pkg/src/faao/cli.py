"""Batch experiment driver.

Three subcommands mirror the experiment families: ``solve`` (one run of a
chosen solver with solution/report dumps), ``convergence`` (time or space
refinement ladders with observed orders), and ``analysis`` (condition
numbers and spectra over a parameter grid).  Reports are written as CSV/JSON
next to rendered matplotlib figures, all indexed by a run manifest.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict
from pathlib import Path

import scipy.fft as sfft

from . import analysis, reporting
from .driver import (
    SOLVERS, convergence_study, solve_problem, space_ladder_specs,
    time_ladder_specs,
)
from .problems import ProblemSpec, example_spec, spec_from_json


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default="faao-out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="table/dump format")
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("FAAO_THREADS", "1")),
                   help="cap on internal FFT parallelism (env: FAAO_THREADS)")
    p.add_argument("--no-figures", action="store_true",
                   help="skip rendering matplotlib figures")


def _add_problem(p: argparse.ArgumentParser, need_mn: bool = True,
                 required_ab: bool = True) -> None:
    p.add_argument("--alpha", type=float, required=required_ab)
    p.add_argument("--beta", type=float, required=required_ab)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--example", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--dims", type=int, choices=(1, 2), default=None,
                   help="defaults to the example's dimensionality")
    if need_mn:
        p.add_argument("--M", type=int, required=True)
        p.add_argument("--N", type=int, required=True)


def _spec_from_args(args, M: int, N: int) -> ProblemSpec:
    spec = example_spec(args.example, args.alpha, args.beta, M, N,
                        kappa=args.kappa)
    if args.dims is not None and args.dims != spec.dims:
        raise ValueError(
            f"--dims {args.dims} conflicts with example {args.example} "
            f"(which is {spec.dims}D)"
        )
    return spec


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faao",
        description="all-at-once fractional diffusion solver experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="one solver run with solution dumps")
    _add_common(ps)
    _add_problem(ps, need_mn=False, required_ab=False)
    ps.add_argument("--M", type=int, default=None)
    ps.add_argument("--N", type=int, default=None)
    ps.add_argument("--spec-json", default=None,
                    help="load the problem from a JSON ProblemSpec document "
                         "(replaces the problem flags)")
    ps.add_argument("--solver", choices=SOLVERS, default="pbicgstab")
    ps.add_argument("--tol", type=float, default=1e-9)
    ps.add_argument("--max-iter", type=int, default=1000)
    ps.set_defaults(func=cmd_solve)

    pc = sub.add_parser("convergence", help="refinement ladder with orders")
    _add_common(pc)
    _add_problem(pc, need_mn=False)
    pc.add_argument("--ladder", choices=("time", "space"), default="time")
    pc.add_argument("--M", type=int, required=True,
                    help="coarsest M (time ladder) or the fixed M (space ladder)")
    pc.add_argument("--N", type=int, default=None,
                    help="coarsest N for the space ladder "
                         "(time ladder derives N from M)")
    pc.add_argument("--levels", type=int, default=5)
    pc.add_argument("--solver", choices=SOLVERS, default="pbicgstab")
    pc.add_argument("--tol", type=float, default=1e-9)
    pc.add_argument("--max-iter", type=int, default=1000)
    pc.set_defaults(func=cmd_convergence)

    pa = sub.add_parser("analysis", help="condition numbers and spectra")
    _add_common(pa)
    pa.add_argument("--alphas", default=None,
                    help="comma list; defaults to --alpha")
    pa.add_argument("--betas", default=None, help="comma list")
    _add_problem(pa, need_mn=False, required_ab=False)
    pa.add_argument("--sizes", default="16,32,64",
                    help="comma list of N (=M) values")
    pa.add_argument("--spectrum", action="store_true",
                    help="also dump full eigenvalue sets of the four "
                         "preconditioning compositions at the largest size")
    pa.set_defaults(func=cmd_analysis)
    return parser


def cmd_solve(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.spec_json is not None:
        spec = spec_from_json(args.spec_json)
    else:
        missing = [name for name in ("alpha", "beta", "M", "N")
                   if getattr(args, name) is None]
        if missing:
            raise ValueError(
                "missing required flags: " + ", ".join(f"--{m}" for m in missing)
            )
        spec = _spec_from_args(args, args.M, args.N)

    result = solve_problem(spec, solver=args.solver, tol=args.tol,
                           max_iter=args.max_iter)
    manifest = reporting.new_manifest("solve", {**_problem_params(spec),
                                                "solver": args.solver,
                                                "tol": args.tol,
                                                "max_iter": args.max_iter})

    from .assembly import export_solution_binary, export_solution_csv

    if args.format == "csv":
        export_solution_csv(result.field, out / "solution.csv")
        manifest.add(out / "solution.csv")
    else:
        export_solution_binary(result.field, out / "solution.bin")
        manifest.add(out / "solution.bin")
        manifest.add(out / "solution.bin.json")

    reporting.write_json(out / "solve_report.json", asdict(result.report), manifest)
    reporting.write_json(out / "error_report.json", asdict(result.errors), manifest)
    header = ["alpha", "beta", "kappa", "M", "N", "dims", "example", "solver",
              "iter1_mean", "iter2", "converged", "final_relres",
              "err_inf", "err_2", "wall_time"]
    row = [spec.alpha, spec.beta, spec.kappa, spec.M, spec.N, spec.dims,
           spec.example_id, args.solver, result.iter1_mean, result.iter2,
           result.report.converged, result.report.final_relres,
           result.errors.err_inf, result.errors.err_2, result.report.wall_time]
    if args.format == "csv":
        reporting.write_csv(out / "summary.csv", header, [row], manifest)
    else:
        reporting.write_json(out / "summary.json", dict(zip(header, row)), manifest)

    if not args.no_figures:
        reporting.solution_figure(result.field, out / "solution.png", manifest)
    manifest.write(out)

    dag = " (dag)" if result.report.flagged_dag else ""
    print(f"(alpha, beta)=({spec.alpha:g}, {spec.beta:g})  M={spec.M} N={spec.N}  "
          f"{args.solver}  (Iter1, Iter2) = ({result.iter1_mean:.1f}, "
          f"{result.iter2}){dag}  Time = {result.report.wall_time:.3f}s  "
          f"Err_inf = {result.errors.err_inf:.4e}")
    return 0


def cmd_convergence(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.ladder == "time":
        specs = time_ladder_specs(args.example, args.alpha, args.beta,
                                  args.M, args.levels, kappa=args.kappa)
    else:
        if args.N is None:
            raise ValueError("the space ladder needs a coarsest --N")
        specs = space_ladder_specs(args.example, args.alpha, args.beta,
                                   args.M, args.N, args.levels, kappa=args.kappa)
    for s in specs:
        if args.dims is not None and args.dims != s.dims:
            raise ValueError("--dims conflicts with the chosen example")

    rows, _ = convergence_study(specs, solver=args.solver, tol=args.tol,
                                max_iter=args.max_iter)
    manifest = reporting.new_manifest("convergence", {
        "alpha": args.alpha, "beta": args.beta, "kappa": args.kappa,
        "example": args.example, "ladder": args.ladder, "M": args.M,
        "N": args.N, "levels": args.levels, "solver": args.solver,
    })
    header = ["M", "N", "err_inf", "order_inf", "err_2", "order_2"]
    if args.format == "csv":
        reporting.write_csv(out / "convergence.csv", header, rows, manifest)
    else:
        reporting.write_json(out / "convergence.json",
                             {"rows": [list(r) for r in rows], "header": header},
                             manifest)
    if not args.no_figures:
        reporting.convergence_figure(rows, args.ladder, out / "convergence.png",
                                     manifest)
    manifest.write(out)

    print("     M       N     Err_inf     order     Err_2      order")
    for M, N, ei, oi, e2, o2 in rows:
        oi_s = f"{oi:9.4f}" if oi is not None else "       --"
        o2_s = f"{o2:9.4f}" if o2 is not None else "       --"
        print(f"{M:6d}  {N:6d}  {ei:.4e} {oi_s}  {e2:.4e} {o2_s}")
    return 0


def cmd_analysis(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.alphas is None and args.alpha is None:
        raise ValueError("provide --alpha or --alphas")
    if args.betas is None and args.beta is None:
        raise ValueError("provide --beta or --betas")
    alphas = ([float(a) for a in args.alphas.split(",")]
              if args.alphas else [args.alpha])
    betas = ([float(b) for b in args.betas.split(",")]
             if args.betas else [args.beta])
    sizes = [int(s) for s in args.sizes.split(",")]

    manifest = reporting.new_manifest("analysis", {
        "alphas": alphas, "betas": betas, "sizes": sizes,
        "example": args.example, "kappa": args.kappa,
        "spectrum": bool(args.spectrum),
    })
    # paired lists of equal length run as pairs, otherwise the cross product
    if args.alphas and args.betas and len(alphas) == len(betas):
        pairs = list(zip(alphas, betas))
    else:
        pairs = [(a, b) for a in alphas for b in betas]

    rows = []
    for alpha, beta in pairs:
        for n in sizes:
            spec = example_spec(args.example, alpha, beta, n, n,
                                kappa=args.kappa)
            try:
                km = analysis.condition_number("Mtilde", spec).kappa2
                kp = analysis.condition_number("Pl_inv_Mtilde_Pr_inv", spec).kappa2
            except ValueError as exc:
                print(f"skipping (alpha,beta,N)=({alpha},{beta},{n}): {exc}",
                      file=sys.stderr)
                continue
            rows.append((alpha, beta, n, km, kp))
            print(f"(alpha, beta)=({alpha:g}, {beta:g})  N={n}:  "
                  f"kappa2(system) = {km:.2f}   kappa2(preconditioned) = {kp:.2f}")

    header = ["alpha", "beta", "N", "kappa_M", "kappa_P"]
    if args.format == "csv":
        reporting.write_csv(out / "condition.csv", header, rows, manifest)
    else:
        reporting.write_json(out / "condition.json",
                             {"rows": [list(r) for r in rows], "header": header},
                             manifest)

    if args.spectrum:
        for alpha, beta in sorted({(r[0], r[1]) for r in rows}):
            n = max(r[2] for r in rows if (r[0], r[1]) == (alpha, beta))
            spec = example_spec(args.example, alpha, beta, n, n,
                                kappa=args.kappa)
            for tag in ("Mtilde", "Pl_inv_Mtilde", "Mtilde_Pr_inv",
                        "Pl_inv_Mtilde_Pr_inv"):
                stem = f"spectrum_{tag}_a{alpha:g}_b{beta:g}_N{n}"
                report = analysis.spectrum_dump(tag, spec,
                                                out / f"{stem}.csv")
                manifest.add(out / f"{stem}.csv")
                if not args.no_figures:
                    reporting.spectrum_figure(
                        report.values, f"{tag}, N={n}", out / f"{stem}.png",
                        manifest)
    manifest.write(out)
    return 0


def _problem_params(spec: ProblemSpec) -> dict:
    return {"alpha": spec.alpha, "beta": spec.beta, "kappa": spec.kappa,
            "M": spec.M, "N": spec.N, "dims": spec.dims,
            "example": spec.example_id}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        workers = max(1, args.threads)
        with sfft.set_workers(workers):
            return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
