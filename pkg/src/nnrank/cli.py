"""Command-line interface: ``nnrank <command> ...``.

Every command prints a JSON report on stdout. Exit codes: 0 on success,
2 on invalid arguments, 3 when non-finite values are encountered.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

from . import experiments as ex
from .cells import support_pattern
from .identifiability import (generic_rank_estimate, identifiability_report,
                              uniqueness_by_restarts)
from .rank_oracles import (latin_square_tensor, nonneg_rank_bounds,
                           paper_222_tensor)
from .solvers import SolverConfig, als_solve_real, nncp_solve
from .tensor import Decomposition, Tensor, load_json

EXIT_OK, EXIT_ARGS, EXIT_NUMERIC = 0, 2, 3


class NumericalFailure(Exception):
    pass


def _ints(text: str) -> tuple[int, ...]:
    try:
        out = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, "
                                         f"got {text!r}")
    return out


def _solver_flags(p, restarts=10):
    p.add_argument("--restarts", type=int, default=restarts)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--feas-tol", type=float, default=1e-8)
    p.add_argument("--supp-eps", type=float, default=1e-7)


def _cfg(args) -> SolverConfig:
    return SolverConfig(restarts=args.restarts, seed=args.seed,
                        max_outer_iters=args.max_iters,
                        feas_tol=args.feas_tol)


def _load_tensor(path) -> Tensor:
    obj = load_json(path)
    if not isinstance(obj, Tensor):
        raise ValueError(f"{path} does not hold a tensor")
    return obj


def _scalar_rows(report: dict):
    return [("key", "value")] + [(k, v) for k, v in report.items()
                                 if not isinstance(v, (list, dict))]


# command handlers return (report dict, csv rows, plot kind)

def cmd_rank(args):
    A = _load_tensor(args.tensor)
    est = nonneg_rank_bounds(A, args.r_max, SolverConfig(seed=args.seed))
    rep = est.to_dict()
    return rep, _scalar_rows(rep), "scalars"


def cmd_construct(args):
    if args.kind == "latin":
        if args.n is None:
            raise ValueError("construct latin needs N")
        T = latin_square_tensor(args.n)
    else:
        T = paper_222_tensor()
    rep = T.to_dict()
    return rep, _scalar_rows({"shape": "x".join(map(str, T.shape)),
                              "norm": T.norm()}), "scalars"


def cmd_approx(args):
    A = _load_tensor(args.tensor)
    cfg = _cfg(args)
    if args.real:
        res = als_solve_real(A, args.rank, cfg)
    else:
        res = nncp_solve(A, args.rank, cfg, eps_supp=args.supp_eps)
    rep = res.to_dict()
    rep["solver_config"] = cfg.to_dict()
    return rep, _scalar_rows(rep), "scalars"


def cmd_identifiability(args):
    rep = identifiability_report(args.shape, args.rank, args.symmetric,
                                 args.seed).to_dict()
    rows = [("key", "value")] + sorted(rep["verdicts"].items())
    return rep, rows, "scalars"


def cmd_generic_rank(args):
    rep = generic_rank_estimate(args.shape, args.seed).to_dict()
    return rep, _scalar_rows(rep), "scalars"


def cmd_uniqueness(args):
    A = _load_tensor(args.tensor)
    cfg = ex.uniqueness_config(_cfg(args))
    rep = uniqueness_by_restarts(A, args.rank, cfg, args.match_tol,
                                 eps_supp=args.supp_eps).to_dict()
    return rep, _scalar_rows(rep), "scalars"


def cmd_cells(args):
    D = load_json(args.decomposition)
    if not isinstance(D, Decomposition):
        raise ValueError(f"{args.decomposition} does not hold a decomposition")
    rep = support_pattern(D, args.supp_eps).to_dict()
    return rep, _scalar_rows(rep), "scalars"


def cmd_typical(args):
    cfg = SolverConfig(restarts=args.restarts, seed=args.seed)
    h = ex.typical_rank_histogram(args.shape, args.samples, args.r_max, cfg,
                                  args.seed, args.real)
    return h.to_dict(), h.csv_rows(), "histogram"


def cmd_binaryform(args):
    rep = ex.binary_form_experiment(args.degree, args.samples, args.seed)
    return rep, _scalar_rows(rep), "scalars"


def cmd_survey(args):
    cfg = SolverConfig(restarts=args.restarts, seed=args.seed)
    s = ex.approximation_survey(args.shape, args.rank, args.samples, cfg,
                                args.seed, args.match_tol)
    return s.to_dict(), s.csv_rows(), "scalars"


def cmd_coincidence(args):
    cfg = SolverConfig(restarts=args.restarts, seed=args.seed)
    extra = (paper_222_tensor(),) if args.include_paper222 else ()
    rep = ex.rank_coincidence_experiment(args.shape, args.rank, args.samples,
                                         cfg, args.seed, extra)
    return rep, _scalar_rows(rep), "scalars"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nnrank",
        description="Nonnegative tensor rank workbench.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rank", help="bounds on the nonnegative rank")
    p.add_argument("tensor")
    p.add_argument("--r-max", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("construct", help="built-in tensors")
    p.add_argument("kind", choices=["latin", "paper222"])
    p.add_argument("n", nargs="?", type=int)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("approx", help="best rank-r approximation")
    p.add_argument("tensor")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--real", action="store_true")
    _solver_flags(p)
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("identifiability", help="identifiability verdicts")
    p.add_argument("--shape", type=_ints, required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--symmetric", type=_ints, default=None,
                   help="d,n for symmetric tensors of order d on n variables")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_identifiability)

    p = sub.add_parser("generic-rank", help="generic rank via Jacobian ranks")
    p.add_argument("--shape", type=_ints, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generic_rank)

    p = sub.add_parser("uniqueness", help="restart-clustering uniqueness test")
    p.add_argument("tensor")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--match-tol", type=float, default=1e-5)
    _solver_flags(p, restarts=20)
    p.set_defaults(func=cmd_uniqueness)

    p = sub.add_parser("cells", help="zero-pattern cell of a decomposition")
    p.add_argument("decomposition")
    p.add_argument("--supp-eps", type=float, default=1e-7)
    p.set_defaults(func=cmd_cells)

    p = sub.add_parser("typical", help="typical-rank histogram")
    p.add_argument("--shape", type=_ints, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--r-max", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--real", action="store_true")
    p.set_defaults(func=cmd_typical)

    p = sub.add_parser("binaryform", help="real-root fraction of binary forms")
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_binaryform)

    p = sub.add_parser("survey", help="boundary/uniqueness survey")
    p.add_argument("--shape", type=_ints, required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--match-tol", type=float, default=1e-5)
    p.set_defaults(func=cmd_survey)

    p = sub.add_parser("coincidence", help="real/nonnegative rank coincidence")
    p.add_argument("--shape", type=_ints, required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--include-paper222", action="store_true")
    p.set_defaults(func=cmd_coincidence)

    for p in sub.choices.values():
        p.add_argument("--csv", default=None,
                       help="also write a CSV table and a gnuplot script")
    return ap


def _finite(obj) -> bool:
    if isinstance(obj, float):
        return math.isfinite(obj)
    if isinstance(obj, dict):
        return all(_finite(v) for v in obj.values())
    if isinstance(obj, (list, tuple)):
        return all(_finite(v) for v in obj)
    return True


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ARGS
    try:
        report, rows, kind = args.func(args)
        if not _finite(report):
            raise NumericalFailure("non-finite value in report")
    except (FloatingPointError, NumericalFailure) as exc:
        print(f"nnrank: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"nnrank: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    print(json.dumps(report, indent=2))
    if args.csv:
        ex.write_csv(rows, args.csv)
        ex.write_plot_script(args.csv, kind)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
