"""Command line interface.

Subcommands ``bounds``, ``table``, ``solve``, ``experiment`` and
``tune-weights``. Exit codes: 0 on success, 2 when the
irrepresentability condition or the threshold fails (a JSON diagnostic
is printed), 3 when the solver does not converge.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .atomic_norm import AtomicNormSpec
from .bounds import IrrepresentabilityError, compute_bounds, default_spec
from .estimator import SolverConfig, solve
from .experiments import (FAMILIES, LAWS, GraphFamily, format_table,
                          make_instance, reproduce_table,
                          run_perturbation_experiment)
from .geometry import TauUndefinedError, tune_slope_weights
from .symmat import as_symmetric

EXIT_OK = 0
EXIT_CONDITION = 2
EXIT_SOLVER = 3

NORMS = ("l1", "linf", "slope")


def _csv_list(text, cast=str):
    return [cast(t.strip()) for t in text.split(",") if t.strip()]


def load_weights(path):
    """Read SLOPE weights from JSON: a list or ``{"weights": [...]}``."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data["weights"]
    return np.asarray(data, dtype=float)


def load_sigma(path):
    """Read a symmetric matrix from CSV or JSON (nested rows).

    Entries may be asymmetric by up to 1e-9; the result is symmetrized.
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
        if isinstance(data, dict):
            data = data.get("Sigma_hat", data.get("sigma"))
        X = np.asarray(data, dtype=float)
    else:
        X = np.loadtxt(path, delimiter=",", ndmin=2)
    return as_symmetric(X, atol=1e-9)


def _spec(args, instance=None, m=None):
    weights = load_weights(args.weights) if args.weights else None
    if instance is not None:
        return default_spec(args.norm, instance, weights)
    if args.norm == "l1":
        return AtomicNormSpec.l1(m)
    if args.norm == "linf":
        return AtomicNormSpec.linf(m)
    if weights is None:
        raise SystemExit("slope needs --weights when no graph is given")
    return AtomicNormSpec.slope(weights)


def _diagnostic(err):
    if isinstance(err, IrrepresentabilityError):
        return {"error": "irrepresentability", "lhs": err.lhs, "tau": err.tau,
                "message": str(err)}
    return {"error": "tau_undefined", "dual_value": err.dual_value,
            "message": str(err)}


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def cmd_bounds(args):
    inst = make_instance(GraphFamily(args.family, args.p))
    spec = _spec(args, inst)
    try:
        rep, _ = compute_bounds(inst, spec, ambient=args.ambient,
                                c_tight=args.c_tight)
    except (IrrepresentabilityError, TauUndefinedError) as e:
        _emit(_diagnostic(e))
        return EXIT_CONDITION
    _emit(rep.to_dict())
    return EXIT_OK


def cmd_table(args):
    p_list = _csv_list(args.p, int)
    families = _csv_list(args.families)
    cells = reproduce_table(args.which, p_list, families,
                            _csv_list(args.norms))
    if args.format == "text":
        sys.stdout.write(format_table(cells))
    else:
        _emit(cells)
    return EXIT_OK


def cmd_solve(args):
    S = load_sigma(args.sigma)
    p = S.shape[0]
    spec = _spec(args, m=p * (p - 1) // 2)
    cfg = SolverConfig(admm_rho=args.rho, max_iter=args.max_iter)
    res = solve(S, spec, args.lam, cfg)
    _emit(res.to_dict(), args.out)
    return EXIT_OK if res.converged else EXIT_SOLVER


def cmd_experiment(args):
    inst = make_instance(GraphFamily(args.family, args.p))
    spec = _spec(args, inst)
    try:
        res = run_perturbation_experiment(inst, spec, args.draws, args.scale,
                                          args.seed, law=args.law)
    except (IrrepresentabilityError, TauUndefinedError) as e:
        _emit(_diagnostic(e))
        return EXIT_CONDITION
    if args.out:
        Path(args.out).write_text(res.to_csv())
    _emit(res.summary())
    return EXIT_SOLVER if res.n_nonconverged else EXIT_OK


def cmd_tune_weights(args):
    w = tune_slope_weights(args.m, args.k, exact=True)
    out = {"m": args.m, "k": args.k, "weights": [float(v) for v in w]}
    if args.exact:
        out["fractions"] = [str(v) for v in w]
    _emit(out)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="atomglasso",
        description="Pattern-recovery bounds and experiments for "
                    "atomic-norm penalized precision matrix estimation.")
    sub = ap.add_subparsers(dest="command", required=True)

    def graph_args(sp):
        sp.add_argument("--family", choices=FAMILIES, required=True)
        sp.add_argument("--p", type=int, required=True)

    def norm_args(sp):
        sp.add_argument("--norm", choices=NORMS, default="l1")
        sp.add_argument("--weights", help="JSON file with SLOPE weights")

    sp = sub.add_parser("bounds", help="deviation bounds for a graph family")
    graph_args(sp)
    norm_args(sp)
    sp.add_argument("--ambient", choices=("linf", "mahalanobis"),
                    default="linf")
    sp.add_argument("--c-tight", action="store_true",
                    help="use the smallest valid constant c")
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("table", help="irrepresentability or delta table")
    sp.add_argument("--which", choices=("irrep", "delta"), required=True)
    sp.add_argument("--p", default="16", help="comma-separated dimensions")
    sp.add_argument("--families", default=",".join(FAMILIES))
    sp.add_argument("--norms", default=",".join(NORMS))
    sp.add_argument("--format", choices=("json", "text"), default="json")
    sp.set_defaults(func=cmd_table)

    sp = sub.add_parser("solve", help="solve the penalized estimator")
    sp.add_argument("--sigma", required=True, help="CSV or JSON matrix")
    norm_args(sp)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--max-iter", type=int, default=5000)
    sp.add_argument("--out", help="write JSON here instead of stdout")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("experiment", help="perturbation experiment")
    graph_args(sp)
    norm_args(sp)
    sp.add_argument("--draws", type=int, default=200)
    sp.add_argument("--scale", type=float, default=8.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--law", choices=LAWS, default="max-uniform")
    sp.add_argument("--out", help="CSV file for the scatter data")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("tune-weights", help="tuned SLOPE weights")
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--k", type=int)
    sp.add_argument("--exact", action="store_true",
                    help="also print the weights as fractions")
    sp.set_defaults(func=cmd_tune_weights)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
