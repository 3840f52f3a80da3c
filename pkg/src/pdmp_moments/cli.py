"""pdmp-moments: validate, solve, simulate, casestudy.

Exit codes: 0 success, 2 bad input, 3 moments infinite (unstable model),
4 numerical failure. Reports and diagnostics go to stderr. Results go to
--out, or to stdout when --out is omitted.
"""
from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import replace

import numpy as np

from . import __version__
from . import distributions as dists
from . import files, gene_expression, simulator, solver, tolerances
from .errors import InfeasibleError, InputError, NumericalError

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4


def _err(msg):
    print(msg, file=sys.stderr)


def _emit(text, out):
    if out:
        files.write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _tol(args):
    if args.tol is not None and not (math.isfinite(args.tol) and args.tol > 0):
        raise InputError(f"--tol must be a positive number, got {args.tol}")
    return tolerances.with_quad_tol(args.tol)


def cmd_validate(args):
    model, _ = files.read_model(args.model)
    _err(f"{args.model}: valid {model.dim}-dimensional model with {len(model.poisson)} Poisson famil"
         f"{'y' if len(model.poisson) == 1 else 'ies'} and {model.dist.kind} renewal times")
    return EXIT_OK


def cmd_solve(args):
    tol = _tol(args)
    model, digest = files.read_model(args.model)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sol = solver.solve(model, args.order, tol)
    for w in caught:
        _err(f"warning: {w.message}")
    for rep in sol.stability:
        _err(f"order {rep.order}: spectral radius of {rep.matrix_checked} = {rep.spectral_radius:.6g}")
    _emit(files.dumps(files.result_to_dict(sol, digest, tol)), args.out)
    return EXIT_OK


def _z(est, se, ref):
    est, se, ref = (np.asarray(v, dtype=float) for v in (est, se, ref))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (est - ref) / se
    return [[None if not math.isfinite(v) else v for v in row] for row in np.atleast_2d(z).tolist()]


def _flatten(items):
    for x in items:
        if isinstance(x, list):
            yield from _flatten(x)
        else:
            yield x


def cmd_simulate(args):
    model, digest = files.read_model(args.model)
    samplers = simulator.make_samplers(model, args.sampler, offsets=args.offsets, p=args.p, clamp=args.clamp)
    stats = simulator.estimate_stationary_moments(
        model, samplers, n_traj=args.n_traj, n_cycles_burnin=args.burnin_cycles, seed=args.seed, workers=args.workers,
    )
    doc = {
        "tool_version": __version__,
        "input_digest": digest,
        "seed": args.seed,
        "sampler": samplers.general.kind,
        "offsets": [o.kind for o in samplers.poisson],
        **stats.to_dict(),
    }
    if args.compare:
        try:
            sol = solver.solve(model, 2)
        except InfeasibleError:
            sol = solver.solve(model, 1)
        ref = {"mean": sol.mean.tolist()}
        z = {"mean": _z(stats.mean, stats.mean_se, sol.mean)[0]}
        if sol.second_moment is not None:
            ref["second_moment"] = sol.second_moment.tolist()
            ref["cv2"] = [None if not math.isfinite(v) else v for v in sol.cv2.tolist()]
            z["second_moment"] = _z(stats.second_moment, stats.second_moment_se, sol.second_moment)
            z["cv2"] = _z(stats.cv2, stats.cv2_se, sol.cv2)[0]
        doc["closed_form"] = ref
        doc["z_scores"] = z
        flat = [abs(v) for v in _flatten(z.values()) if v is not None]
        if flat:
            _err(f"largest |z| against the closed form: {max(flat):.3g}")
    if args.events_csv:
        traj = simulator.simulate_trajectory(model, samplers, t_end=args.t_end, seed=args.seed)
        files.write_atomic(args.events_csv, traj.to_csv())
    _emit(files.dumps(doc), args.out)
    return EXIT_OK


def _protein_params(args):
    p = gene_expression.PRESETS[args.preset]
    updates = {k: getattr(args, k) for k in ("k", "U_mean", "U_second", "gamma", "b") if getattr(args, k) is not None}
    mean_T = p.T_dist.mean if args.T_mean is None else args.T_mean
    cv2T = p.T_dist.cv2 if args.cv2T is None else args.cv2T
    if not (mean_T > 0 and cv2T >= 0):
        raise InputError("--T-mean must be positive and --cv2T non-negative")
    law = dists.Deterministic(mean_T) if cv2T == 0 else dists.Gamma.from_mean_cv2(mean_T, cv2T)
    return replace(p, T_dist=law, **updates)


def _grid(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"--grid must be comma-separated numbers, got {text!r}") from exc
    if not values or not all(math.isfinite(v) for v in values):
        raise InputError("--grid needs at least one finite value")
    return values


def cmd_casestudy(args):
    p = _protein_params(args)
    tol = _tol(args)
    grid = _grid(args.grid) if args.grid else None
    if args.sweep == "cvT":
        table = gene_expression.sweep_noise_vs_cvT(p, grid, hold_mean=args.hold_mean, tol=tol)
    elif args.sweep == "gamma":
        table = gene_expression.sweep_noise_vs_gamma(p, grid, hold_mean=args.hold_mean, tol=tol)
    else:
        dec = gene_expression.protein_cv2(p, tol)
        table = gene_expression.SweepTable(
            ("gamma", "k", "mean", "cc", "synth", "part", "total"),
            np.array([[p.gamma, p.k, dec.mean, dec.cc, dec.synth, dec.part, dec.total_cv2]]),
        )
    _emit(table.to_csv(), args.out)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="pdmp-moments", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a model file")
    v.add_argument("model")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("solve", help="exact stationary moments")
    s.add_argument("model")
    s.add_argument("--order", type=int, choices=(1, 2), default=2)
    s.add_argument("--out")
    s.add_argument("--tol", type=float, help="absolute and relative quadrature tolerance (default 1e-10)")
    s.set_defaults(func=cmd_solve)

    m = sub.add_parser("simulate", help="Monte Carlo estimate of the stationary moments")
    m.add_argument("model")
    m.add_argument("--n-traj", type=int, default=10_000)
    m.add_argument("--burnin-cycles", type=int, default=50)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--sampler", choices=sorted(simulator.GENERAL_SAMPLERS), default="moment-matched-gaussian")
    m.add_argument("--p", type=float, default=0.5, help="binomial-partition probability")
    m.add_argument("--clamp", action="store_true", help="floor gaussian resets at zero (biases moments)")
    m.add_argument("--offsets", choices=("auto", "fixed", "gaussian", "gamma"), default="auto",
                   help="law of the Poisson-reset offsets")
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--compare", action="store_true", help="append closed-form values and z-scores")
    m.add_argument("--events-csv", help="also write the event log of one trajectory")
    m.add_argument("--t-end", type=float, default=10.0, help="horizon of the --events-csv trajectory")
    m.add_argument("--out")
    m.set_defaults(func=cmd_simulate)

    c = sub.add_parser("casestudy", help="protein-noise decomposition and sweeps (CSV)")
    c.add_argument("--preset", choices=sorted(gene_expression.PRESETS), default="protein")
    c.add_argument("--k", type=float, help="burst rate")
    c.add_argument("--U-mean", dest="U_mean", type=float, help="mean burst size")
    c.add_argument("--U-second", dest="U_second", type=float, help="second moment of the burst size")
    c.add_argument("--gamma", type=float, help="decay rate")
    c.add_argument("--b", type=float, help="partitioning coefficient")
    c.add_argument("--T-mean", dest="T_mean", type=float, help="mean cell-cycle time")
    c.add_argument("--cv2T", type=float, help="CV^2 of the cell-cycle time (0: deterministic, else gamma)")
    c.add_argument("--sweep", choices=("cvT", "gamma"))
    c.add_argument("--grid", help="comma-separated sweep values")
    c.add_argument("--hold-mean", action=argparse.BooleanOptionalAction, default=True,
                   help="rescale k so every row has the reference mean")
    c.add_argument("--tol", type=float)
    c.add_argument("--out")
    c.set_defaults(func=cmd_casestudy)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InfeasibleError as exc:
        _err(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    except InputError as exc:
        _err(f"error: {exc}")
        return EXIT_INPUT
    except NumericalError as exc:
        _err(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except OSError as exc:
        _err(f"error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
