"""Command-line interface.

    lqg-signaling solve        --spec game.json [--out DIR]
    lqg-signaling steady-state --spec game.json
    lqg-signaling existence    --spec game.json
    lqg-signaling simulate     --spec game.json --mc-n 1000 --seed 0
    lqg-signaling verify       --spec game.json [--path solve_report.json]

Reports are JSON with sorted keys and no timestamps, so identical inputs give
identical bytes. Exit codes: 0 success, 1 verification ran but a verdict
failed, 2 invalid spec, 3 non-convergence or singular stage, 4 I/O error.
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .existence import direction_survey, existence_check, normalized_gain
from .game import SpecFormatError, load_spec, spec_hash, validate_spec
from .runtime import EquilibriumPath, SimulationConfig, build_equilibrium_path, posterior_check, simulate
from .solver import SolverError, SolverOptions, ValueCache
from .steady_state import HEURISTIC_NOTE, default_init, solve_steady_state
from .verify import CLASS_NOTE, deviation_suite, value_consistency_test

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_INVALID, EXIT_NONCONVERGENCE, EXIT_IO = 0, 1, 2, 3, 4

REPORT_NAMES = {
    "solve": "solve_report.json",
    "steady-state": "steady_state_report.json",
    "existence": "existence_report.json",
    "simulate": "simulate_report.json",
    "verify": "verify_report.json",
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _dumps(doc):
    return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"


def _options(args):
    return SolverOptions(
        residual_tol=args.tol, max_iter=args.max_iter, damping=args.damping,
        max_stage_solves=args.max_stage_solves,
    )


def _load(args):
    try:
        spec = load_spec(args.spec)
    except OSError as exc:
        raise CliError(f"cannot read spec: {exc}", EXIT_IO) from exc
    except SpecFormatError as exc:
        raise CliError(f"invalid spec: {exc}", EXIT_INVALID) from exc
    report = validate_spec(spec)
    if not report.ok:
        names = ", ".join(c.name for c in report.failed() if not c.name.startswith("strict_pd"))
        raise CliError(f"spec failed validation: {names}", EXIT_INVALID)
    if args.horizon_override is not None:
        try:
            spec = spec.with_horizon(args.horizon_override)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_INVALID) from exc
    return spec, report


def _header(args, spec, report, **extra):
    doc = {
        "tool": "lqg-signaling",
        "version": __version__,
        "command": args.command,
        "spec_hash": spec_hash(spec),
        "horizon": spec.horizon,
        "validation": report.to_dict(),
        "tolerances": {"residual_tol": args.tol, "max_iter": args.max_iter, "damping": args.damping},
    }
    doc.update(extra)
    return doc


def _solve_path(args, spec):
    opts = _options(args)
    cache = ValueCache(opts.cache_grid)
    try:
        return build_equilibrium_path(spec, cache, opts), None, cache
    except SolverError as exc:
        return getattr(exc, "partial", None), exc, cache


def _error_doc(exc):
    return {
        "type": type(exc).__name__,
        "message": str(exc),
        "stage": getattr(exc, "stage", None),
        "trace": [{"t": t, "Sigma": [s.tolist() for s in sig]} for t, sig in getattr(exc, "trace", [])],
    }


def cmd_solve(args):
    spec, report = _load(args)
    path, err, cache = _solve_path(args, spec)
    doc = _header(args, spec, report)
    doc["stage_solves"] = cache.solves
    if path is not None:
        doc["path"] = path.to_dict()
        doc["covariance_path_residual"] = path.covariance_residual(spec)
    doc["converged"] = err is None
    if err is not None:
        doc["error"] = _error_doc(err)
        return doc, EXIT_NONCONVERGENCE
    return doc, EXIT_OK


def _steady(args, spec):
    init = None
    if args.init == "identity":
        L0, S0, V0 = default_init(spec)
        init = (tuple(-np.eye(spec.m[i], spec.n[i]) for i in range(2)), S0, V0)
    return solve_steady_state(spec, init=init, tol=args.ss_tol, max_iter=args.max_iter,
                              damping=args.damping, order=args.order, options=_options(args))


def _steady_doc(spec, sol):
    return {
        "note": HEURISTIC_NOTE,
        "L": list(sol.L),
        "Sigma": list(sol.sigma),
        "V": list(sol.V),
        "M": sol.M,
        "rho_increment": list(sol.rho_increment),
        "residuals": sol.residuals,
        "iterations": sol.iterations,
        "rank": sol.revelation(spec),
        "diagnostics": sol.diagnostics,
    }


def cmd_steady_state(args):
    spec, report = _load(args)
    doc = _header(args, spec, report, init=args.init, order=args.order, steady_tol=args.ss_tol)
    try:
        sol = _steady(args, spec)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc
    except SolverError as exc:
        doc["converged"] = False
        doc["error"] = _error_doc(exc)
        return doc, EXIT_NONCONVERGENCE
    doc["converged"] = True
    doc["steady_state"] = _steady_doc(spec, sol)
    if all(k == 1 for k in spec.m):
        dirs = tuple(normalized_gain(sol.L[i], sol.sigma[i])[1] for i in range(2))
        doc["existence"] = existence_check(spec, sol.sigma, sol.V, dirs).to_dict()
    return doc, EXIT_OK


def cmd_existence(args):
    spec, report = _load(args)
    if any(k != 1 for k in spec.m):
        raise CliError("existence test needs m = 1 for both players", EXIT_INVALID)
    doc = _header(args, spec, report, init=args.init, order=args.order, steady_tol=args.ss_tol)
    try:
        sol = _steady(args, spec)
    except SolverError as exc:
        doc["error"] = _error_doc(exc)
        return doc, EXIT_NONCONVERGENCE
    norm = [normalized_gain(sol.L[i], sol.sigma[i]) for i in range(2)]
    rep = existence_check(spec, sol.sigma, sol.V, tuple(d for _, d in norm))
    doc["steady_state"] = _steady_doc(spec, sol)
    doc["normalized_gain"] = [lam for lam, _ in norm]
    doc["existence"] = rep.to_dict()
    survey = []
    for i in range(2):
        dirs, vals = direction_survey(spec, i, sol.sigma[i], sol.V[i], count=args.survey)
        survey.append({"directions": dirs, "lDl": vals, "min": float(vals.min())})
    doc["survey"] = survey
    return doc, EXIT_OK


def cmd_simulate(args):
    spec, report = _load(args)
    path, err, _ = _solve_path(args, spec)
    doc = _header(args, spec, report, seed=args.seed, n_traj=args.mc_n)
    if err is not None:
        doc["error"] = _error_doc(err)
        return doc, EXIT_NONCONVERGENCE
    ens = simulate(spec, path, SimulationConfig(n_traj=args.mc_n, seed=args.seed))
    csv_path = Path(args.out or ".") / "trajectories.csv"
    try:
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        ens.to_csv(spec, csv_path)
    except OSError as exc:
        raise CliError(f"cannot write {csv_path}: {exc}", EXIT_IO) from exc
    doc["csv"] = csv_path.name
    doc["columns"] = ens.csv_header(spec)
    doc["mean_cost"] = ens.cost.mean(axis=0)
    return doc, EXIT_OK


def cmd_verify(args):
    spec, report = _load(args)
    if args.path:
        try:
            src = json.loads(Path(args.path).read_text())
            path = EquilibriumPath.from_dict(src.get("path", src))
        except OSError as exc:
            raise CliError(f"cannot read path: {exc}", EXIT_IO) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(f"invalid path file: {exc}", EXIT_INVALID) from exc
        if path.horizon != spec.horizon:
            raise CliError(f"path has {path.horizon} stages, spec has {spec.horizon}", EXIT_INVALID)
    else:
        path, err, _ = _solve_path(args, spec)
        if err is not None:
            doc = _header(args, spec, report)
            doc["error"] = _error_doc(err)
            return doc, EXIT_NONCONVERGENCE
    cfg = SimulationConfig(n_traj=args.mc_n, seed=args.seed)
    doc = _header(args, spec, report, seed=args.seed, n_traj=args.mc_n, path_source=args.path and Path(args.path).name)
    doc["note"] = CLASS_NOTE
    doc["deviations"] = deviation_suite(spec, path, cfg, count=args.deviations, epsilon=args.epsilon,
                                        dev_seed=args.dev_seed, k_se=args.k_se)
    doc["value_consistency"] = value_consistency_test(spec, path, cfg)
    if cfg.n_traj >= 10_000:
        doc["posterior"] = posterior_check(spec, path, cfg, t=min(2, spec.horizon + 1))
    doc["passed"] = bool(doc["deviations"]["passed"] and doc["value_consistency"]["passed"]
                         and doc.get("posterior", {"passed": True})["passed"])
    return doc, EXIT_OK if doc["passed"] else EXIT_VERIFY_FAILED


COMMANDS = {
    "solve": cmd_solve,
    "steady-state": cmd_steady_state,
    "existence": cmd_existence,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser():
    p = argparse.ArgumentParser(prog="lqg-signaling", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--spec", required=True, help="game-spec JSON file")
        s.add_argument("--out", help="output directory (report printed to stdout if omitted)")
        s.add_argument("--tol", type=float, default=1e-9, help="gain-equation residual tolerance")
        s.add_argument("--max-iter", type=int, default=10_000, help="iteration budget per fixed point")
        s.add_argument("--damping", type=float, default=0.5, help="relaxation factor of the gain iteration")
        s.add_argument("--horizon-override", type=int, help="replace the horizon (time-homogeneous specs)")
        s.add_argument("--max-stage-solves", type=int, default=200_000, help="budget of distinct stage solves")
        s.add_argument("--mc-n", type=int, default=1000 if name == "simulate" else 100_000,
                       help="number of simulated trajectories")
        s.add_argument("--seed", type=int, default=0, help="master seed of the simulation")
        if name in ("steady-state", "existence"):
            s.add_argument("--init", choices=("default", "identity"), default="default",
                           help="gain seed: zero-continuation gain or -I")
            s.add_argument("--order", choices=("SLV", "LSV"), default="SLV", help="update order per sweep")
            s.add_argument("--ss-tol", type=float, default=1e-10, help="stationary residual tolerance")
        if name == "existence":
            s.add_argument("--survey", type=int, default=36, help="directions in the survey")
        if name == "verify":
            s.add_argument("--path", help="solve report (or bare path) to verify instead of solving")
            s.add_argument("--deviations", type=int, default=20, help="random deviations per player")
            s.add_argument("--epsilon", type=float, default=0.1, help="deviation magnitude")
            s.add_argument("--dev-seed", type=int, default=0, help="seed of the deviation directions")
            s.add_argument("--k-se", type=float, default=2.0, help="deviation pass threshold in SE")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        doc, code = COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    text = _dumps(doc)
    if args.out:
        out = Path(args.out) / REPORT_NAMES[args.command]
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(text)
        except OSError as exc:
            print(f"error: cannot write {out}: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
