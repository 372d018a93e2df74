"""Command-line entry point.

Publisher-side commands (``synth``, ``encrypt``) read raw data; consumer-side
commands (``estimate``, ``cv``, ``evaluate``) only read the release and its
sidecar, unless ``--proxy-truth`` explicitly asks for the raw file.

Exit codes: 0 success, 2 configuration or validation error, 3 numerical
failure (with ``--strict``), 4 I/O error.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluate as ev
from . import graph_model as gm
from . import io
from .estimator import LassoConfig, Solver, debias, encrypted_covariance, solve
from .modelselect import Rule, cv_lambda
from .privacy import Family, NoiseSpec, center, encrypt, privacy_report, snr_accounting

logger = logging.getLogger("dpglasso")

SEED_ENV = "DPGLASSO_SEED"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# parser


def _add_common(sp):
    sp.add_argument("--config", help="JSON file of option defaults (keys are option names)")
    sp.add_argument("--seed", type=int, default=None, help=f"default from ${SEED_ENV}, else 0")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    sp.add_argument("--out", default=".", help="output directory")
    sp.add_argument("-v", "--verbose", action="store_true")


def _add_solver(sp):
    sp.add_argument("--solver", choices=[s.value for s in Solver], default="admm")
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-outer", type=int, default=None)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--strict", action="store_true", help="exit 3 if the solver does not converge")


def _add_cv(sp):
    sp.add_argument("--k-folds", type=int, default=5)
    sp.add_argument("--rule", choices=[r.value for r in Rule], default="min_mse")
    sp.add_argument("--grid", type=float, nargs="+", default=None, help="descending lambda values")


def _add_generator(sp):
    sp.add_argument("--generator", choices=["chain", "sparse"], default="chain")
    sp.add_argument("--p", type=int, default=50)
    sp.add_argument("--n", type=int, default=5000)
    sp.add_argument("--sparsity", type=float, default=0.99)
    sp.add_argument("--integer-scale", type=float, default=None,
                    help="round(X * scale) to produce integer data")


def _add_noise(sp):
    sp.add_argument("--family", choices=[f.value for f in Family], default="continuous")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--sigma", type=float, default=None)
    g.add_argument("--snr-db", type=float, default=None)
    sp.add_argument("--delta-f", type=float, default=None, help="sensitivity (default from data)")


def build_parser():
    parser = argparse.ArgumentParser(prog="dpglasso", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a precision matrix and Gaussian data")
    _add_common(sp)
    _add_generator(sp)

    sp = sub.add_parser("encrypt", help="add noise to a data CSV and write the release")
    _add_common(sp)
    sp.add_argument("--data", help="raw data CSV")
    _add_noise(sp)

    for name, hlp in (("estimate", "debiased graphical lasso on a release"),
                      ("cv", "cross-validate lambda on a release")):
        sp = sub.add_parser(name, help=hlp)
        _add_common(sp)
        sp.add_argument("--data", help="encrypted data CSV")
        sp.add_argument("--sidecar", help="release JSON (default: release.json beside --data)")
        _add_solver(sp)
        _add_cv(sp)
        if name == "estimate":
            sp.add_argument("--lambda", dest="lam", type=float, default=None)
            sp.add_argument("--cv", action="store_true", help="choose lambda by cross-validation")

    sp = sub.add_parser("evaluate", help="ROC/AUC of an estimate against a truth edge set")
    _add_common(sp)
    sp.add_argument("--theta", help="estimated precision CSV")
    sp.add_argument("--truth", help="true edge CSV")
    sp.add_argument("--proxy-truth", action="store_true",
                    help="use vanilla glasso on --raw-data as the truth")
    sp.add_argument("--raw-data", help="raw data CSV (only read with --proxy-truth)")
    sp.add_argument("--solver", choices=[s.value for s in Solver], default="cd")
    _add_cv(sp)

    sp = sub.add_parser("trial", help="repeated-seed AUC experiment")
    _add_common(sp)
    _add_generator(sp)
    sp.add_argument("--family", choices=[f.value for f in Family], default="continuous")
    sp.add_argument("--snr-db", nargs="+", default=["none", "40", "20"],
                    help="noise levels in dB; 'none' means no noise")
    sp.add_argument("--seeds", type=int, nargs="+", default=None,
                    help="explicit seeds (default: --n-seeds seeds starting at --seed)")
    sp.add_argument("--n-seeds", type=int, default=10)
    sp.add_argument("--solver", choices=[s.value for s in Solver], default="cd")
    sp.add_argument("--lambda", dest="lam", default="cv", help="number or 'cv'")
    sp.add_argument("--truth-mode", choices=["true", "proxy"], default="true")
    sp.add_argument("--extended", action="store_true",
                    help="full-size sparse scenario (p=1000); slow")
    _add_cv(sp)

    sp = sub.add_parser("pipeline", help="synth, encrypt, estimate and evaluate in one go")
    _add_common(sp)
    _add_generator(sp)
    _add_noise(sp)
    _add_solver(sp)
    _add_cv(sp)
    sp.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="fixed lambda (default: cross-validate)")
    return parser


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def parse_args(argv=None):
    """Parse ``argv``; options from ``--config`` act as defaults the command line overrides."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        sp = _subparser(parser, args.command)
        dests = {a.dest for a in sp._actions} - {"help", "config"}
        opts = {}
        for key, val in cfg.items():
            dest = key.lstrip("-").replace("-", "_")
            dest = "lam" if dest == "lambda" else dest
            if dest not in dests:
                raise ConfigError(f"unknown config key {key!r} for command {args.command!r}")
            opts[dest] = val
        sp.set_defaults(**opts)
        args = parser.parse_args(argv)
    args.seed = resolve_seed(args.seed)
    try:
        validate(args)
    except TypeError as exc:
        raise ConfigError(f"config value has the wrong type: {exc}") from exc
    return args


def resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"${SEED_ENV} must be an integer, got {env!r}") from None


def _check(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate(args):
    """Range checks on every numeric option present."""
    g = lambda k: getattr(args, k, None)  # noqa: E731
    _check(args.seed >= 0, "seed must be non-negative")
    _check(args.jobs == -1 or args.jobs >= 1, "--jobs must be >= 1 (or -1 for all cores)")
    if g("p") is not None:
        _check(args.p >= 2, "--p must be >= 2")
    if g("n") is not None:
        _check(args.n >= 1, "--n must be >= 1")
    if g("sparsity") is not None:
        _check(0.0 <= args.sparsity <= 1.0, "--sparsity must lie in [0, 1]")
    if g("integer_scale") is not None:
        _check(args.integer_scale > 0, "--integer-scale must be positive")
    if g("sigma") is not None:
        _check(args.sigma > 0, "--sigma must be positive")
    if g("delta_f") is not None:
        _check(args.delta_f > 0, "--delta-f must be positive")
    if g("tol") is not None:
        _check(args.tol > 0, "--tol must be positive")
    if g("rho") is not None:
        _check(args.rho > 0, "--rho must be positive")
    if g("max_outer") is not None:
        _check(args.max_outer >= 1, "--max-outer must be >= 1")
    if g("k_folds") is not None:
        _check(args.k_folds >= 2, "--k-folds must be >= 2")
    if g("grid") is not None:
        _check(all(x > 0 for x in args.grid), "--grid values must be positive")
        _check(all(a >= b for a, b in zip(args.grid, args.grid[1:])), "--grid must be descending")
    if isinstance(g("lam"), (int, float)):
        _check(args.lam > 0, "--lambda must be positive")
    if g("n_seeds") is not None:
        _check(args.n_seeds >= 1, "--n-seeds must be >= 1")


# ---------------------------------------------------------------------------
# commands


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need(args, name):
    val = getattr(args, name)
    if val is None:
        raise ConfigError(f"--{name.replace('_', '-')} is required for {args.command}")
    return val


def _lasso_cfg(args, lam):
    return LassoConfig(lam=lam, tol=args.tol, max_outer=args.max_outer, rho=args.rho)


def _synth_scenario(args, seed):
    return ev.Scenario(generator=args.generator, p=args.p, n=args.n, sparsity=args.sparsity,
                       seeds=[seed], integer_scale=args.integer_scale)


def cmd_synth(args):
    out = _outdir(args)
    theta, X = ev.make_data(_synth_scenario(args, args.seed), args.seed)
    io.write_matrix(out / "data.csv", X)
    io.write_matrix(out / "precision.csv", theta)
    io.write_edges(out / "edges.csv", gm.adjacency_of(theta, 0.0))
    io.write_json(out / "synth.json", {
        "generator": args.generator, "p": args.p, "n": args.n, "seed": args.seed,
        "sparsity": args.sparsity if args.generator == "sparse" else None,
        "integer_scale": args.integer_scale,
    })
    return {"data": str(out / "data.csv")}


def _encrypt_matrix(X, args, out):
    family = Family(args.family)
    Xc = center(X)
    if args.sigma is None and args.snr_db is None:
        raise ConfigError("give --sigma or --snr-db")
    sigma = args.sigma if args.sigma is not None else snr_accounting(Xc, args.snr_db, args.delta_f)[0]
    spec = NoiseSpec(family, sigma, args.seed)
    # accounting first, so a violated assumption leaves no partial output
    report = privacy_report(Xc, family, sigma, args.delta_f)
    release = encrypt(X if family is Family.DISCRETE else Xc, spec)
    io.write_release(out, release)
    io.write_json(out / "privacy.json", report.to_dict())
    return release, report


def cmd_encrypt(args):
    out = _outdir(args)
    X = io.read_matrix(_need(args, "data"))
    release, report = _encrypt_matrix(X, args, out)
    return {"sigma": release.sigma, "mu": report.mu, "epsilon_simple": report.epsilon_simple}


def _load_release(args):
    data = Path(_need(args, "data"))
    sidecar = Path(args.sidecar) if args.sidecar else data.with_name("release.json")
    return io.read_release(data, sidecar)


def _write_cv(out, cv):
    io.write_json(out / "cv.json", cv.to_dict())
    io.write_csv_rows(out / "cv.csv", cv.table())


def _cv(release, args):
    return cv_lambda(release, args.grid, args.k_folds, args.solver, args.seed,
                     _lasso_cfg(args, 1.0), args.rule, n_jobs=args.jobs)


def _estimate(release, args, out, lam):
    cv = None
    if lam is None:
        cv = _cv(release, args)
        _write_cv(out, cv)
        lam = cv.chosen_lambda
    s_hat = debias(encrypted_covariance(release), release)
    theta, diag = solve(s_hat, _lasso_cfg(args, lam), args.solver)
    io.write_matrix(out / "theta.csv", theta)
    io.write_edges(out / "edges.csv", gm.adjacency_of(theta, gm.EDGE_TOL))
    d = diag.to_dict()
    d.update(lam=lam, indefinite=bool(s_hat.indefinite), n_edges=gm.edge_count(theta))
    io.write_json(out / "diagnostics.json", d)
    if not diag.converged:
        msg = f"{args.solver} did not converge at lambda={lam:g} (kkt={diag.kkt_residual:.3g})"
        if args.strict:
            raise NumericalFailure(msg)
        logger.warning(msg)
    return theta, diag, lam


def cmd_estimate(args):
    if args.lam is None and not args.cv:
        raise ConfigError("give --lambda or --cv")
    if args.lam is not None and args.cv:
        raise ConfigError("--lambda and --cv are mutually exclusive")
    out = _outdir(args)
    _, diag, lam = _estimate(_load_release(args), args, out, args.lam)
    return {"lambda": lam, "converged": diag.converged, "kkt_residual": diag.kkt_residual}


def cmd_cv(args):
    out = _outdir(args)
    cv = _cv(_load_release(args), args)
    _write_cv(out, cv)
    return {"chosen_lambda": cv.chosen_lambda, "rule": cv.rule.value}


def cmd_evaluate(args):
    out = _outdir(args)
    theta = io.read_matrix(_need(args, "theta"))
    p = theta.shape[0]
    info = {}
    if args.proxy_truth:
        raw = io.read_matrix(_need(args, "raw_data"))
        proxy = ev.proxy_truth(raw, solver=args.solver, grid=args.grid, k_folds=args.k_folds,
                               seed=args.seed, rule=args.rule)
        truth = proxy.edges
        info.update(proxy_lambda=proxy.lam, low_confidence=proxy.low_confidence)
        io.write_edges(out / "proxy_edges.csv", truth)
    else:
        if args.raw_data:
            raise ConfigError("--raw-data is only read together with --proxy-truth")
        truth = io.read_edges(_need(args, "truth"), p)
    roc = ev.roc_auc(theta, truth)
    io.write_csv_rows(out / "roc.csv", roc.points)
    info.update(auc=roc.auc, n_true_edges=len(truth), n_pairs=p * (p - 1) // 2)
    io.write_json(out / "evaluation.json", info)
    return info


def _snr_levels(values):
    levels = []
    for v in values:
        if v is None or str(v).lower() == "none":
            levels.append(None)
        else:
            try:
                levels.append(float(v))
            except ValueError:
                raise ConfigError(f"bad --snr-db value {v!r}") from None
    return levels


def _trial_lambda(val):
    if isinstance(val, str) and val.lower() == "cv":
        return "cv"
    try:
        lam = float(val)
    except (TypeError, ValueError):
        raise ConfigError(f"--lambda must be a number or 'cv', got {val!r}") from None
    _check(lam > 0, "--lambda must be positive")
    return lam


#: Column order of the headerless trial CSV.
TRIAL_HEADER = ("snr_db", "epsilon_simple", "mean_auc", "std_auc", "n_seeds")


def cmd_trial(args):
    out = _outdir(args)
    p, n, generator, sparsity = args.p, args.n, args.generator, args.sparsity
    if args.extended:
        generator, p, sparsity = "sparse", 1000, args.sparsity
    seeds = args.seeds if args.seeds else list(range(args.seed, args.seed + args.n_seeds))
    scen = ev.Scenario(generator=generator, p=p, n=n, sparsity=sparsity,
                       snr_db=_snr_levels(args.snr_db), seeds=seeds, family=args.family,
                       solver=args.solver, lam=_trial_lambda(args.lam), rule=args.rule,
                       k_folds=args.k_folds, grid=args.grid, truth=args.truth_mode,
                       integer_scale=args.integer_scale)
    reports = ev.run_trials(scen, n_jobs=args.jobs)
    # wall-clock times go to their own file so trial.json is reproducible byte for byte
    io.write_json(out / "trial.json",
                  [{k: v for k, v in r.to_dict().items() if k != "runtimes"} for r in reports])
    io.write_json(out / "timing.json", [{"snr_db": r.snr_db, "seeds": r.seeds,
                                         "seconds": r.runtimes} for r in reports])
    rows = [("none" if r.snr_db is None else r.snr_db, r.epsilon_simple, r.mean, r.std,
             len(r.aucs)) for r in reports]
    io.write_csv_rows(out / "trial.csv", rows)
    return {"rows": [dict(zip(TRIAL_HEADER, r)) for r in rows]}


def cmd_pipeline(args):
    root = _outdir(args)
    dirs = {k: root / k for k in ("synth", "release", "estimate", "evaluate")}
    for d in dirs.values():
        d.mkdir(exist_ok=True)
    theta_true, X = ev.make_data(_synth_scenario(args, args.seed), args.seed)
    truth = gm.adjacency_of(theta_true, 0.0)
    io.write_matrix(dirs["synth"] / "data.csv", X)
    io.write_matrix(dirs["synth"] / "precision.csv", theta_true)
    io.write_edges(dirs["synth"] / "edges.csv", truth)
    release, report = _encrypt_matrix(X, args, dirs["release"])
    theta, diag, lam = _estimate(release, args, dirs["estimate"], args.lam)
    roc = ev.roc_auc(theta, truth)
    io.write_csv_rows(dirs["evaluate"] / "roc.csv", roc.points)
    info = {"auc": roc.auc, "lambda": lam, "sigma": release.sigma, "mu": report.mu,
            "epsilon_simple": report.epsilon_simple, "converged": diag.converged}
    io.write_json(dirs["evaluate"] / "evaluation.json", info)
    return info


COMMANDS = {
    "synth": cmd_synth,
    "encrypt": cmd_encrypt,
    "estimate": cmd_estimate,
    "cv": cmd_cv,
    "evaluate": cmd_evaluate,
    "trial": cmd_trial,
    "pipeline": cmd_pipeline,
}


def main(argv=None):
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    logger.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        result = COMMANDS[args.command](args)
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(io._clean(result), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
