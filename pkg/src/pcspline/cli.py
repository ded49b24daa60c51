"""Command-line entry point: ``pcspline <subcommand> ...``.

Subcommands write CSV (floats at 17 significant digits) and JSON only under
the output path or prefix they are given. Errors go to standard error as a
single JSON object and set a nonzero exit code that identifies the kind of
failure.
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import evaluate_design, make_basis, uniform_grid
from .dofmap import build_mapping, dof_grid_2d
from .errors import InvalidArgumentsError, PCSplineError
from .gmrf import structure_matrix
from .priors import (
    GammaSpec,
    _log_density_logtau,
    induced_density_at_log_ratio,
    scale_pc_prior,
)
from .sampler import (
    HyperPriorChoice,
    ProposalConfig,
    SmoothBlock,
    run_algorithm1,
    run_algorithm2,
)
from .simlab import (
    STANDARD_ARMS,
    RESULT_COLUMNS,
    FitSettings,
    PriorArm,
    rows_to_csv,
    run_study,
    scenario_from_dict,
    study_metadata,
    summarize,
)

logger = logging.getLogger("pcspline")


class UsageError(PCSplineError):
    code = 8


class InputFileError(PCSplineError):
    code = 7


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(v):
    return format(float(v), ".17g")


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue())


def write_matrix_csv(path, header, M):
    write_csv(path, header, ([float(v) for v in row] for row in np.asarray(M)))


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def read_table(path):
    """Read a headed CSV of numbers into ``{column: ndarray}``."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
    except (OSError, StopIteration) as exc:
        raise InputFileError(f"cannot read {path}: {exc}") from exc
    try:
        data = np.array(rows, dtype=float)
    except ValueError as exc:
        raise InputFileError(f"{path}: non-numeric entries ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise InputFileError(f"{path}: ragged rows or empty table")
    return {name.strip(): data[:, i] for i, name in enumerate(header)}


def _column(table, name, path):
    if name is None:
        return next(iter(table.values()))
    if name not in table:
        raise InputFileError(f"{path}: no column {name!r}; available {list(table)}")
    return table[name]


def _parse_domain(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise InvalidArgumentsError(f"--domain must be 'a,b', got {text!r}") from exc
    return lo, hi


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("PCSPLINE_SEED")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise InvalidArgumentsError(f"PCSPLINE_SEED must be an integer, got {env!r}") from exc
    return 0


def _design_from_args(args):
    """Design matrix from --x-file or a uniform grid of --n points."""
    if getattr(args, "x_file", None):
        x = _column(read_table(args.x_file), args.x_col, args.x_file)
    elif getattr(args, "n", None):
        lo, hi = _parse_domain(args.domain)
        x = uniform_grid(lo, hi, args.n)
    else:
        raise UsageError("give a design with --n or --x-file")
    if args.domain:
        lo, hi = _parse_domain(args.domain)
    else:
        lo, hi = float(np.min(x)), float(np.max(x))
    basis = make_basis(lo, hi, args.K, args.degree)
    return evaluate_design(basis, x)


def _add_design_args(p, need_x=True):
    p.add_argument("--domain", help="covariate domain 'a,b' (default: range of x, or 0,1 with --n)")
    p.add_argument("--K", type=int, default=20, help="number of B-spline basis functions")
    p.add_argument("--degree", type=int, default=3, help="B-spline degree")
    p.add_argument("--order", type=int, default=2, help="random-walk order r of the penalty")
    if need_x:
        p.add_argument("--n", type=int, help="use a regular grid of n covariate values on the domain")
        p.add_argument("--x-file", help="CSV with a header; covariate values")
        p.add_argument("--x-col", help="column of --x-file to use (default: first)")


def cmd_basis(args):
    if not args.domain:
        raise UsageError("basis requires --domain")
    D = _design_from_args(args)
    write_matrix_csv(args.out, [f"b{k + 1}" for k in range(D.K)], D.B)


def cmd_dof_map(args):
    if args.n and not args.domain:
        args.domain = "0,1"
    D = _design_from_args(args)
    S = structure_matrix(args.K, args.order)
    m = build_mapping(D, S, grid_points=args.grid_points)
    write_csv(args.out, ["logtau_beta", "d"], zip(m.grid_logtau, m.grid_d))
    if args.out_2d:
        log_te = np.linspace(-5.0, 5.0, args.eps_points)
        dd = dof_grid_2d(m, m.grid_logtau, log_te)
        rows = ((le, lb, dd[i, j]) for i, le in enumerate(log_te) for j, lb in enumerate(m.grid_logtau))
        write_csv(args.out_2d, ["logtau_eps", "logtau_beta", "d"], rows)
    if args.dump_R:
        write_matrix_csv(args.dump_R, [f"c{k + 1}" for k in range(S.K)], S.R)


def cmd_prior_density(args):
    if args.n and not args.domain:
        args.domain = "0,1"
    D = _design_from_args(args)
    S = structure_matrix(args.K, args.order)
    m = build_mapping(D, S, grid_points=args.grid_points)
    if args.kind == "pc":
        if args.U is None:
            raise UsageError("--kind pc requires --U")
        spec = scale_pc_prior(m, args.U, args.alpha, args.tau_eps)
        kp = ("pc", spec.theta)
    else:
        if args.a is None or args.b is None:
            raise UsageError("--kind gamma requires --a and --b")
        kp = ("gamma", GammaSpec(args.a, args.b))
    s = m.grid_logtau
    logtau = s + np.log(args.tau_eps)
    if args.scale == "logtau":
        dens = np.exp(_log_density_logtau(kp, logtau))
        write_csv(args.out, ["logtau_beta", "density"], zip(logtau, dens))
    else:
        d = m.d_of_log_ratio(s)
        dens = induced_density_at_log_ratio(m, kp, s, args.tau_eps)
        order = np.argsort(d)
        write_csv(args.out, ["d", "density"], zip(d[order], dens[order]))


def _quantiles(a):
    a = np.asarray(a, dtype=float)
    return {"mean": float(a.mean()), "q025": float(np.quantile(a, 0.025)),
            "q50": float(np.quantile(a, 0.5)), "q975": float(np.quantile(a, 0.975))}


def cmd_fit(args):
    table = read_table(args.data)
    x = _column(table, args.x_col, args.data)
    y = _column(table, args.y_col, args.data)
    lo, hi = _parse_domain(args.domain) if args.domain else (float(np.min(x)), float(np.max(x)))
    D = evaluate_design(make_basis(lo, hi, args.K, args.degree), x)
    S = structure_matrix(args.K, args.order)
    m = build_mapping(D, S)
    hyper = HyperPriorChoice.parse(args.hyper)
    seed = _seed(args)
    burn = args.burnin if args.burnin is not None else args.iters // 2
    kwargs = dict(cfg=ProposalConfig(args.T), n_iter=args.iters, burn_in=burn, thin=args.thin,
                  seed=seed, hyper=hyper, mapping=m)
    if args.prior == "pc":
        if args.U is None:
            raise UsageError("fit with the PC prior requires --U")
        draws = run_algorithm1(y, D, S, U=args.U, alpha=args.alpha, **kwargs)
    else:
        a, b = (float(v) for v in args.prior.split(":", 1)[1].split(","))
        draws = run_algorithm1(y, D, S, tau_beta_prior=GammaSpec(a, b), **kwargs)

    prefix = args.out_prefix
    its = burn + args.thin * (1 + np.arange(draws.n_draws))
    write_csv(f"{prefix}_trace.csv", ["iter", "tau_eps", "tau_beta", "theta", "d"],
              ((int(i), te, tb, th, d) for i, te, tb, th, d in
               zip(its, draws.tau_eps, draws.tau_beta[:, 0], draws.theta[:, 0], draws.dof[:, 0])))
    write_matrix_csv(f"{prefix}_beta.csv", [f"b{k + 1}" for k in range(S.K)], draws.beta[0])
    beta_mean = draws.beta_mean()
    summary = {
        "algorithm": 1,
        "settings": {"K": args.K, "degree": args.degree, "order": args.order, "U": args.U,
                     "alpha": args.alpha, "prior": args.prior, "hyper": str(hyper), "T": args.T,
                     "iters": args.iters, "burnin": burn, "thin": args.thin, "seed": seed,
                     "domain": [lo, hi]},
        "n_draws": draws.n_draws,
        "acceptance": draws.acceptance,
        "rejected_out_of_support": draws.rejected_out_of_support,
        "tau_eps": _quantiles(draws.tau_eps),
        "tau_beta": _quantiles(draws.tau_beta[:, 0]),
        "d": _quantiles(draws.dof[:, 0]),
        "beta_mean": beta_mean,
        "fitted_mean": D.B @ beta_mean,
    }
    write_json(f"{prefix}_summary.json", summary)


def cmd_fit_additive(args):
    cfg_path = Path(args.config)
    try:
        cfg = json.loads(cfg_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputFileError(f"cannot read config {cfg_path}: {exc}") from exc
    data_path = Path(cfg.get("data", ""))
    if not data_path.is_absolute():
        data_path = cfg_path.parent / data_path
    table = read_table(data_path)
    y = _column(table, cfg.get("response", "y"), data_path)
    smooths = cfg.get("smooths")
    if not smooths:
        raise InvalidArgumentsError("config needs a non-empty 'smooths' list")
    X_cols = [np.ones_like(y)]
    X_names = ["intercept"]
    blocks = []
    for i, sm in enumerate(smooths):
        cov = sm["covariate"]
        x = _column(table, cov, data_path)
        X_cols.append(x)
        X_names.append(cov)
        lo, hi = sm.get("domain", (float(np.min(x)), float(np.max(x))))
        K = int(sm.get("K", 20))
        D = evaluate_design(make_basis(lo, hi, K, int(sm.get("degree", 3))), x)
        S = structure_matrix(K, int(sm.get("order", 2)))
        blocks.append(SmoothBlock(D.B, S, U=sm["U"], alpha=sm.get("alpha", 0.01), name=cov))
    for name in cfg.get("fixed", []):
        X_cols.append(_column(table, name, data_path))
        X_names.append(name)
    X = np.column_stack(X_cols)
    iters = int(cfg.get("iters", 5000))
    burn = int(cfg.get("burnin", iters // 2))
    thin = int(cfg.get("thin", 1))
    seed = args.seed if args.seed is not None else cfg.get("seed", _seed(args))
    hyper = HyperPriorChoice.parse(cfg.get("hyper", "reciprocal"))
    draws = run_algorithm2(y, X, blocks, tau_gamma=float(cfg.get("tau_gamma", 1e-4)),
                           cfg=ProposalConfig(float(cfg.get("T", 1.5))), n_iter=iters, burn_in=burn,
                           thin=thin, seed=seed, hyper=hyper)
    prefix = args.out_prefix or cfg.get("out_prefix")
    if not prefix:
        raise UsageError("fit-additive needs --out-prefix or 'out_prefix' in the config")
    names = [b.name for b in blocks]
    header = (["tau_eps"] + [f"gamma_{n}" for n in X_names] + [f"tau_beta_{n}" for n in names]
              + [f"theta_{n}" for n in names] + [f"d_{n}" for n in names])
    rows = (np.concatenate([[te], g, tb, th, d]) for te, g, tb, th, d in
            zip(draws.tau_eps, draws.gamma, draws.tau_beta, draws.theta, draws.dof))
    write_matrix_csv(f"{prefix}_trace.csv", header, list(rows))
    summary = {"algorithm": 2, "fixed_effects": X_names, "n_draws": draws.n_draws,
               "acceptance": draws.acceptance, "tau_eps": _quantiles(draws.tau_eps),
               "gamma_mean": draws.gamma.mean(axis=0), "seed": seed, "hyper": str(hyper),
               "smooths": {}}
    for j, (blk, name) in enumerate(zip(blocks, names)):
        write_matrix_csv(f"{prefix}_beta_{name}.csv", [f"b{k + 1}" for k in range(blk.S.K)],
                         draws.beta[j])
        bm = draws.beta_mean(j)
        summary["smooths"][name] = {
            "U": blk.U, "alpha": blk.alpha, "K": blk.S.K,
            "tau_beta": _quantiles(draws.tau_beta[:, j]), "d": _quantiles(draws.dof[:, j]),
            "beta_mean": bm, "smooth_mean": blk.B @ bm,
            "max_abs_constraint": float(np.max(np.abs(draws.beta[j] @ blk.A.T))),
        }
    write_json(f"{prefix}_summary.json", summary)


def cmd_simulate(args):
    try:
        study = json.loads(Path(args.study).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputFileError(f"cannot read study {args.study}: {exc}") from exc
    replicates = args.replicates or study.get("replicates", 100)
    if args.full_scale:
        replicates = 1000
    defaults = {"replicates": replicates, "seed": study.get("data_seed", 0)}
    scenarios = [scenario_from_dict(s, defaults) for s in study.get("scenarios", [])]
    if not scenarios:
        raise InvalidArgumentsError("study needs a non-empty 'scenarios' list")
    arms = [PriorArm.parse(a) for a in study.get("arms", STANDARD_ARMS)]
    settings = FitSettings(**study.get("settings", {}))
    seed = args.seed if args.seed is not None else study.get("seed", _seed(args))
    rows = run_study(scenarios, arms, settings, master_seed=seed, jobs=args.jobs,
                     timing=args.timing)
    out = Path(args.out)
    out.write_text(rows_to_csv(rows, RESULT_COLUMNS))
    stem = out.with_suffix("")
    summary = summarize(rows)
    Path(f"{stem}_summary.csv").write_text(rows_to_csv(summary, list(summary[0])))
    write_json(f"{stem}_meta.json", study_metadata(settings, seed))


def build_parser():
    p = _Parser(prog="pcspline", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-v, -vv)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("basis", help="evaluate a B-spline design matrix")
    _add_design_args(b)
    b.add_argument("--out", required=True, help="output CSV (header b1..bK)")
    b.set_defaults(func=cmd_basis)

    d = sub.add_parser("dof-map", help="tabulate degrees of freedom against log tau_beta")
    _add_design_args(d)
    d.add_argument("--grid-points", type=int, default=2001, help="points on the log-precision grid")
    d.add_argument("--out", required=True, help="output CSV (logtau_beta, d) at tau_eps = 1")
    d.add_argument("--out-2d", help="optional CSV of d over (log tau_eps, log tau_beta)")
    d.add_argument("--eps-points", type=int, default=41, help="log tau_eps points in [-5, 5] for --out-2d")
    d.add_argument("--dump-R", help="also write the structure matrix R to this CSV")
    d.set_defaults(func=cmd_dof_map)

    pdn = sub.add_parser("prior-density", help="prior density on the d or log tau_beta scale")
    _add_design_args(pdn)
    pdn.add_argument("--kind", choices=["pc", "gamma"], required=True, help="prior on tau_beta")
    pdn.add_argument("--U", type=float, help="PC prior: upper bound for d")
    pdn.add_argument("--alpha", type=float, default=0.01, help="PC prior: Pr(d > U)")
    pdn.add_argument("--a", type=float, help="Gamma prior shape")
    pdn.add_argument("--b", type=float, help="Gamma prior rate")
    pdn.add_argument("--tau-eps", type=float, default=1.0, help="noise precision conditioned on")
    pdn.add_argument("--scale", choices=["d", "logtau"], default="d",
                     help="emit the density of d or of log tau_beta")
    pdn.add_argument("--grid-points", type=int, default=2001, help="points on the log-precision grid")
    pdn.add_argument("--out", required=True, help="output CSV")
    pdn.set_defaults(func=cmd_prior_density)

    f = sub.add_parser("fit", help="fit a single P-spline by block MCMC")
    f.add_argument("--data", required=True, help="CSV with a header row")
    f.add_argument("--x-col", default="x", help="covariate column")
    f.add_argument("--y-col", default="y", help="response column")
    _add_design_args(f, need_x=False)
    f.add_argument("--prior", default="pc", help="'pc' (uses --U/--alpha) or 'gamma:a,b' on tau_beta")
    f.add_argument("--U", type=float, help="upper bound for the degrees of freedom")
    f.add_argument("--alpha", type=float, default=0.01, help="prior probability of d > U")
    f.add_argument("--T", type=float, default=1.5, help="proposal step bound (> 1)")
    f.add_argument("--iters", type=int, default=5000, help="MCMC iterations")
    f.add_argument("--burnin", type=int, help="default: iters / 2")
    f.add_argument("--thin", type=int, default=1, help="keep every thin-th draw after burn-in")
    f.add_argument("--seed", type=int, help="default: $PCSPLINE_SEED or 0")
    f.add_argument("--hyper", default="reciprocal", help="prior on tau_eps: 'reciprocal' or 'gamma:a,b'")
    f.add_argument("--out-prefix", required=True,
                   help="writes PREFIX_trace.csv, PREFIX_beta.csv, PREFIX_summary.json")
    f.set_defaults(func=cmd_fit)

    fa = sub.add_parser("fit-additive", help="fit an additive P-spline model from a JSON config")
    fa.add_argument("--config", required=True, help="JSON model description (see README)")
    fa.add_argument("--seed", type=int, help="overrides the config seed and $PCSPLINE_SEED")
    fa.add_argument("--out-prefix", help="overrides the config out_prefix")
    fa.set_defaults(func=cmd_fit_additive)

    s = sub.add_parser("simulate", help="run the prior comparison simulation study")
    s.add_argument("--study", required=True, help="JSON study description")
    s.add_argument("--out", required=True, help="results CSV; summary and metadata go next to it")
    s.add_argument("--replicates", type=int, help="override the study's replicate count")
    s.add_argument("--full-scale", action="store_true", help="use 1000 replicates")
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.add_argument("--timing", action="store_true",
                   help="fill the runtime_ms column (makes output run-dependent)")
    s.add_argument("--seed", type=int, help="master seed; overrides the study seed and $PCSPLINE_SEED")
    s.set_defaults(func=cmd_simulate)
    return p


def _join_domain(argv):
    # "--domain -1,1" would otherwise be read as an unknown flag
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--domain":
            out.append(f"--domain={next(it, '')}")
        else:
            out.append(tok)
    return out


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(_join_domain(argv))
        logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except PCSplineError as exc:
        err = {"error": type(exc).__name__, "code": exc.code, "message": str(exc)}
        if getattr(exc, "lower", None) is not None:
            err["attainable_interval"] = [exc.lower, exc.upper]
        sys.stderr.write(json.dumps(err) + "\n")
        return exc.code
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "InputFileError", "code": InputFileError.code,
                                     "message": str(exc)}) + "\n")
        return InputFileError.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
