"""Command-line front end.

Exit status: 0 on success, 1 on a numerical failure, 2 on a usage or
configuration error.
"""

import argparse
import os
import shutil
import sys
import tempfile

import numpy as np
import pandas as pd

from .estimation import GMMEstimator
from .exceptions import MomentSensError
from .gmm_core import GmmIngredients, matrix_to_frame, read_matrix_csv
from .models import ProbitModel, WeibullModel
from .models import retirement as rt
from .report import (
    GOLDEN_TABLES,
    atomic_write,
    golden_check,
    load_golden,
    markdown_table,
    read_frame,
    read_manifest,
    sha256,
    write_frame,
    write_manifest,
)
from .sensitivity import full_report

OUTPUT_ENV = "MOMENTSENS_OUTPUT_DIR"
FULL_SCALE_N = 10**7


class UsageError(Exception):
    pass


def _count(text):
    """Parse counts written as ``1000000`` or ``1e6``."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value.is_integer() or value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer: {text!r}")
    return int(value)


def _output_path(args, default_name):
    if args.out:
        return os.path.abspath(args.out)
    return os.path.abspath(os.path.join(os.environ.get(OUTPUT_ENV, "."), default_name))


def _companion(path, suffix):
    stem, _ = os.path.splitext(path)
    return f"{stem}{suffix}"


def _write_ingredients(path, ing):
    return [write_frame(matrix_to_frame(getattr(ing, name)), _companion(path, f"_{name}.csv")) for name in ("G", "S", "W")]


def _emit_report(path, report, title, argv, settings, extra=()):
    long = report.to_frame()
    md_path = _companion(path, ".md")
    written = [write_frame(long, path), atomic_write(md_path, markdown_table(long, title))]
    written += list(extra)
    write_manifest(_companion(path, "_manifest.json"), argv, settings, written)
    return written


# ---------------------------------------------------------------- probit / weibull


def _simple_experiment(args, argv, model, name):
    n = FULL_SCALE_N if args.paper_scale else args.n
    data = model.simulate(n, args.seed, n_jobs=args.n_jobs)
    est = GMMEstimator(model, weighting=args.weighting, optimize=args.estimate).fit(data)
    path = _output_path(args, f"{name}_{args.weighting}.csv")
    report = est.sensitivity()
    extra = _write_ingredients(path, est.ingredients_)
    if name == "weibull":
        extra.append(_write_durations(_companion(path, "_durations.csv"), data["T"].to_numpy()))
    settings = {"experiment": name, "n": n, "seed": args.seed, "weighting": args.weighting,
                "estimate": args.estimate, "theta": est.theta_}
    _emit_report(path, report, f"{name}, {args.weighting} weighting, n={n}", argv, settings, extra)
    print(f"wrote {path}")
    return 0


def _write_durations(path, T):
    edges = np.linspace(0.0, 5.0, 51)
    counts, _ = np.histogram(np.minimum(T, 5.0 - 1e-12), bins=edges)
    df = pd.DataFrame({"lower": edges[:-1], "upper": edges[1:], "count": counts})
    stats = {"median": float(np.median(T)), "p_below_1": float(np.mean(T < 1)), "p_above_2": float(np.mean(T > 2))}
    text = "".join(f"# {k}={v:.17g}\n" for k, v in stats.items())
    return atomic_write(path, text + df.to_csv(index=False, lineterminator="\n"))


def cmd_probit(args, argv):
    return _simple_experiment(args, argv, ProbitModel(), "probit")


def cmd_weibull(args, argv):
    return _simple_experiment(args, argv, WeibullModel(), "weibull")


# ---------------------------------------------------------------- retirement


def _retire_setup(args):
    cfg = rt.RetirementConfig.from_ini(args.config)
    if args.data:
        data = rt.validate_households(read_frame(args.data))
    else:
        pop = rt.synthetic_population(cfg.n, cfg.seed, cfg.interview_year)
        data = rt.simulate_plans(pop, cfg.theta_star, cfg.seed, cfg.rho, cfg.t_max)
    settings = {"config": cfg.to_dict(), "config_path": os.path.abspath(args.config),
                "data": os.path.abspath(args.data) if args.data else None}
    return cfg, data, settings


def _free_names(cfg_path):
    import configparser

    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read(cfg_path)
    raw = cp.get("retire", "free", fallback="all").strip()
    if raw == "all":
        return rt.PARAM_NAMES
    names = tuple(x.strip() for x in raw.split(",") if x.strip())
    bad = [x for x in names if x not in rt.PARAM_NAMES]
    if bad:
        raise rt.ConfigError(f"retire.free: unknown parameters {bad}")
    return names


def _plan_histograms(df):
    ages = pd.DataFrame({"age": rt.GRID})
    ages["husband"] = [int((df["R_h"] == a).sum()) for a in rt.GRID]
    ages["wife"] = [int((df["R_w"] == a).sum()) for a in rt.GRID]
    diff = (df["cohort_h"] + df["R_h"]) - (df["cohort_w"] + df["R_w"])
    diffs = diff.value_counts().sort_index().rename_axis("calendar_difference").reset_index(name="count")
    return ages, diffs


def cmd_retire_simulate(args, argv):
    cfg, data, settings = _retire_setup(args)
    path = _output_path(args, "households.csv")
    ages, diffs = _plan_histograms(data)
    written = [
        write_frame(data, path),
        write_frame(ages, _companion(path, "_ages.csv")),
        write_frame(diffs, _companion(path, "_differences.csv")),
    ]
    write_manifest(_companion(path, "_manifest.json"), argv, settings, written)
    print(f"wrote {path}")
    return 0


def parameter_table(theta, se):
    """Husband / wife layout; entries are ``nan`` where a column does not apply."""
    p = dict(zip(rt.PARAM_NAMES, theta))
    s = dict(zip(rt.PARAM_NAMES, se))
    rows = [("gamma", p["gamma"], s["gamma"], p["gamma"], s["gamma"]),
            ("alpha_spa", np.nan, np.nan, p["alpha_spa"], s["alpha_spa"])]
    for v in rt.UTILITY_X:
        rows.append((f"beta:{v}", p[f"beta_h:{v}"], s[f"beta_h:{v}"], p[f"beta_w:{v}"], s[f"beta_w:{v}"]))
    for v in rt.DELTA_TERMS:
        rows.append((f"delta:{v}", p[f"delta_h:{v}"], s[f"delta_h:{v}"], p[f"delta_w:{v}"], s[f"delta_w:{v}"]))
    rows.append(("sigma2", 1.0, np.nan, p["sigma_w2"], s["sigma_w2"]))
    rows.append(("sigma_hw", p["sigma_hw"], s["sigma_hw"], p["sigma_hw"], s["sigma_hw"]))
    return pd.DataFrame(rows, columns=["parameter", "husband", "husband_se", "wife", "wife_se"])


def _moment_vector(est, prep):
    g = est.model.moments(prep, est.theta_).mean(axis=0)
    return pd.DataFrame({"number": np.arange(1, rt.N_MOMENTS + 1), "moment": rt.MOMENT_NAMES, "value": g})


def cmd_retire_estimate(args, argv):
    cfg, data, settings = _retire_setup(args)
    free = _free_names(args.config)
    model = rt.RetirementModel(cfg.s_sim, cfg.seed + 1, cfg.rho, cfg.t_max, free, cfg.theta_star)
    prep = model.prepare(data)
    est = rt.estimate(model, prep, B=cfg.bootstrap_b, seed=cfg.seed)
    theta = model.fixed.as_array()
    theta[model.free_index] = est.theta_
    se = np.full(len(rt.PARAM_NAMES), np.nan)
    se[model.free_index] = est.standard_errors_
    path = _output_path(args, "retire_estimates.csv")
    written = [
        write_frame(parameter_table(theta, se), path),
        write_frame(_moment_vector(est, prep), _companion(path, "_moments.csv")),
    ]
    written += _write_ingredients(path, est.ingredients_)
    settings.update(free=list(free), theta_hat=theta, criterion=est.criterion_)
    write_manifest(_companion(path, "_manifest.json"), argv, settings, written)
    print(f"wrote {path}")
    return 0


def cmd_retire_sensitivity(args, argv):
    cfg, data, settings = _retire_setup(args)
    model = rt.RetirementModel(cfg.s_sim, cfg.seed + 1, cfg.rho, cfg.t_max, None, cfg.theta_star)
    prep = model.prepare(data)
    W = rt.bootstrap_weight(model, prep, model.theta0, B=cfg.bootstrap_b, seed=cfg.seed)
    est = GMMEstimator(model, weighting=W, optimize=False).fit(prep)
    table = rt.gamma_sensitivity(est)
    path = _output_path(args, "retire_gamma_sensitivity.csv")
    long = table.reset_index().melt(id_vars=["number", "moment"], value_vars=[f"E{i}" for i in range(1, 7)],
                                    var_name="measure", value_name="value")
    long["parameter"] = "gamma"
    flags = {"E4": table["not_identified_E4"].to_numpy(), "E5": table["not_identified_E5"].to_numpy()}
    long["flag"] = [
        "not_identified" if m in flags and flags[m][int(num) - 1] else "" for m, num in zip(long["measure"], long["number"])
    ]
    title = f"gamma sensitivity (rho={cfg.rho}, t_max={cfg.t_max})"
    md = markdown_table(long[["measure", "parameter", "moment", "value", "flag"]], title)
    written = [
        write_frame(table.reset_index(), path),
        atomic_write(_companion(path, ".md"), md),
        write_frame(_moment_vector(est, prep), _companion(path, "_moments.csv")),
    ]
    written += _write_ingredients(path, est.ingredients_)
    write_manifest(_companion(path, "_manifest.json"), argv, settings, written)
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------- matrices, goldens, replay


def cmd_sensitivity(args, argv):
    G, S, W = (read_matrix_csv(p) for p in args.from_matrices)
    report = full_report(GmmIngredients(G, S, W))
    path = _output_path(args, "sensitivity.csv")
    settings = {"experiment": "matrices", "inputs": {os.path.basename(p): sha256(p) for p in args.from_matrices}}
    _emit_report(path, report, "sensitivity", argv, settings)
    print(f"wrote {path}")
    return 0


def cmd_check_goldens(args, argv):
    ok = True
    if args.produced:
        if len(args.table) != 1:
            raise UsageError("--produced needs exactly one --table")
        produced = {args.table[0]: pd.read_csv(args.produced, keep_default_na=False, na_values=[""], float_precision="round_trip")}
    else:
        produced = {}
        for name in args.table:
            kind, weighting = name.split("_")
            model = ProbitModel() if kind == "probit" else WeibullModel()
            n = FULL_SCALE_N if args.paper_scale else args.n
            data = model.simulate(n, args.seed, n_jobs=args.n_jobs)
            produced[name] = GMMEstimator(model, weighting=weighting, optimize=False).fit(data).sensitivity().to_frame()
    for name, frame in produced.items():
        res = golden_check(frame, load_golden(name), rel_tol=args.rel_tol, abs_tol=args.abs_tol)
        print(f"{name}: {res.summary()}")
        ok &= res.passed
    return 0 if ok else 1


def _replace_out(argv, out):
    argv = list(argv)
    if "--out" in argv:
        argv[argv.index("--out") + 1] = out
    else:
        argv += ["--out", out]
    return argv


def cmd_replay(args, argv):
    """Re-run a manifest's command in a scratch directory and compare file hashes."""
    manifest = read_manifest(args.manifest)
    recorded = manifest["outputs"]
    out_name = next(k for k in recorded if k.endswith(".csv") and not k.endswith(("_G.csv", "_S.csv", "_W.csv")))
    rerun = list(manifest["argv"])
    if args.n_jobs is not None:
        if "--n-jobs" in rerun:
            rerun[rerun.index("--n-jobs") + 1] = str(args.n_jobs)
        elif rerun[0] in ("probit", "weibull"):
            rerun += ["--n-jobs", str(args.n_jobs)]
    scratch = tempfile.mkdtemp(prefix="momentsens-replay-")
    try:
        status = main(_replace_out(rerun, os.path.join(scratch, out_name)))
        if status:
            return status
        bad = [k for k, h in recorded.items() if sha256(os.path.join(scratch, k)) != h]
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
    if bad:
        print("replay differs: " + ", ".join(bad))
        return 1
    print(f"replay identical: {len(recorded)} files")
    return 0


# ---------------------------------------------------------------- parser


def build_parser():
    parser = argparse.ArgumentParser(prog="momentsens", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func in (("probit", cmd_probit), ("weibull", cmd_weibull)):
        p = sub.add_parser(name, help=f"simulate the {name} example and report its sensitivity measures")
        p.add_argument("--n", type=_count, default=10**6)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--weighting", choices=("optimal", "diagonal"), default="optimal")
        p.add_argument("--out", help="sensitivity CSV; companion files are written next to it")
        p.add_argument("--paper-scale", action="store_true", help=f"use n={FULL_SCALE_N:.0e}")
        p.add_argument("--estimate", action="store_true", help="minimize the criterion instead of using the true parameters")
        p.add_argument("--n-jobs", type=int, default=None)
        p.set_defaults(func=func)

    retire = sub.add_parser("retire", help="joint retirement model")
    rsub = retire.add_subparsers(dest="action", required=True)
    for name, func in (("simulate", cmd_retire_simulate), ("estimate", cmd_retire_estimate),
                       ("sensitivity", cmd_retire_sensitivity)):
        p = rsub.add_parser(name)
        p.add_argument("--config", required=True, help="INI file with a [retire] section")
        p.add_argument("--data", help="household CSV with observed plans R_h, R_w")
        p.add_argument("--out")
        p.set_defaults(func=func)

    p = sub.add_parser("sensitivity", help="sensitivity measures from stored G, S, W")
    p.add_argument("--from-matrices", nargs=3, metavar=("G", "S", "W"), required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("check-goldens", help="compare fresh runs (or a CSV) with the shipped golden tables")
    p.add_argument("--table", nargs="+", choices=GOLDEN_TABLES, default=list(GOLDEN_TABLES))
    p.add_argument("--produced", help="long-format sensitivity CSV to check instead of a fresh run")
    p.add_argument("--n", type=_count, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--rel-tol", type=float, default=0.05)
    p.add_argument("--abs-tol", type=float, default=0.02)
    p.add_argument("--n-jobs", type=int, default=None)
    p.set_defaults(func=cmd_check_goldens)

    p = sub.add_parser("replay", help="re-run a manifest and verify the outputs are bit-identical")
    p.add_argument("manifest")
    p.add_argument("--n-jobs", type=int, default=None)
    p.set_defaults(func=cmd_replay)
    return parser


def _absolute_inputs(argv):
    """Make input paths absolute so a manifest replays from any directory."""
    out = list(argv)
    for i, tok in enumerate(out[:-1]):
        if tok in ("--config", "--data"):
            out[i + 1] = os.path.abspath(out[i + 1])
        elif tok == "--from-matrices":
            out[i + 1 : i + 4] = [os.path.abspath(x) for x in out[i + 1 : i + 4]]
    return out


def main(argv=None):
    argv = _absolute_inputs(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return args.func(args, argv)
    except (rt.ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MomentSensError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
