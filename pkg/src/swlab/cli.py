"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Diagnostics go to standard error; data goes to files or standard output.
"""
from __future__ import annotations

import argparse
import json
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import data as D
from . import experiments as X
from . import params as P
from .errors import DataError, SWLabError
from .estimation import FitConfig, FitResult, estimate, load_theta
from .model import solve
from .statespace import entropy_rate, read_panel_csv, simulate, write_panel_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


def baseline_fit_path() -> Path:
    from importlib import resources

    return Path(str(resources.files("swlab") / "resources" / "baseline_fit.json"))


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"swlab": pkg, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _write_manifest(out_dir: Path, command: str, config: dict) -> None:
    doc = {"command": command, "config": config, "versions": _versions()}
    (out_dir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_config(path) -> dict:
    if not path:
        return {}
    doc = json.loads(Path(path).read_text())
    return doc.get("config", doc)


def parse_ranks(text: str) -> list:
    """``"a..b"`` (inclusive) or a comma list of ranks and ranges."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                a, b = part.split("..")
                a, b = int(a), int(b)
                if b < a:
                    raise ValueError
                out.extend(range(a, b + 1))
            else:
                out.append(int(part))
        except ValueError as exc:
            raise UsageError(f"bad rank specification {part!r}") from exc
    if any(not 0 <= r < X.N_PERMUTATIONS for r in out):
        raise UsageError(f"ranks must lie in 0..{X.N_PERMUTATIONS - 1}")
    return sorted(set(out))


def parse_sizes(text: str) -> list:
    """``"100,150,200"`` or ``"100..1100:20"``."""
    try:
        if ".." in text:
            span, _, step = text.partition(":")
            a, b = (int(v) for v in span.split(".."))
            return list(range(a, b + 1, int(step or 1)))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad size specification {text!r}") from exc


def _fit_config(args, cfg_file: dict, **extra) -> FitConfig:
    base = FitConfig.profile(args.profile)
    overrides = dict(cfg_file.get("fit", {}))
    overrides.update(extra)
    if args.seed is not None:
        overrides["seed"] = args.seed
    for key in ("n_starts", "budget"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    merged = {**base.to_dict(), **overrides}
    cfg = FitConfig.from_dict(merged)
    cfg.jobs = args.jobs
    return cfg


def _panel(args, cfg_file: dict):
    path = getattr(args, "panel", None) or cfg_file.get("panel")
    if path and path != "fixture":
        return read_panel_csv(path), str(path)
    return D.ingest(D.fixture_dir()), "fixture"


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------- commands

def cmd_ingest(args, cfg_file):
    fred_dir = args.fred_dir or cfg_file.get("fred_dir") or str(D.fixture_dir())
    window = tuple(D.parse_quarter(q) for q in (args.window or cfg_file.get("window", "1956Q1..2018Q4")).split(".."))
    hours = args.hours or cfg_file.get("hours", "appendix")
    panel = D.ingest(fred_dir, window, hours)
    if args.out:
        write_panel_csv(panel, args.out)
    else:
        _print_panel(panel)
    print(f"ingested {len(panel)} rows from {fred_dir}", file=sys.stderr)


def _print_panel(panel):
    import csv

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["date", *panel.names])
    dates = panel.dates or tuple(str(i) for i in range(len(panel)))
    for d, row in zip(dates, panel.values):
        w.writerow([d, *(repr(float(v)) for v in row)])


def cmd_estimate(args, cfg_file):
    panel, source = _panel(args, cfg_file)
    cfg = _fit_config(args, cfg_file, train_range=tuple(cfg_file.get("train_range", (0, args.train))))
    starts = [load_theta(p) for p in (args.start or [])]
    fit = estimate(panel, cfg, supplied_starts=starts)
    text = fit.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"penalized NLL {fit.penalized_nll:.4f} after {fit.n_evals} evaluations", file=sys.stderr)


def cmd_simulate(args, cfg_file):
    theta = load_theta(args.theta or baseline_fit_path())
    ss, _, _ = solve(theta)
    if ss is None:
        raise SWLabError("parameters have no unique stable solution")
    seed = args.seed if args.seed is not None else 0
    panel = simulate(ss, args.n, burn_in=args.burn_in, seed=seed)
    if args.out:
        write_panel_csv(panel, args.out)
    else:
        _print_panel(panel)


def cmd_entropy(args, cfg_file):
    theta = load_theta(args.theta or baseline_fit_path())
    ss, _, _ = solve(theta)
    if ss is None:
        raise SWLabError("parameters have no unique stable solution")
    print(f"{entropy_rate(ss):.6f}")


def cmd_sim_estimate(args, cfg_file):
    out = _out_dir(args)
    desk = args.profile == "desk"
    if args.theta:
        theta = load_theta(args.theta)
    elif isinstance(cfg_file.get("theta"), dict):
        theta = P.theta_from_mapping(cfg_file["theta"])
    else:
        theta = load_theta(cfg_file.get("theta") or baseline_fit_path())
    sizes = parse_sizes(args.train_sizes) if args.train_sizes else cfg_file.get(
        "train_sizes", [100, 150, 200, 300] if desk else list(range(100, 1101, 20)))
    test_size = args.test_size or cfg_file.get("test_size", 2000 if desk else 1000)
    reps = args.reps or cfg_file.get("n_reps", 10 if desk else 100)
    burn_in = cfg_file.get("burn_in", 1000)
    n_starts = args.n_starts if args.n_starts is not None else cfg_file.get("fit", {}).get("n_starts", 0)
    fit = _fit_config(args, cfg_file, n_starts=n_starts)
    seed = args.seed if args.seed is not None else cfg_file.get("master_seed", 0)
    config = X.SimEstimateConfig(train_sizes=tuple(sizes), test_size=test_size, burn_in=burn_in, fit=fit,
                                 one_step=args.one_step or cfg_file.get("one_step", False), jobs=args.jobs)
    replications = parse_ranks_plain(args.replications) if args.replications else cfg_file.get("replications")
    records = X.run_sim_estimate(theta, reps, config, seed, replications)
    X.write_rows([r.row() for r in records], out / "sim_estimate.csv")
    try:
        X.write_taylor_csv(X.taylor_correlations(records), out / "taylor_corr.csv")
    except SWLabError as exc:
        print(f"taylor correlations skipped: {exc}", file=sys.stderr)
    manifest = {"master_seed": seed, "theta": P.theta_to_dict(theta), "n_reps": reps,
                "replications": replications, **config.to_dict()}
    _write_manifest(out, "sim-estimate", manifest)
    failed = sum(r.status != "ok" for r in records)
    print(f"{len(records)} cells written to {out} ({failed} failed)", file=sys.stderr)


def parse_ranks_plain(text):
    out = []
    for part in text.split(","):
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def cmd_permute(args, cfg_file):
    panel, source = _panel(args, cfg_file)
    seed = args.seed if args.seed is not None else cfg_file.get("master_seed", 0)
    if args.ranks:
        ranks = parse_ranks(args.ranks)
    elif args.random:
        ranks = [0] + X.pseudorandom_ranks(args.random, seed)
    elif "ranks" in cfg_file:
        ranks = list(cfg_file["ranks"])
    elif args.profile == "desk":
        ranks = [0] + X.pseudorandom_ranks(30, seed)
    else:
        ranks = list(range(X.N_PERMUTATIONS))
    if args.train is not None:
        train_range, test_range = (0, args.train), (args.train, len(panel))
    else:
        train_range = tuple(cfg_file.get("train_range", (0, 200)))
        test_range = tuple(cfg_file.get("test_range", (train_range[1], len(panel))))
    out = _out_dir(args)
    fit = _fit_config(args, cfg_file, train_range=train_range)
    config = X.PermutationConfig(train_range=train_range, test_range=test_range, fit=fit,
                                 one_step=args.one_step or cfg_file.get("one_step", False), jobs=args.jobs)
    records = X.run_permutation(panel, ranks, config, seed)
    X.write_rows([r.row() for r in records], out / "permutation.csv")
    fits = out / "fits"
    fits.mkdir(exist_ok=True)
    for r in records:
        if r.fit is not None:
            (fits / f"rank_{r.rank:04d}.json").write_text(r.fit.to_json() + "\n")
    manifest = {"master_seed": seed, "panel": source, "ranks": ranks, **config.to_dict()}
    _write_manifest(out, "permute", manifest)
    (out / "summary.json").write_text(json.dumps(X.permutation_summary(records), indent=2, sort_keys=True) + "\n")
    print(f"{len(records)} permutations written to {out}", file=sys.stderr)


def cmd_report(args, cfg_file):
    out = _out_dir(args)
    wrote = []
    for src in args.inputs:
        src = Path(src)
        sim = src / "sim_estimate.csv"
        if sim.exists():
            recs = [X.SimEstimateRecord.from_row(r) for r in X.read_rows(sim)]
            truth = None
            man = src / "manifest.json"
            if man.exists():
                th = json.loads(man.read_text())["config"].get("theta")
                truth = P.theta_from_mapping(th) if th else None
            X.write_rows(X.sim_error_bands(recs), out / "fig_sim_errors.csv")
            X.write_rows(X.sim_parameter_trajectories(recs, truth), out / "fig_sim_parameters.csv")
            wrote += ["fig_sim_errors.csv", "fig_sim_parameters.csv"]
        perm = src / "permutation.csv"
        if perm.exists():
            recs = [X.PermutationRecord.from_row(r) for r in X.read_rows(perm)]
            X.write_rows(X.permutation_histograms(recs), out / "fig_permutation_hist.csv")
            (out / "permutation_summary.json").write_text(
                json.dumps(X.permutation_summary(recs), indent=2, sort_keys=True) + "\n")
            wrote += ["fig_permutation_hist.csv", "permutation_summary.json"]
    if not wrote:
        raise DataError("no sim_estimate.csv or permutation.csv found in the inputs")
    print("wrote " + ", ".join(wrote), file=sys.stderr)


def cmd_fetch(args, cfg_file):
    paths = D.fetch_fred(args.out_dir)
    print(f"downloaded {len(paths)} series to {args.out_dir}", file=sys.stderr)


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--profile", choices=("desk", "paper"), default="desk", help="budget profile")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--out-dir", default="swlab_out", help="output directory for experiment commands")
    common.add_argument("--config", default=None, help="JSON config file (a manifest works)")

    p = _Parser(prog="swlab", description="Smets-Wouters estimation and validation experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", parents=[common], help="FRED CSVs -> panel CSV")
    s.add_argument("--fred-dir", default=None, help="directory of <ID>.csv files (default: shipped fixture)")
    s.add_argument("--window", default=None, help="e.g. 1956Q1..2018Q4")
    s.add_argument("--hours", choices=D.HOURS_CONVENTIONS, default=None)
    s.add_argument("--out", default=None, help="panel CSV path (default: stdout)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("estimate", parents=[common], help="panel -> FitResult JSON")
    s.add_argument("--panel", default=None, help="panel CSV (default: ingested fixture)")
    s.add_argument("--train", type=int, default=200, help="number of training rows")
    s.add_argument("--start", action="append", help="extra start (FitResult or theta JSON)")
    s.add_argument("--n-starts", dest="n_starts", type=int, default=None)
    s.add_argument("--budget", type=int, default=None, help="evaluations per start")
    s.add_argument("--out", default=None, help="JSON path (default: stdout)")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", parents=[common], help="theta -> simulated panel")
    s.add_argument("--theta", default=None, help="FitResult or theta JSON (default: shipped baseline)")
    s.add_argument("--n", type=int, default=250)
    s.add_argument("--burn-in", type=int, default=1000)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sim-estimate", parents=[common], help="simulate-and-estimate grid -> CSVs")
    s.add_argument("--theta", default=None)
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--replications", default=None, help="subset of replication indices, e.g. 0..4")
    s.add_argument("--train-sizes", default=None, help="e.g. 100,150,200 or 100..1100:20")
    s.add_argument("--test-size", type=int, default=None)
    s.add_argument("--n-starts", dest="n_starts", type=int, default=None, help="prior-drawn starts besides the truth")
    s.add_argument("--budget", type=int, default=None)
    s.add_argument("--one-step", action="store_true", help="one-step-ahead test predictions")
    s.set_defaults(func=cmd_sim_estimate)

    s = sub.add_parser("permute", parents=[common], help="permutation study -> CSVs")
    s.add_argument("--panel", default=None)
    s.add_argument("--ranks", default=None, help="e.g. 0..5039 or 0,17,100..120")
    s.add_argument("--random", type=int, default=None, help="identity plus this many pseudorandom ranks")
    s.add_argument("--train", type=int, default=None, help="number of training rows (default 200)")
    s.add_argument("--n-starts", dest="n_starts", type=int, default=None)
    s.add_argument("--budget", type=int, default=None)
    s.add_argument("--one-step", action="store_true")
    s.set_defaults(func=cmd_permute)

    s = sub.add_parser("entropy", parents=[common], help="theta -> entropy rate per time step")
    s.add_argument("--theta", default=None)
    s.set_defaults(func=cmd_entropy)

    s = sub.add_parser("report", parents=[common], help="experiment CSVs -> figure-data CSVs")
    s.add_argument("inputs", nargs="+", help="experiment output directories")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("fetch", parents=[common], help="download the nine FRED series (needs FRED_API_KEY)")
    s.set_defaults(func=cmd_fetch)
    return p


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg_file = _load_config(args.config)
        args.func(args, cfg_file)
    except UsageError:
        return EXIT_USAGE
    except DataError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SWLabError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
