"""Command-line interface: simulation studies, target computation, dataset
estimation, and report aggregation.

Commands write machine-readable outputs (JSON summaries, plot-ready CSV
tables) plus a manifest that records the resolved configuration, seeds and
output paths, so any run can be reproduced from its manifest alone. Exit
codes: 0 success, 1 configuration/input error, 2 runtime/numerical error.
Worker count for replicate-level parallelism is capped by the
ORDCAUSAL_THREADS environment variable (default 1).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import DEFAULT_REPLICATES, bootstrap_ci
from .errors import DomainError
from .estimators import ESTIMATOR_ORDER, CovariateRoles, estimate_all_four
from .intensity import fit_proportional_intensity, from_panel
from .panel import PanelDataset, load_csv, visit_records
from .pom import marginal_or, probability_curve
from .simulate import (
    ScenarioConfig,
    monte_carlo_target,
    read_key_value_file,
    run_study,
    scenario_from_items,
    target_estimates,
    write_replicates_csv,
    write_summary_json,
)

_TARGET_N_DEFAULT = 2000
_TARGET_REPS_DEFAULT = 100


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    version: str = __version__
    outputs: list = field(default_factory=list)
    duration_seconds: float = 0.0
    started_at: str = ""

    def write(self, path):
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(asdict(self), handle, indent=2, sort_keys=True)
            handle.write("\n")


def _apply_overrides(items: dict, overrides) -> dict:
    for entry in overrides or []:
        if "=" not in entry:
            raise ValueError(f"--set expects key=value, got {entry!r}")
        key, _, value = entry.partition("=")
        items[key.strip()] = value.strip()
    return items


def _scenario_from_args(args) -> ScenarioConfig:
    items = read_key_value_file(args.config) if args.config else {}
    _apply_overrides(items, args.set)
    if args.seed is not None:
        items["seed"] = str(args.seed)
    return scenario_from_items(items)


def cmd_simulate(args) -> int:
    started = time.time()
    config = _scenario_from_args(args)
    if args.reps < 2:
        raise ValueError("--reps must be at least 2")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.target is not None:
        target = float(args.target)
        target_source = "user"
    else:
        target = monte_carlo_target(_TARGET_N_DEFAULT, _TARGET_REPS_DEFAULT, seed=config.seed)
        target_source = (
            f"monte carlo, n={_TARGET_N_DEFAULT}, reps={_TARGET_REPS_DEFAULT}, seed={config.seed}"
        )
    summary = run_study(config, args.reps, target)

    summary_path = out / "summary.json"
    replicates_path = out / "replicates.csv"
    write_summary_json(summary, summary_path, config)
    write_replicates_csv(summary, replicates_path)

    print(f"scenario: confounded={config.confounded} gamma=({config.gamma_d}, {config.gamma_z})")
    print(f"target log-OR (higher direction): {target:.6g} [{target_source}]")
    print(f"visits per subject: mean {summary.visits_mean:.3g} "
          f"(range {summary.visits_min}-{summary.visits_max})")
    print(f"{'estimator':<10}{'bias':>10}{'variance':>12}{'mse':>12}")
    for name in ESTIMATOR_ORDER:
        m = summary.estimators[name]
        print(f"{name:<10}{m.bias:>10.4f}{m.variance:>12.4f}{m.mse:>12.4f}")

    manifest = RunManifest(
        command="simulate",
        config={"scenario": asdict(config), "reps": args.reps, "target": target,
                "target_source": target_source},
        seeds={"scenario_seed": config.seed},
        outputs=[str(summary_path), str(replicates_path)],
        duration_seconds=time.time() - started,
        started_at=_START_STAMP,
    )
    manifest.write(out / "manifest.json")
    return 0


def cmd_target(args) -> int:
    started = time.time()
    if args.n < 1 or args.reps < 1:
        raise ValueError("--n and --reps must be positive")
    estimates = target_estimates(args.n, args.reps, seed=args.seed)
    mean_higher = float(np.mean(estimates))
    std_error = float(np.std(estimates) / np.sqrt(estimates.size))
    payload = {
        "n_patients": args.n,
        "n_replicates": args.reps,
        "seed": args.seed,
        "log_or_higher": mean_higher,
        "log_or_leq": -mean_higher,
        "monte_carlo_se": std_error,
    }
    print(f"marginal log-OR, higher-category direction: {mean_higher:.6f} (MC se {std_error:.6f})")
    print(f"marginal log-OR, lower-or-equal direction:  {-mean_higher:.6f}")
    print(json.dumps(payload, sort_keys=True))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        target_path = out / "target.json"
        with open(target_path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True)
            handle.write("\n")
        manifest = RunManifest(
            command="target",
            config={"n": args.n, "reps": args.reps},
            seeds={"seed": args.seed},
            outputs=[str(target_path)],
            duration_seconds=time.time() - started,
            started_at=_START_STAMP,
        )
        manifest.write(out / "manifest.json")
    return 0


def _parse_bins(raw: str):
    if "," in raw:
        return tuple(float(part) for part in raw.split(","))
    return int(raw)


def _parse_roles(path) -> tuple:
    items = read_key_value_file(path)
    try:
        exposure = items.pop("exposure")
        confounders = tuple(s.strip() for s in items.pop("confounders").split(",") if s.strip())
        monitoring = tuple(s.strip() for s in items.pop("monitoring").split(",") if s.strip())
    except KeyError as exc:
        raise ValueError(f"roles file must define {exc.args[0]!r}") from None
    n_categories = int(items.pop("n_categories")) if "n_categories" in items else None
    if items:
        raise ValueError(f"unknown role keys: {sorted(items)}")
    return exposure, confounders, monitoring, n_categories


def _log2_exposure(data: PanelDataset) -> PanelDataset:
    if np.any(data.exposure < 0):
        raise DomainError("log2 preprocessing requires nonnegative exposures")
    return PanelDataset(
        subject_ids=data.subject_ids,
        times=data.times,
        at_risk=data.at_risk,
        visit=data.visit,
        exposure=np.log2(1.0 + data.exposure),
        covariates=data.covariates,
        covariate_names=data.covariate_names,
        outcome=data.outcome,
        n_categories=data.n_categories,
        tau=data.tau,
    )


def cmd_estimate(args) -> int:
    started = time.time()
    exposure, confounders, monitoring, n_categories = _parse_roles(args.roles)
    data = load_csv(args.data, n_categories=n_categories)
    missing = [c for c in (*confounders, *monitoring) if c != exposure and c not in data.covariate_names]
    if missing:
        raise ValueError(f"role columns not found in the data: {missing}")
    if args.log2_exposure:
        data = _log2_exposure(data)

    bins = _parse_bins(args.bins) if args.bins else 5
    roles = CovariateRoles(
        exposure=exposure,
        confounders=confounders,
        monitoring=monitoring,
        ipt_kind=args.ipt,
        bins=bins,
    )
    results = estimate_all_four(data, roles)
    deltas = [float(s) for s in args.or_units.split(",")]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []

    intervals = {}
    bootstrap_rows = []
    if args.bootstrap:
        for use_ipt, use_iiv, name in (
            (False, False, "pom"),
            (True, False, "iptp"),
            (False, True, "iivp"),
            (True, True, "iptmp"),
        ):
            result = bootstrap_ci(
                data, roles.spec(use_ipt, use_iiv), B=args.bootstrap,
                level=args.level, seed=args.seed,
            )
            intervals[name] = result
            bootstrap_rows.extend(
                (name, r, value) for r, value in enumerate(result.replicates)
            )

    estimates_path = out / "estimates.json"
    payload = {}
    for name in ESTIMATOR_ORDER:
        res = results[name]
        entry = {
            "log_or_leq": res.log_or_leq,
            "log_or_higher": res.log_or_higher,
            "alphas": list(res.pom_fit.alphas),
            "loglik": res.pom_fit.loglik,
            "n_records": res.n_records,
            "weights": {
                "min": res.weight_summary.minimum,
                "mean": res.weight_summary.mean,
                "max": res.weight_summary.maximum,
            },
        }
        if name in intervals:
            ci = intervals[name]
            entry["bootstrap"] = {
                "level": ci.level,
                "log_or_higher_ci": [ci.ci_lower, ci.ci_upper],
                "n_failed": ci.n_failed,
                "B": args.bootstrap,
            }
        payload[name] = entry
    with open(estimates_path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    outputs.append(str(estimates_path))

    # visit-rate ratios from the (shared) intensity fit
    rates_path = out / "rate_ratios.csv"
    cp = from_panel(data, monitoring, exposure_name=exposure)
    ifit = fit_proportional_intensity(cp)
    with open(rates_path, "w", encoding="utf-8") as handle:
        handle.write("covariate,coefficient,rate_ratio\n")
        for cov_name, g in zip(ifit.covariate_names, ifit.gamma):
            handle.write(f"{cov_name},{_fmt(g)},{_fmt(np.exp(g))}\n")
    outputs.append(str(rates_path))

    or_path = out / "or_table.csv"
    with open(or_path, "w", encoding="utf-8") as handle:
        handle.write("estimator,delta,or_leq,or_higher,or_higher_lo,or_higher_hi\n")
        for name in ESTIMATOR_ORDER:
            for delta in deltas:
                pair = marginal_or(results[name].pom_fit, 0, delta)
                lo = hi = ""
                if name in intervals:
                    ci = intervals[name]
                    lo = _fmt(np.exp(delta * ci.ci_lower))
                    hi = _fmt(np.exp(delta * ci.ci_upper))
                handle.write(
                    f"{name},{_fmt(delta)},{_fmt(pair.or_leq)},{_fmt(pair.or_higher)},{lo},{hi}\n"
                )
    outputs.append(str(or_path))

    curves_path = out / "probability_curves.csv"
    vis = visit_records(data)
    grid = np.linspace(float(vis.exposure.min()), float(vis.exposure.max()), args.curve_points)
    with open(curves_path, "w", encoding="utf-8") as handle:
        handle.write("estimator,threshold,exposure,probability\n")
        for name in ESTIMATOR_ORDER:
            fit = results[name].pom_fit
            for threshold in range(2, data.n_categories + 1):
                curve = probability_curve(fit, 0, grid, threshold)
                for x, p in zip(grid, curve):
                    handle.write(f"{name},{threshold},{_fmt(x)},{_fmt(p)}\n")
    outputs.append(str(curves_path))

    if bootstrap_rows:
        boot_path = out / "bootstrap.csv"
        with open(boot_path, "w", encoding="utf-8") as handle:
            handle.write("estimator,replicate,log_or_higher\n")
            for name, r, value in bootstrap_rows:
                handle.write(f"{name},{r},{_fmt(value)}\n")
        outputs.append(str(boot_path))

    for name in ESTIMATOR_ORDER:
        res = results[name]
        line = f"{name}: log-OR (higher) = {res.log_or_higher:+.4f}"
        if name in intervals:
            ci = intervals[name]
            line += f"  [{ci.ci_lower:+.4f}, {ci.ci_upper:+.4f}] ({int(ci.level * 100)}% bootstrap)"
        print(line)

    manifest = RunManifest(
        command="estimate",
        config={
            "data": str(args.data),
            "roles": {
                "exposure": exposure,
                "confounders": list(confounders),
                "monitoring": list(monitoring),
                "n_categories": data.n_categories,
            },
            "ipt": args.ipt,
            "bins": args.bins,
            "log2_exposure": bool(args.log2_exposure),
            "bootstrap": args.bootstrap,
            "level": args.level,
            "or_units": deltas,
            "curve_points": args.curve_points,
        },
        seeds={"seed": args.seed},
        outputs=outputs,
        duration_seconds=time.time() - started,
        started_at=_START_STAMP,
    )
    manifest.write(out / "manifest.json")
    return 0


def cmd_report(args) -> int:
    started = time.time()
    root = Path(args.studies)
    if not root.is_dir():
        raise ValueError(f"not a directory: {root}")
    studies = []
    for candidate in sorted([root, *root.iterdir()]):
        if candidate.is_dir() and (candidate / "summary.json").is_file():
            studies.append(candidate)
    if not studies:
        raise ValueError(f"no summary.json found under {root}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    combined_path = out / "combined.csv"
    long_path = out / "boxplot_long.csv"

    with open(combined_path, "w", encoding="utf-8") as handle:
        handle.write(
            "scenario,estimator,bias,variance,mse,target,n_replicates,n_failed,"
            "visits_mean,visits_min,visits_max\n"
        )
        for study in studies:
            with open(study / "summary.json", "r", encoding="utf-8") as fh:
                summary = json.load(fh)
            label = study.name
            for name in ESTIMATOR_ORDER:
                m = summary["estimators"][name]
                handle.write(
                    f"{label},{name},{_fmt(m['bias'])},{_fmt(m['variance'])},{_fmt(m['mse'])},"
                    f"{_fmt(summary['target'])},{summary['n_replicates']},{summary['n_failed']},"
                    f"{_fmt(summary['visits']['mean'])},{summary['visits']['min']},"
                    f"{summary['visits']['max']}\n"
                )

    with open(long_path, "w", encoding="utf-8") as handle:
        handle.write("scenario,replicate,estimator,log_or_higher\n")
        for study in studies:
            replicates = study / "replicates.csv"
            if not replicates.is_file():
                continue
            with open(replicates, "r", encoding="utf-8") as fh:
                next(fh)  # header
                for line in fh:
                    handle.write(f"{study.name},{line}")

    print(f"aggregated {len(studies)} study summaries into {combined_path}")
    manifest = RunManifest(
        command="report",
        config={"studies": str(root)},
        seeds={},
        outputs=[str(combined_path), str(long_path)],
        duration_seconds=time.time() - started,
        started_at=_START_STAMP,
    )
    manifest.write(out / "manifest.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ordcausal",
        description=(
            "Doubly-weighted proportional-odds estimation of marginal exposure effects "
            "under covariate-driven visit times, with a simulation study engine."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a replicated four-estimator study")
    p_sim.add_argument("--config", required=True, help="scenario key=value file")
    p_sim.add_argument("--reps", type=int, default=1000, help="number of replicates")
    p_sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_sim.add_argument("--target", type=float, default=None,
                       help="target log-OR (higher direction); computed by Monte Carlo when omitted")
    p_sim.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a scenario key (repeatable)")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_tgt = sub.add_parser("target", help="Monte Carlo marginal log-OR, no confounding/selection")
    p_tgt.add_argument("--n", type=int, default=10000, help="patients per replicate")
    p_tgt.add_argument("--reps", type=int, default=1000, help="number of replicates")
    p_tgt.add_argument("--seed", type=int, default=0)
    p_tgt.add_argument("--out", default=None, help="optional output directory")
    p_tgt.set_defaults(func=cmd_target)

    p_est = sub.add_parser("estimate", help="estimate all four weighted fits on a dataset")
    p_est.add_argument("--data", required=True, help="long-format panel CSV")
    p_est.add_argument("--roles", required=True,
                       help="key=value file naming exposure/confounders/monitoring columns")
    p_est.add_argument("--ipt", choices=("continuous", "binned"), default="continuous")
    p_est.add_argument("--bins", default=None,
                       help="bin count or comma-separated edges for --ipt binned")
    p_est.add_argument("--bootstrap", type=int, default=0, metavar="B",
                       help=f"cluster bootstrap replicates (0 = off; typical {DEFAULT_REPLICATES})")
    p_est.add_argument("--level", type=float, default=0.95, help="confidence level")
    p_est.add_argument("--log2-exposure", action="store_true",
                       help="replace exposure by log2(1 + exposure) before fitting")
    p_est.add_argument("--or-units", default="1,3",
                       help="comma-separated increments for the odds-ratio table")
    p_est.add_argument("--curve-points", type=int, default=100,
                       help="grid size for probability curves")
    p_est.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p_est.add_argument("--out", required=True, help="output directory")
    p_est.set_defaults(func=cmd_estimate)

    p_rep = sub.add_parser("report", help="aggregate study outputs into comparison tables")
    p_rep.add_argument("studies", help="directory of study output directories")
    p_rep.add_argument("--out", required=True, help="output directory")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    global _START_STAMP
    _START_STAMP = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


_START_STAMP = ""

if __name__ == "__main__":
    sys.exit(main())
