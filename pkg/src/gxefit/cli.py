"""Command-line interface.

Four subcommands: ``fit`` estimates one CSV dataset, ``simulate`` replicates
one benchmark panel, ``table1`` regenerates the full four-panel benchmark
table, and ``check`` runs the numerical invariant battery.

Every command is deterministic given (inputs, seed, flags) and emits a
machine-readable report (JSON by default, CSV on request) that embeds the
package version, the resolved configuration, and the seed.  Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from . import checks as checks_mod
from . import report as report_mod
from . import simulate as simulate_mod
from .data import load_csv
from .errors import DataError, GxefitError, NumericError, ParameterError, SupportError
from .estimator import FitConfig, fit
from .genes import gene_model
from .logistic import PARAM_NAMES

#: Below this replication count the summary statistics are too noisy to
#: compare against published values, so reports carry a flag saying so.
INDICATIVE_REPS = 200


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_output_flags(parser):
    parser.add_argument("--seed", type=int, default=0, help="base random seed (unsigned 64-bit)")
    parser.add_argument("--out", default=None, help="write the report to this path instead of stdout")
    parser.add_argument("--format", choices=("json", "csv"), default="json", help="report format")


def _add_fitting_flags(parser):
    parser.add_argument(
        "--split",
        action="store_true",
        help="estimate nuisances and the equation on disjoint record groups",
    )
    parser.add_argument(
        "--prior-rate",
        dest="prior_rate",
        type=float,
        default=0.05,
        help="disease-rate prior used to re-center the intercept start (default 0.05)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="gxefit",
        description="Case-control estimation under gene-environment independence.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="{fit,simulate,table1,check}")

    p_fit = sub.add_parser("fit", help="fit one case-control CSV dataset (header d,g,e)")
    p_fit.add_argument("input", help="CSV file with header d,g,e")
    p_fit.add_argument("--gene", choices=("bernoulli", "laplace"), required=True, help="gene-law family")
    _add_fitting_flags(p_fit)
    _add_output_flags(p_fit)

    p_sim = sub.add_parser("simulate", help="replicate one benchmark panel")
    p_sim.add_argument("--experiment", type=int, choices=(1, 2), required=True, help="gene family: 1 Bernoulli, 2 Laplace")
    p_sim.add_argument("--set", dest="param_set", type=int, choices=(1, 2), required=True, help="parameter set within the experiment")
    p_sim.add_argument("--cases", type=int, default=500, help="cases per replication")
    p_sim.add_argument("--controls", type=int, default=500, help="controls per replication")
    p_sim.add_argument("--reps", type=int, default=200, help="number of replications")
    p_sim.add_argument("--workers", type=int, default=1, help="worker processes (no effect on results)")
    _add_fitting_flags(p_sim)
    _add_output_flags(p_sim)

    p_tab = sub.add_parser("table1", help="regenerate the four-panel benchmark table")
    p_tab.add_argument("--cases", type=int, default=500, help="cases per replication")
    p_tab.add_argument("--controls", type=int, default=500, help="controls per replication")
    p_tab.add_argument("--reps", type=int, default=200, help="replications per panel")
    p_tab.add_argument("--workers", type=int, default=1, help="worker processes (no effect on results)")
    _add_fitting_flags(p_tab)
    _add_output_flags(p_tab)

    p_check = sub.add_parser("check", help="run the numerical invariant battery")
    p_check.add_argument("--out", default=None, help="also write a JSON report of the battery here")

    return parser


def _emit(text: str, out_path) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", newline="") as handle:
            handle.write(text)


def _beta_dict(values) -> dict:
    return {name: float(v) for name, v in zip(PARAM_NAMES, values)}


def _fit_config(args) -> FitConfig:
    return FitConfig(split_mode=args.split, split_seed=args.seed, prior_rate=args.prior_rate)


def _cmd_fit(args) -> None:
    sample = load_csv(args.input)
    dist = gene_model(args.gene, 0.5 if args.gene == "bernoulli" else 1.0)
    result = fit(sample, dist, _fit_config(args))
    if not result.converged:
        raise NumericError(
            f"fit did not converge (equation residual {result.eq_residual:.3g} "
            f"after {result.outer_iters} outer rounds); supply better data or settings"
        )
    report = {
        "version": __version__,
        "command": "fit",
        "config": {
            "input": args.input,
            "gene": args.gene,
            "seed": args.seed,
            "split": args.split,
            "prior_rate": args.prior_rate,
            "format": args.format,
        },
        "n_records": sample.n,
        "n_cases": sample.n1,
        "n_controls": sample.n0,
        "n_equation": result.n_equation,
        "beta_hat": _beta_dict(result.beta_hat.as_array()),
        "se": _beta_dict(result.se),
        "vcov": result.vcov,
        "p_hat": {"p0": result.p_hat.p0, "p1": result.p_hat.p1, "alpha": result.p_hat.alpha},
        "converged": result.converged,
        "newton_iters": result.newton_iters,
        "outer_iters": result.outer_iters,
        "eq_residual": result.eq_residual,
    }
    if args.format == "json":
        _emit(report_mod.json_text(report), args.out)
        return
    rows = [
        ["key", "value"],
        ["version", __version__],
        ["command", "fit"],
        ["input", args.input],
        ["gene", args.gene],
        ["seed", args.seed],
        ["split", args.split],
        ["prior_rate", args.prior_rate],
        ["n_records", sample.n],
        ["n_cases", sample.n1],
        ["n_controls", sample.n0],
        ["n_equation", result.n_equation],
        ["p1_hat", result.p_hat.p1],
        ["alpha_hat", result.p_hat.alpha],
        ["newton_iters", result.newton_iters],
        ["outer_iters", result.outer_iters],
        ["eq_residual", result.eq_residual],
        [],
        ["param", "estimate", "se"] + [f"vcov_{name}" for name in PARAM_NAMES],
    ]
    beta_arr = result.beta_hat.as_array()
    for k, name in enumerate(PARAM_NAMES):
        rows.append([name, beta_arr[k], result.se[k]] + list(result.vcov[k]))
    _emit(report_mod.csv_text(rows), args.out)


def _summary_block(summary) -> dict:
    return {
        "true": _beta_dict(summary.true_beta),
        "est": _beta_dict(summary.mean_est),
        "sd": None if summary.sample_sd is None else _beta_dict(summary.sample_sd),
        "sd_hat": _beta_dict(summary.mean_se),
        "n_converged": summary.n_converged,
        "replications": summary.replications,
    }


def _summary_rows(prefix, summary):
    rows = [prefix + ["true"] + list(summary.true_beta)]
    rows.append(prefix + ["est"] + list(summary.mean_est))
    sd = [None] * 5 if summary.sample_sd is None else list(summary.sample_sd)
    rows.append(prefix + ["sd"] + sd)
    rows.append(prefix + ["sd_hat"] + list(summary.mean_se))
    return rows


def _cmd_simulate(args) -> None:
    pop = simulate_mod.experiment_population(args.experiment, args.param_set)
    exp = simulate_mod.ExperimentSpec(
        n_cases=args.cases, n_controls=args.controls, replications=args.reps, seed=args.seed
    )
    summary = simulate_mod.run_experiment(pop, exp, _fit_config(args), workers=args.workers)
    config = {
        "experiment": args.experiment,
        "set": args.param_set,
        "gene": pop.gene.kind,
        "cases": args.cases,
        "controls": args.controls,
        "reps": args.reps,
        "seed": args.seed,
        "split": args.split,
        "prior_rate": args.prior_rate,
        "format": args.format,
    }
    report = {
        "version": __version__,
        "command": "simulate",
        "config": config,
        "indicative_only": args.reps < INDICATIVE_REPS,
        "panel": _summary_block(summary),
    }
    if args.format == "json":
        _emit(report_mod.json_text(report), args.out)
        return
    rows = [["key", "value"]]
    rows += [[key, value] for key, value in (("version", __version__), ("command", "simulate"))]
    rows += [[key, value] for key, value in config.items()]
    rows.append(["indicative_only", args.reps < INDICATIVE_REPS])
    rows.append(["n_converged", summary.n_converged])
    rows.append([])
    rows.append(["experiment", "set", "row"] + list(PARAM_NAMES))
    rows += _summary_rows([args.experiment, args.param_set], summary)
    _emit(report_mod.csv_text(rows), args.out)


def _cmd_table1(args) -> None:
    panels = simulate_mod.benchmark_panels(
        replications=args.reps,
        seed=args.seed,
        n_cases=args.cases,
        n_controls=args.controls,
        config=_fit_config(args),
        workers=args.workers,
    )
    config = {
        "cases": args.cases,
        "controls": args.controls,
        "reps": args.reps,
        "seed": args.seed,
        "split": args.split,
        "prior_rate": args.prior_rate,
        "format": args.format,
    }
    report = {
        "version": __version__,
        "command": "table1",
        "config": config,
        "indicative_only": args.reps < INDICATIVE_REPS,
        "panels": [
            {
                "experiment": panel["experiment"],
                "set": panel["set"],
                "gene": panel["gene"],
                "gene_column": panel["rows"]["gene_column"],
                "true": _beta_dict(panel["rows"]["true"]),
                "est": _beta_dict(panel["rows"]["est"]),
                "sd": _beta_dict(panel["rows"]["sd"]),
                "sd_hat": _beta_dict(panel["rows"]["sd_hat"]),
                "n_converged": panel["summary"].n_converged,
                "replications": panel["summary"].replications,
            }
            for panel in panels
        ],
    }
    if args.format == "json":
        _emit(report_mod.json_text(report), args.out)
        return
    rows = [["key", "value"], ["version", __version__], ["command", "table1"]]
    rows += [[key, value] for key, value in config.items()]
    rows.append(["indicative_only", args.reps < INDICATIVE_REPS])
    rows.append([])
    rows.append(["experiment", "set", "gene_column", "row"] + list(PARAM_NAMES))
    for panel in panels:
        prefix = [panel["experiment"], panel["set"], panel["rows"]["gene_column"]]
        for name in ("true", "est", "sd", "sd_hat"):
            rows.append(prefix + [name] + list(panel["rows"][name]))
    _emit(report_mod.csv_text(rows), args.out)


def _cmd_check(args) -> int:
    results = checks_mod.run_battery()
    for result in results:
        verdict = "PASS" if result.passed else "FAIL"
        sys.stdout.write(
            f"{verdict} {result.name}: value={result.value:.3g} tolerance={result.tolerance:.3g}"
            f" ({result.detail})\n"
        )
    if args.out is not None:
        report = {
            "version": __version__,
            "command": "check",
            "all_passed": all(r.passed for r in results),
            "checks": [
                {
                    "name": r.name,
                    "passed": r.passed,
                    "value": r.value,
                    "tolerance": r.tolerance,
                    "detail": r.detail,
                }
                for r in results
            ],
        }
        _emit(report_mod.json_text(report), args.out)
    return 0 if all(r.passed for r in results) else 3


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(f"gxefit: error: {exc}\n")
        return 1
    try:
        if args.command == "fit":
            _cmd_fit(args)
        elif args.command == "simulate":
            _cmd_simulate(args)
        elif args.command == "table1":
            _cmd_table1(args)
        elif args.command == "check":
            return _cmd_check(args)
    except (DataError, SupportError) as exc:
        sys.stderr.write(f"gxefit: data error: {exc}\n")
        return 2
    except ParameterError as exc:
        sys.stderr.write(f"gxefit: error: {exc}\n")
        return 1
    except (NumericError, GxefitError) as exc:
        sys.stderr.write(f"gxefit: numerical failure: {exc}\n")
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
