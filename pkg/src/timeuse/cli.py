"""Command-line interface: ``timeuse <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import harness, metrics, modelfit
from .composition import DAY_ORDER, PARTS, catalog_document, day_structure, ilr, week_mixture
from .objectives import OUTCOME_ORDER, WeekBmiRule, outcome, scalar_fitness


def _common(defaults: bool) -> argparse.ArgumentParser:
    # Global flags are accepted before or after the subcommand; the
    # subcommand copies use SUPPRESS so they never clobber earlier values.
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=d(0), help="base seed (run i uses seed + i)")
    p.add_argument("--runs", type=int, default=d(None), help="independent runs (default 30)")
    p.add_argument("--budget", type=int, default=d(None), help="evaluations per run")
    p.add_argument("--jobs", type=int, default=d(None),
                   help="worker processes (default: available cores)")
    p.add_argument("--out", default=d(None), help="output directory or file")
    return p


def _outcomes(text: str) -> list[str]:
    return [outcome(s.strip()).id for s in text.split(",") if s.strip()]


def _config_doc(args, algorithms, instance_key, instance, outcomes) -> dict:
    doc = {"algorithms": algorithms, instance_key: instance, "outcomes": outcomes,
           "seed": args.seed}
    if args.runs is not None:
        doc["runs"] = args.runs
    if args.budget is not None:
        doc["budget"] = args.budget
    if args.out is not None:
        doc["out"] = args.out
    return doc


def _run(doc: dict, args) -> int:
    config = harness.parse_config(doc)
    result = harness.run_batch(config, jobs=args.jobs)
    sys.stdout.write(harness.summary_text(result.summary))
    for name, path in result.files.items():
        print(f"# {name}: {path}", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    x = np.asarray(args.minutes, dtype=float)
    models = [outcome(m) for m in (_outcomes(args.outcome) if args.outcome else OUTCOME_ORDER)]
    if args.week is not None:
        bounds = week_mixture(args.week)
        if x.size != 28:
            raise ValueError("a week plan needs 28 values (7 days x 4 parts)")
    else:
        bounds = day_structure(args.day) if args.day else None
        if x.size != 4:
            raise ValueError("a day needs 4 values: " + ", ".join(PARTS))
    rule = WeekBmiRule(args.bmi_rule)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["outcome", "value", "score", "violation"])
    for m in models:
        fit = scalar_fitness(m, x, bounds, rule)
        writer.writerow([m.id, repr(fit.value), repr(float(m.score(fit.value))),
                         repr(fit.violation)])
    if x.size == 4:
        z = ilr(x)
        print("# ilr: " + " ".join(repr(float(v)) for v in z), file=sys.stderr)
    return 0


def cmd_optimize(args) -> int:
    doc = _config_doc(args, args.algorithm, "day", args.day, _outcomes(args.outcome))
    return _run(doc, args)


def cmd_optimize_week(args) -> int:
    doc = _config_doc(args, args.algorithm, "week", args.mixture, _outcomes(args.outcome))
    doc["bmi_rule"] = args.bmi_rule
    return _run(doc, args)


def cmd_pareto(args) -> int:
    doc = _config_doc(args, args.engines, "day", args.day, _outcomes(args.outcomes))
    doc["population"] = args.population
    return _run(doc, args)


def cmd_run(args) -> int:
    config = harness.load_config(args.config)
    overrides = {k: getattr(args, k) for k in ("runs", "budget", "out")
                 if getattr(args, k, None) is not None}
    if overrides or args.seed:
        doc = config.to_document()
        doc.update(overrides)
        if args.seed:
            doc["seed"] = args.seed
        config = harness.parse_config(doc)
    result = harness.run_batch(config, jobs=args.jobs)
    sys.stdout.write(harness.summary_text(result.summary))
    return 0


def cmd_oracle_grid(args) -> int:
    days = DAY_ORDER if args.day == "all" else [args.day]
    models = OUTCOME_ORDER if args.outcome == "all" else _outcomes(args.outcome)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["instance", "outcome", "step", "value", "score", *PARTS, "points"])
        for day in days:
            for m in models:
                res = metrics.grid_oracle(m, day, args.step)
                if res is None:
                    writer.writerow([day_structure(day).name, m, args.step, "", "", "", "", "", "", 0])
                    continue
                score = float(outcome(m).score(res.value))
                writer.writerow([day_structure(day).name, m, args.step, repr(res.value),
                                 repr(score), *(repr(v) for v in res.composition), res.points])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_fit(args) -> int:
    data = modelfit.Dataset.from_csv(args.data)
    fit = modelfit.fit_outcome_model(data, alpha=args.alpha)
    names = ["b0", "z1", "z2", "z3", "z1^2", "z1*z2", "z1*z3", "z2^2", "z2*z3", "z3^2"]
    doc = {
        "n": len(data),
        "coefficients": dict(zip(names, map(float, fit.coefficients))),
        "quadratic_coefficients": dict(zip(names, map(float, fit.quadratic.coefficients))),
        "rss_linear": fit.linear.rss,
        "rss_quadratic": fit.quadratic.rss,
        "F": fit.test.F,
        "p_value": fit.test.p_value,
        "keep_quadratic": fit.test.keep_quadratic,
    }
    json.dump(doc, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_report(args) -> int:
    table = harness.report(args.csv, args.out)
    if args.out is None:
        sys.stdout.write(harness.summary_text(table))
    return 0


def cmd_catalog(args) -> int:
    json.dump(catalog_document(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="timeuse", parents=[_common(True)],
        description="Optimise daily and weekly time-use compositions for health outcomes.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common(False)
    rules = [r.value for r in WeekBmiRule]

    p = sub.add_parser("evaluate", parents=[common], help="evaluate outcome models at a composition")
    p.add_argument("minutes", nargs="+", type=float, help="4 values (a day) or 28 (a week)")
    p.add_argument("--outcome", help="comma-separated outcomes (default: all four)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--day", help="day structure for the violation")
    group.add_argument("--week", type=int, help="week mixture for a 28-value plan")
    p.add_argument("--bmi-rule", choices=rules, default=WeekBmiRule.SUM_OF_ABS.value)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", parents=[common], help="single-objective runs on a day")
    p.add_argument("--algorithm", default="pso", help="de_rand1, de_current_to_rand1, pso, cmaes")
    p.add_argument("--day", required=True)
    p.add_argument("--outcome", required=True, help="one or more outcomes, comma-separated")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("optimize-week", parents=[common], help="single-objective runs on a week")
    p.add_argument("--algorithm", default="de_rand1")
    p.add_argument("--mixture", type=int, required=True, help="week mixture 1-6")
    p.add_argument("--outcome", required=True)
    p.add_argument("--bmi-rule", choices=rules, default=WeekBmiRule.SUM_OF_ABS.value)
    p.set_defaults(func=cmd_optimize_week)

    p = sub.add_parser("pareto", parents=[common], help="multi-objective runs on a day")
    p.add_argument("--engines", default="moead,nsga2,spea2")
    p.add_argument("--day", required=True)
    p.add_argument("--outcomes", required=True, help="2 to 4 outcomes, comma-separated")
    p.add_argument("--population", type=int, default=100)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("run", parents=[common], help="run a YAML/JSON experiment file")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle-grid", parents=[common], help="exhaustive lattice search")
    p.add_argument("--day", default="all")
    p.add_argument("--outcome", default="all")
    p.add_argument("--step", type=float, default=1.0)
    p.set_defaults(func=cmd_oracle_grid)

    p = sub.add_parser("fit", parents=[common], help="fit an outcome model to a CSV dataset")
    p.add_argument("data", help="CSV with columns sleep, sedentary, lpa, mvpa, outcome")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", parents=[common], help="summarise run CSV files")
    p.add_argument("csv", nargs="+")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("catalog", parents=[common], help="print day structures and week mixtures")
    p.set_defaults(func=cmd_catalog)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs is None:
        args.jobs = os.cpu_count() or 1
    try:
        return args.func(args)
    except harness.BatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
