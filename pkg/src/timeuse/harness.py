"""Experiment configuration, batch execution and result files.

A batch is a set of independent runs with seeds ``base + i``. Runs may be
spread over worker processes, but every output is ordered by (algorithm,
run index) so files do not depend on scheduling. Wall-clock times go to a
separate ``timings.csv`` so that the result files stay byte-identical
between repeated executions.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

from . import metrics
from .composition import DAY_ORDER, PARTS, WEEK_MIXTURES, day_structure, week_mixture
from .objectives import OUTCOME_ORDER, Direction, WeekBmiRule, evaluate, make_problem, outcome
from .opt_multi import ENGINES, MULTI_BUDGET, POPULATION, MoConfig, ParetoFront, engine_name, run_multi
from .opt_single import (ALGORITHMS, CmaesConfig, ConfigError, DeConfig, PsoConfig,
                         algorithm_name, default_budget, run_single)


class ParseError(ValueError):
    """A configuration document could not be turned into an ExperimentConfig."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class BatchError(RuntimeError):
    pass


_TOP_KEYS = ("algorithms", "day", "week", "outcomes", "runs", "budget", "seed",
             "population", "bmi_rule", "params", "out")
_ALIAS_KEYS = {"algorithm": "algorithms", "outcome": "outcomes", "mixture": "week"}


def _param_fields(algorithm: str) -> tuple[type, dict[str, Any]]:
    if algorithm in ENGINES:
        cls, base = MoConfig, {}
    elif algorithm == "pso":
        cls, base = PsoConfig, {}
    elif algorithm == "cmaes":
        cls, base = CmaesConfig, {}
    else:
        cls = DeConfig
        base = {"mutation": "rand1" if algorithm == "de_rand1" else "current_to_rand1"}
    return cls, base


def _population(algorithm: str, params: Mapping[str, Any], population: int) -> int:
    if algorithm in ENGINES:
        return int(params.get("population", population))
    if algorithm == "pso":
        return int(params.get("swarm", PsoConfig.swarm))
    if algorithm == "cmaes":
        return int(params.get("lam", CmaesConfig.lam))
    return int(params.get("population", DeConfig.population))


@dataclass(frozen=True)
class ExperimentConfig:
    algorithms: tuple[str, ...]
    instance: str  # day structure name or "week<i>"
    outcomes: tuple[str, ...]
    runs: int = 30
    budget: int = 25_000
    seed: int = 0
    population: int = POPULATION
    bmi_rule: str = WeekBmiRule.SUM_OF_ABS.value
    params: tuple[tuple[str, Any], ...] = ()
    out: str = "results"

    @property
    def multi(self) -> bool:
        return self.algorithms[0] in ENGINES

    @property
    def is_week(self) -> bool:
        return self.instance.startswith("week")

    def algorithm_config(self, algorithm: str):
        cls, base = _param_fields(algorithm)
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = dict(base)
        kwargs.update({k: v for k, v in self.params if k in names})
        if cls is MoConfig:
            kwargs.setdefault("population", self.population)
        return cls(**kwargs)

    def to_document(self) -> dict:
        """Fully resolved document; ``parse_config`` of it gives back this config."""
        doc: dict[str, Any] = {"algorithms": list(self.algorithms)}
        if self.is_week:
            doc["week"] = int(self.instance[4:])
        else:
            doc["day"] = self.instance
        doc["outcomes"] = list(self.outcomes)
        doc.update(runs=self.runs, budget=self.budget, seed=self.seed)
        if self.multi:
            doc["population"] = self.population
        if self.is_week:
            doc["bmi_rule"] = self.bmi_rule
        doc["params"] = dict(self.params)
        doc["out"] = self.out
        return doc


def emit_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_document(), sort_keys=False)


def _as_list(value, path: str) -> list:
    if isinstance(value, str):
        return [s.strip() for s in value.split(",") if s.strip()]
    if isinstance(value, (list, tuple)):
        return list(value)
    raise ParseError(path, f"expected a name or a list, got {type(value).__name__}")


def _int(doc: Mapping, key: str, default: int, minimum: int) -> int:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ParseError(key, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ParseError(key, f"must be at least {minimum}, got {value}")
    return int(value)


def parse_config(document: str | Mapping) -> ExperimentConfig:
    """Validate a YAML/JSON document (or an already parsed mapping)."""
    if isinstance(document, str):
        try:
            document = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise ParseError("", f"malformed document: {exc}") from None
    if not isinstance(document, Mapping):
        raise ParseError("", "the document must be a mapping")

    doc: dict[str, Any] = {}
    for key, value in document.items():
        canonical = _ALIAS_KEYS.get(key, key)
        if canonical not in _TOP_KEYS:
            raise ParseError(str(key), "unknown key")
        if canonical in doc:
            raise ParseError(str(key), f"duplicates {canonical!r}")
        doc[canonical] = value

    if "algorithms" not in doc:
        raise ParseError("algorithms", "required")
    algos = []
    for i, name in enumerate(_as_list(doc["algorithms"], "algorithms")):
        try:
            algos.append(resolve_algorithm(str(name)))
        except KeyError:
            raise ParseError(f"algorithms[{i}]", f"unknown algorithm {name!r}; expected one of "
                                                 f"{', '.join(ALGORITHMS + ENGINES)}") from None
    if not algos:
        raise ParseError("algorithms", "empty")
    if len(set(algos)) != len(algos):
        raise ParseError("algorithms", "repeated algorithm")
    multi = algos[0] in ENGINES
    if any((a in ENGINES) != multi for a in algos):
        raise ParseError("algorithms", "cannot mix single- and multi-objective algorithms")

    if ("day" in doc) == ("week" in doc):
        raise ParseError("day", "exactly one of 'day' or 'week' is required")
    if "day" in doc:
        try:
            instance = day_structure(str(doc["day"])).name
        except KeyError:
            raise ParseError("day", f"unknown day structure {doc['day']!r}; expected one of "
                                    f"{', '.join(DAY_ORDER)}") from None
    else:
        week = doc["week"]
        if isinstance(week, bool) or not isinstance(week, int):
            raise ParseError("week", f"expected a mixture index, got {week!r}")
        try:
            instance = f"week{week_mixture(week).index}"
        except KeyError:
            raise ParseError("week", f"no week mixture {week}; expected 1-{len(WEEK_MIXTURES)}") from None
        if multi:
            raise ParseError("week", "multi-objective engines run on day structures only")

    if "outcomes" not in doc:
        raise ParseError("outcomes", "required")
    outcomes = []
    for i, name in enumerate(_as_list(doc["outcomes"], "outcomes")):
        try:
            outcomes.append(outcome(str(name)).id)
        except KeyError:
            raise ParseError(f"outcomes[{i}]", f"unknown outcome {name!r}; expected one of "
                                               f"{', '.join(OUTCOME_ORDER)}") from None
    if len(set(outcomes)) != len(outcomes):
        raise ParseError("outcomes", "repeated outcome")
    if multi and not 2 <= len(outcomes) <= 4:
        raise ParseError("outcomes", "multi-objective runs need 2 to 4 outcomes")
    if not multi and not outcomes:
        raise ParseError("outcomes", "at least one outcome is required")

    runs = _int(doc, "runs", 30, 1)
    seed = _int(doc, "seed", 0, 0)
    population = _int(doc, "population", POPULATION, 2)
    default = MULTI_BUDGET if multi else default_budget(make_problem(instance))
    budget = _int(doc, "budget", default, 1)

    rule = doc.get("bmi_rule", WeekBmiRule.SUM_OF_ABS.value)
    try:
        rule = WeekBmiRule(rule).value
    except ValueError:
        raise ParseError("bmi_rule", f"expected one of "
                                     f"{', '.join(r.value for r in WeekBmiRule)}") from None

    params = doc.get("params") or {}
    if not isinstance(params, Mapping):
        raise ParseError("params", "expected a mapping")
    allowed = set()
    for a in algos:
        cls, base = _param_fields(a)
        allowed |= {f.name for f in dataclasses.fields(cls)} - set(base)
    for key in params:
        if key not in allowed:
            raise ParseError(f"params.{key}", "unknown parameter for "
                                               f"{', '.join(algos)}")
    if multi and "population" in params:
        raise ParseError("params.population", "use the top-level 'population' key")
    out = str(doc.get("out", "results"))

    config = ExperimentConfig(tuple(algos), instance, tuple(outcomes), runs, budget, seed,
                              population, rule, tuple(sorted(params.items())), out)
    for a in algos:
        try:
            config.algorithm_config(a)
        except (ConfigError, TypeError) as exc:
            raise ParseError("params", str(exc)) from None
        need = _population(a, params, population)
        if budget < need:
            raise ParseError("budget", f"{budget} is smaller than the population ({need}) of {a}")
    return config


def resolve_algorithm(name: str) -> str:
    """Canonical id of a single-objective algorithm or a multi-objective engine."""
    try:
        return algorithm_name(name)
    except KeyError:
        return engine_name(name)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# --- batch execution --------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    instance: str
    algorithm: str
    run: int
    seed: int
    outcome: str  # a single id, or ids joined by "+" for multi-objective rows
    value: float  # raw outcome value, or the normalised hypervolume
    score: float  # value as compared: |f1| for BMI, hypervolume for fronts
    violation: float
    evaluations: int
    wall_time: float = field(default=0.0, compare=False)
    front_size: int | None = None

    @property
    def feasible(self) -> bool:
        return self.violation == 0


@dataclass
class BatchResult:
    config: ExperimentConfig
    rows: list[ResultRow]
    summary: list[dict]
    files: dict[str, Path]
    fronts: list[ParetoFront] = field(default_factory=list)


def _execute(task):
    kind, algorithm, instance, outcome_id, budget, seed, cfg, bmi_rule = task
    start = time.perf_counter()
    if kind == "single":
        result = run_single(algorithm, instance, outcome_id, budget, seed, cfg, bmi_rule)
    else:
        result = run_multi(algorithm, instance, outcome_id, cfg.population, budget, seed, cfg)
    return result, time.perf_counter() - start


def _tasks(config: ExperimentConfig) -> list[tuple]:
    tasks = []
    for algorithm in config.algorithms:
        cfg = config.algorithm_config(algorithm)
        for out_id in ([config.outcomes] if config.multi else config.outcomes):
            for i in range(config.runs):
                tasks.append(("multi" if config.multi else "single", algorithm, config.instance,
                              out_id, config.budget, config.seed + i, cfg, config.bmi_rule))
    return tasks


def _run_tasks(tasks: list[tuple], jobs: int) -> list:
    results = []
    if jobs <= 1 or len(tasks) <= 1:
        for task in tasks:
            try:
                results.append(_execute(task))
            except Exception as exc:
                raise BatchError(f"{task[1]} run with seed {task[5]} failed: {exc}") from exc
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_execute, task) for task in tasks]
        for task, fut in zip(tasks, futures):
            try:
                results.append(fut.result())
            except Exception as exc:
                for f in futures:
                    f.cancel()
                raise BatchError(f"{task[1]} run with seed {task[5]} failed: {exc}") from exc
    return results


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


RUN_COLUMNS = ("instance", "algorithm", "run", "seed", "outcome", "value", "score",
               "violation", "feasible", "evaluations", "front_size")
SUMMARY_COLUMNS = ("instance", "outcome", "index", "algorithm", "n", "mean", "std", "best",
                   "worst", "median", "stat")


def _row_record(row: ResultRow) -> dict:
    return {"instance": row.instance, "algorithm": row.algorithm, "run": row.run,
            "seed": row.seed, "outcome": row.outcome, "value": row.value, "score": row.score,
            "violation": row.violation, "feasible": int(row.feasible),
            "evaluations": row.evaluations, "front_size": row.front_size}


def _maximize(outcome_label: str) -> bool:
    if "+" in outcome_label:
        return True  # hypervolume
    return outcome(outcome_label).direction is Direction.MAXIMIZE


def summarize_rows(rows: Sequence[Mapping[str, Any]]) -> list[dict]:
    """Per (instance, outcome, algorithm) statistics of the ``score`` column.

    The ``stat`` entry lists, for each algorithm, the 1-based indices of the
    algorithms it significantly beats (pairwise Kruskal-Wallis, Bonferroni).
    """
    groups: dict[tuple[str, str], dict[str, list[float]]] = {}
    for r in rows:
        key = (str(r["instance"]), str(r["outcome"]))
        groups.setdefault(key, {}).setdefault(str(r["algorithm"]), []).append(float(r["score"]))
    table = []
    for (instance, label), per_algo in groups.items():
        maximize = _maximize(label)
        flags = metrics.significance_flags(per_algo, maximize)
        for index, (algorithm, values) in enumerate(per_algo.items(), start=1):
            s = metrics.summarize(values, maximize)
            table.append({"instance": instance, "outcome": label, "index": index,
                          "algorithm": algorithm, "n": s.n, "mean": s.mean, "std": s.std,
                          "best": s.best, "worst": s.worst, "median": s.median,
                          "stat": ";".join(map(str, flags[algorithm]))})
    return table


def read_run_csv(paths: Sequence[str | Path]) -> list[dict]:
    rows = []
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"instance", "algorithm", "outcome", "score"} - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing columns {', '.join(sorted(missing))}")
            rows.extend(reader)
    return rows


def write_summary(path: Path, table: Sequence[Mapping[str, Any]]) -> Path:
    return _write_csv(path, SUMMARY_COLUMNS, ([r[c] for c in SUMMARY_COLUMNS] for r in table))


def report(paths: Sequence[str | Path], out: str | Path | None = None) -> list[dict]:
    table = summarize_rows(read_run_csv(paths))
    if out is not None:
        write_summary(Path(out), table)
    return table


def front_plot_rows(front: ParetoFront, seeds: Sequence[int] | None = None):
    """Header and rows of raw outcome values plus decision minutes.

    The BMI axis is |f1|; the signed value is kept as ``bmi_raw``.
    """
    ids = list(front.outcomes)
    raw = front.raw() if len(front) else np.empty((0, len(ids)))
    header = list(ids)
    bmi = "bmi" in ids
    if bmi:
        header.append("bmi_raw")
    header += list(PARTS)
    if seeds is not None:
        header.append("seed")
    rows = []
    signed = evaluate("bmi", front.X) if bmi and len(front) else None
    for k in range(len(front)):
        row = [float(v) for v in raw[k]]
        if bmi:
            row.append(float(signed[k]))
        row += [float(v) for v in front.X[k]]
        if seeds is not None:
            row.append(int(seeds[k]))
        rows.append(row)
    return header, rows


def front_filename(front: ParetoFront) -> str:
    return f"front_{front.engine}_{front.instance}_{'+'.join(front.outcomes)}.csv"


def emit_front_plot_data(fronts: Sequence[ParetoFront], out_dir: str | Path,
                         seeds: Sequence[Sequence[int]] | None = None) -> list[Path]:
    """Write one CSV per front; fronts must be non-empty."""
    out_dir = Path(out_dir)
    paths = []
    for i, front in enumerate(fronts):
        if not len(front):
            raise ValueError(f"front of {front.engine} on {front.instance} is empty")
        header, rows = front_plot_rows(front, None if seeds is None else seeds[i])
        paths.append(_write_csv(out_dir / front_filename(front), header, rows))
    return paths


def merged_front(fronts: Sequence[ParetoFront]) -> tuple[ParetoFront, np.ndarray]:
    """Non-dominated union of several runs of one engine, with each point's seed."""
    X = np.vstack([f.X for f in fronts])
    F = np.vstack([f.F for f in fronts])
    seeds = np.concatenate([np.full(len(f), f.seed) for f in fronts])
    order = np.lexsort(F.T[::-1])
    X, F, seeds = X[order], F[order], seeds[order]
    keep = []
    for i in range(len(F)):
        dominated = np.any(np.all(F <= F[i], axis=1) & np.any(F < F[i], axis=1))
        duplicate = any(np.array_equal(F[i], F[j]) for j in keep)
        if not dominated and not duplicate:
            keep.append(i)
    first = fronts[0]
    merged = ParetoFront(first.engine, first.instance, first.outcomes, first.seed,
                         X[keep], F[keep], sum(f.evaluations for f in fronts), first.models)
    return merged, seeds[keep]


def run_batch(config: ExperimentConfig, jobs: int | None = None, out: str | Path | None = None,
              write: bool = True) -> BatchResult:
    """Execute every run of ``config`` and write the result files.

    Files: ``runs.csv``, ``summary.csv``, ``config.yaml``, ``timings.csv``,
    plus ``history.jsonl`` (single-objective) or ``front_*.csv``
    (multi-objective).
    """
    jobs = os.cpu_count() or 1 if jobs is None else max(1, int(jobs))
    tasks = _tasks(config)
    results = _run_tasks(tasks, jobs)
    rows: list[ResultRow] = []
    fronts: list[ParetoFront] = []
    histories = []
    if config.multi:
        fronts = [r for r, _ in results]
        _, lower, upper = metrics.normalize_fronts([f.F for f in fronts])
        label = "+".join(config.outcomes)
        for task, (front, wall) in zip(tasks, results):
            hv = metrics.normalized_hypervolume(front.F, lower, upper).value
            rows.append(ResultRow(config.instance, front.engine, task[5] - config.seed, task[5],
                                  label, hv, hv, 0.0, front.evaluations, wall, len(front)))
    else:
        for task, (rec, wall) in zip(tasks, results):
            rows.append(ResultRow(config.instance, rec.algorithm, task[5] - config.seed, task[5],
                                  rec.outcome, float(rec.best.value), float(rec.score),
                                  float(rec.best.violation), rec.evaluations, wall))
            histories.append({"algorithm": rec.algorithm, "instance": rec.instance,
                              "outcome": rec.outcome, "seed": rec.seed,
                              "best_x": [float(v) for v in rec.best_x],
                              "history": [[int(e), float(v), float(s)] for e, v, s in rec.history]})
    records = [_row_record(r) for r in rows]
    summary = summarize_rows(records)
    files: dict[str, Path] = {}
    if write:
        out_dir = Path(out if out is not None else config.out)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "config.yaml").write_text(emit_config(config))
            files["config"] = out_dir / "config.yaml"
            files["runs"] = _write_csv(out_dir / "runs.csv", RUN_COLUMNS,
                                       ([r[c] for c in RUN_COLUMNS] for r in records))
            files["summary"] = write_summary(out_dir / "summary.csv", summary)
            files["timings"] = _write_csv(out_dir / "timings.csv",
                                          ("algorithm", "run", "seed", "wall_time"),
                                          ((r.algorithm, r.run, r.seed, round(r.wall_time, 6))
                                           for r in rows))
            if histories:
                path = out_dir / "history.jsonl"
                with open(path, "w") as fh:
                    for h in histories:
                        fh.write(json.dumps(h, sort_keys=True) + "\n")
                files["history"] = path
            if fronts:
                for engine in config.algorithms:
                    runs = [f for f in fronts if f.engine == engine and len(f)]
                    if not runs:
                        continue
                    merged, seeds = merged_front(runs)
                    [path] = emit_front_plot_data([merged], out_dir, [seeds])
                    files[f"front_{engine}"] = path
        except OSError as exc:
            raise BatchError(f"cannot write results to {out_dir}: {exc}") from exc
    return BatchResult(config, rows, summary, files, fronts)


def summary_text(table: Sequence[Mapping[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for r in table:
        writer.writerow([_fmt(r[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()
