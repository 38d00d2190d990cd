"""Health-outcome models and the fitness functions built on them.

Each outcome is a quadratic polynomial in the ilr coordinates of a day's
composition. Single-objective search uses a lexicographic fitness
(violation first, then outcome value); multi-objective search uses a vector
of outcome values converted to a minimisation convention.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .composition import (
    N_PARTS,
    SUM_TOL,
    DayStructure,
    WeekMixture,
    WeekPlan,
    bound_violation,
    ilr,
    repair,
    week_mixture,
    day_structure,
)


class Direction(enum.Enum):
    MAXIMIZE = "max"
    MINIMIZE_ABSOLUTE = "min_abs"


@dataclass(frozen=True)
class OutcomeModel:
    id: str
    symbol: str
    label: str
    coefficients: tuple[float, ...]
    direction: Direction

    def __post_init__(self):
        if len(self.coefficients) != 10:
            raise ValueError(f"{self.id}: expected 10 coefficients")

    @cached_property
    def beta(self) -> np.ndarray:
        return np.asarray(self.coefficients, dtype=float)

    @property
    def is_linear(self) -> bool:
        return not any(self.coefficients[4:])

    def key(self, value):
        """Minimisation key for a raw outcome value."""
        if self.direction is Direction.MAXIMIZE:
            return -np.asarray(value, dtype=float)
        return np.abs(np.asarray(value, dtype=float))

    def score(self, value):
        """Value as reported in result tables: |f| for BMI, f otherwise."""
        if self.direction is Direction.MINIMIZE_ABSOLUTE:
            return np.abs(value)
        return value


OUTCOMES: Mapping[str, OutcomeModel] = MappingProxyType({
    "bmi": OutcomeModel(
        "bmi", "f1", "BMI",
        (0.23307, -0.59691, 0.05029, 0.68497, 0, 0, 0, 0, 0, 0),
        Direction.MINIMIZE_ABSOLUTE),
    "cognition": OutcomeModel(
        "cognition", "f2", "Cognition",
        (2.3508268, -0.032037, 0.0670568, -0.003155, 0, 0, 0, 0, 0, 0),
        Direction.MAXIMIZE),
    "life_satisfaction": OutcomeModel(
        "life_satisfaction", "f3", "Life satisfaction",
        (12395.053, 2255.008, -885.351, -1264.635, 0, 0, 0, 0, 0, 0),
        Direction.MAXIMIZE),
    "fitness": OutcomeModel(
        "fitness", "f4", "Fitness",
        (68.85903, -17.84326, -1.77607, -11.25996,
         3.15694, 13.88458, -5.12788, -6.85649, 2.69689, 2.52276),
        Direction.MAXIMIZE),
})
OUTCOME_ORDER = ("bmi", "cognition", "life_satisfaction", "fitness")

_ALIASES = {m.symbol: m.id for m in OUTCOMES.values()}
_ALIASES.update({"ls": "life_satisfaction", "life": "life_satisfaction",
                 "vocab": "cognition", "vo2max": "fitness"})


def outcome(name: str | OutcomeModel) -> OutcomeModel:
    if isinstance(name, OutcomeModel):
        return name
    key = name.strip().lower().replace("-", "_").replace(" ", "_")
    key = _ALIASES.get(key, key)
    try:
        return OUTCOMES[key]
    except KeyError:
        raise KeyError(f"unknown outcome {name!r}; expected one of "
                       f"{', '.join(OUTCOME_ORDER)} or f1..f4") from None


def ilr_terms(z) -> np.ndarray:
    """Design terms [1, z1, z2, z3, z1^2, z1z2, z1z3, z2^2, z2z3, z3^2]."""
    z = np.asarray(z, dtype=float)
    z1, z2, z3 = z[..., 0], z[..., 1], z[..., 2]
    return np.stack([np.ones_like(z1), z1, z2, z3,
                     z1 * z1, z1 * z2, z1 * z3, z2 * z2, z2 * z3, z3 * z3], axis=-1)


def evaluate(model: OutcomeModel | str, x):
    """Outcome value for one composition or a batch of them (trailing axis 4)."""
    model = outcome(model)
    value = ilr_terms(ilr(x)) @ model.beta
    return float(value) if np.ndim(value) == 0 else value


class WeekBmiRule(enum.Enum):
    """How daily BMI values combine into a week score."""

    SUM_OF_ABS = "sum_abs"  # sum_d |f1(x_d)|
    ABS_OF_SUM = "abs_sum"  # |sum_d f1(x_d)|


DEFAULT_WEEK_BMI_RULE = WeekBmiRule.SUM_OF_ABS


def _week_total(model: OutcomeModel, daily: np.ndarray, rule: WeekBmiRule) -> np.ndarray:
    if model.direction is Direction.MINIMIZE_ABSOLUTE and rule is WeekBmiRule.SUM_OF_ABS:
        return np.abs(daily).sum(axis=-1)
    return daily.sum(axis=-1)


def evaluate_week(model: OutcomeModel | str, week: WeekPlan,
                  bmi_rule: WeekBmiRule = DEFAULT_WEEK_BMI_RULE) -> float:
    model = outcome(model)
    daily = evaluate(model, week.as_array())
    return float(_week_total(model, daily, WeekBmiRule(bmi_rule)))


@dataclass(frozen=True, order=False)
class ScalarFitness:
    violation: float
    value: float


def fitness_key(model: OutcomeModel | str, fit: ScalarFitness) -> tuple[float, float]:
    """Sort key: smaller is better."""
    model = outcome(model)
    return (fit.violation, float(model.key(fit.value)))


def lex_compare(model: OutcomeModel | str, a: ScalarFitness, b: ScalarFitness) -> int:
    """-1 if a is better than b, 1 if worse, 0 if equivalent."""
    ka, kb = fitness_key(model, a), fitness_key(model, b)
    return (ka > kb) - (ka < kb)


def scalar_fitness(model: OutcomeModel | str, x, bounds: DayStructure | WeekMixture | None = None,
                   bmi_rule: WeekBmiRule = DEFAULT_WEEK_BMI_RULE) -> ScalarFitness:
    """Lexicographic fitness of a day composition or a week plan.

    ``x`` is a WeekPlan, or a 4-vector with ``bounds`` a DayStructure, or a
    28-vector with ``bounds`` a WeekMixture. No repair is applied here.
    """
    model = outcome(model)
    if isinstance(x, WeekPlan):
        violation = sum(float(bound_violation(c.as_array(), d)) for d, c in x.days)
        return ScalarFitness(violation, evaluate_week(model, x, bmi_rule))
    if isinstance(bounds, WeekMixture):
        return scalar_fitness(model, WeekPlan.from_vector(bounds, x), bmi_rule=bmi_rule)
    x = np.asarray(x, dtype=float)
    violation = 0.0 if bounds is None else float(bound_violation(x, bounds))
    return ScalarFitness(violation, float(evaluate(model, x)))


@dataclass(frozen=True)
class ObjectiveVector:
    ids: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if not 2 <= len(self.ids) <= 4:
            raise ValueError("an objective vector has 2 to 4 components")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError(f"duplicate outcomes in {self.ids}")
        if len(self.values) != len(self.ids):
            raise ValueError("ids and values differ in length")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def outcome_subset(ids: Iterable[str | OutcomeModel]) -> tuple[OutcomeModel, ...]:
    models = tuple(outcome(i) for i in ids)
    if not 2 <= len(models) <= 4:
        raise ValueError(f"an outcome subset has 2 to 4 members, got {len(models)}")
    if len({m.id for m in models}) != len(models):
        raise ValueError("outcome subset has duplicates")
    return models


def objective_matrix(models: Sequence[OutcomeModel], x) -> np.ndarray:
    """Minimisation-convention objectives, one column per outcome."""
    z = ilr_terms(ilr(x))
    return np.stack([m.key(z @ m.beta) for m in models], axis=-1)


def objective_vector(subset: Iterable[str | OutcomeModel], x) -> ObjectiveVector:
    models = outcome_subset(subset)
    values = objective_matrix(models, np.asarray(x, dtype=float))
    return ObjectiveVector(tuple(m.id for m in models), tuple(float(v) for v in values))


def raw_from_minimized(models: Sequence[OutcomeModel], f) -> np.ndarray:
    """Undo the negation of maximised outcomes (BMI stays |f1|)."""
    f = np.array(f, dtype=float, copy=True)
    for j, m in enumerate(models):
        if m.direction is Direction.MAXIMIZE:
            f[..., j] = -f[..., j]
    return f


def snap_violation(u):
    """Treat violations within closure round-off as exact feasibility."""
    u = np.asarray(u, dtype=float)
    return np.where(u <= SUM_TOL, 0.0, u)


class Problem:
    """A bounded search space of one or seven days, with batch scoring.

    Decision vectors are day-major: ``[day0 parts..., day1 parts..., ...]``.
    """

    days: tuple[DayStructure, ...]
    name: str

    @property
    def n_days(self) -> int:
        return len(self.days)

    @property
    def dim(self) -> int:
        return N_PARTS * self.n_days

    @cached_property
    def lower(self) -> np.ndarray:
        return np.concatenate([d.lower_array for d in self.days])

    @cached_property
    def upper(self) -> np.ndarray:
        return np.concatenate([d.upper_array for d in self.days])

    def repair(self, x) -> np.ndarray:
        return repair(x)

    def violation(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        per_day = np.maximum(0.0, np.maximum(x - self.upper, self.lower - x))
        per_day = per_day.reshape(*x.shape[:-1], self.n_days, N_PARTS).sum(axis=-1)
        return snap_violation(per_day).sum(axis=-1)

    def day_values(self, model: OutcomeModel, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        days = x.reshape(*x.shape[:-1], self.n_days, N_PARTS)
        return ilr_terms(ilr(days)) @ model.beta

    def random_population(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform within per-variable bounds, then closed per day."""
        x = rng.uniform(self.lower, self.upper, size=(n, self.dim))
        return self.repair(x)

    def describe(self) -> str:
        return self.name


class DayProblem(Problem):
    def __init__(self, day: DayStructure | str):
        self.day = day_structure(day) if isinstance(day, str) else day
        self.days = (self.day,)
        self.name = self.day.name


class WeekProblem(Problem):
    def __init__(self, mixture: WeekMixture | int):
        self.mixture = mixture if isinstance(mixture, WeekMixture) else week_mixture(mixture)
        self.days = tuple(self.mixture.days())
        self.name = f"week{self.mixture.index}"


def make_problem(instance: str | int | DayStructure | WeekMixture) -> Problem:
    """``"STD"`` etc. for a day, ``"week1"`` / ``1`` / a WeekMixture for a week."""
    if isinstance(instance, Problem):
        return instance
    if isinstance(instance, DayStructure):
        return DayProblem(instance)
    if isinstance(instance, WeekMixture):
        return WeekProblem(instance)
    if isinstance(instance, int):
        return WeekProblem(instance)
    text = str(instance).strip()
    if text.lower().startswith("week"):
        return WeekProblem(int(text[4:]))
    return DayProblem(text)


@dataclass
class SingleObjective:
    """Lexicographic scoring of a batch against one outcome on one problem."""

    problem: Problem
    model: OutcomeModel
    bmi_rule: WeekBmiRule = DEFAULT_WEEK_BMI_RULE

    def __call__(self, x) -> tuple[np.ndarray, np.ndarray]:
        """(violation, raw value) for already repaired vectors."""
        daily = self.problem.day_values(self.model, x)
        if self.problem.n_days == 1:
            return self.problem.violation(x), daily[..., 0]
        return self.problem.violation(x), _week_total(self.model, daily, self.bmi_rule)

    def key(self, value) -> np.ndarray:
        return self.model.key(value)


@dataclass
class MultiObjective:
    problem: Problem
    models: tuple[OutcomeModel, ...]

    def __post_init__(self):
        self.models = outcome_subset(self.models)
        if self.problem.n_days != 1:
            raise ValueError("multi-objective search is defined on single days only")

    @property
    def n_obj(self) -> int:
        return len(self.models)

    def __call__(self, x) -> tuple[np.ndarray, np.ndarray]:
        """(violation, minimisation objectives) for repaired vectors."""
        return self.problem.violation(x), objective_matrix(self.models, x)
