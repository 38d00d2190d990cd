"""Evolutionary optimisation of 24-hour time-use compositions."""

from .composition import (MINUTES_PER_DAY, ActivityComposition, CompositionError, DayStructure,
                          WeekMixture, WeekPlan, bound_violation, closure, day_structure, ilr,
                          week_mixture, week_violation)
from .metrics import (grid_oracle, hypervolume, kruskal_wallis, bonferroni, mean_std,
                      normalize_fronts)
from .objectives import (OUTCOMES, ObjectiveVector, OutcomeModel, ScalarFitness, evaluate,
                         evaluate_week, lex_compare, objective_vector, outcome, scalar_fitness)
from .opt_multi import ParetoFront, run_multi
from .opt_single import RunRecord, run_single

__version__ = "0.1.0"

__all__ = [
    "MINUTES_PER_DAY", "ActivityComposition", "CompositionError", "DayStructure", "WeekMixture",
    "WeekPlan", "bound_violation", "closure", "day_structure", "ilr", "week_mixture",
    "week_violation", "grid_oracle", "hypervolume", "kruskal_wallis", "bonferroni", "mean_std",
    "normalize_fronts", "OUTCOMES", "ObjectiveVector", "OutcomeModel", "ScalarFitness",
    "evaluate", "evaluate_week", "lex_compare", "objective_vector", "outcome", "scalar_fitness",
    "ParetoFront", "run_multi", "RunRecord", "run_single",
]
