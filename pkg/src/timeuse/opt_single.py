"""Single-objective optimisers over day and week decision vectors.

All optimisers minimise the lexicographic key ``(violation, outcome key)``,
where the outcome key is ``-f`` for maximised outcomes and ``|f|`` for BMI.
Every candidate is floored, closed per day and then scored, so each
evaluated vector sums to 1440 minutes per day.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .composition import repair
from .objectives import (
    DEFAULT_WEEK_BMI_RULE,
    OutcomeModel,
    Problem,
    ScalarFitness,
    SingleObjective,
    WeekBmiRule,
    make_problem,
    outcome,
)

DAY_BUDGET = 25_000
WEEK_BUDGET = 125_000

ALGORITHMS = ("de_rand1", "de_current_to_rand1", "pso", "cmaes")
_ALGORITHM_ALIASES = {
    "de": "de_rand1",
    "de/rand/1": "de_rand1",
    "rand1": "de_rand1",
    "de/current-to-rand/1": "de_current_to_rand1",
    "de_ctr1": "de_current_to_rand1",
    "current_to_rand1": "de_current_to_rand1",
    "cma-es": "cmaes",
    "cma_es": "cmaes",
    "cma": "cmaes",
}


class ConfigError(ValueError):
    pass


def algorithm_name(name: str) -> str:
    key = name.strip().lower().replace("-", "_") if name not in _ALGORITHM_ALIASES else name
    key = _ALGORITHM_ALIASES.get(name.strip().lower(), _ALGORITHM_ALIASES.get(key, key))
    if key not in ALGORITHMS:
        raise KeyError(f"unknown algorithm {name!r}; expected one of {', '.join(ALGORITHMS)}")
    return key


@dataclass(frozen=True)
class DeConfig:
    population: int = 50
    F: float = 0.5
    Cr: float = 0.5
    mutation: str = "rand1"  # or "current_to_rand1"
    K: float | None = None  # None: K ~ U[0, 1] per individual and generation

    def __post_init__(self):
        if self.population < 4:
            raise ConfigError("DE needs a population of at least 4")
        if not 0 < self.F <= 2:
            raise ConfigError("DE scale factor F must lie in (0, 2]")
        if not 0 <= self.Cr <= 1:
            raise ConfigError("DE crossover rate Cr must lie in [0, 1]")
        if self.mutation not in ("rand1", "current_to_rand1"):
            raise ConfigError(f"unknown DE mutation {self.mutation!r}")


@dataclass(frozen=True)
class PsoConfig:
    swarm: int = 50
    c1: float = 1.0
    c2: float = 1.0
    inertia: float = 0.7298
    vmax_fraction: float | None = 0.5  # |v_i| <= fraction * (upper_i - lower_i)

    def __post_init__(self):
        if self.swarm < 2:
            raise ConfigError("PSO needs at least 2 particles")
        if self.c1 < 0 or self.c2 < 0:
            raise ConfigError("PSO acceleration coefficients must be non-negative")


@dataclass(frozen=True)
class CmaesConfig:
    lam: int = 10
    sigma: float = 0.3
    tolx: float = 1e-12

    def __post_init__(self):
        if self.lam < 2:
            raise ConfigError("CMA-ES needs lambda >= 2")
        if self.sigma <= 0:
            raise ConfigError("CMA-ES step size must be positive")


@dataclass
class RunRecord:
    algorithm: str
    instance: str
    outcome: str
    seed: int
    best_x: np.ndarray
    best: ScalarFitness
    score: float
    evaluations: int
    history: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.best.violation == 0


def lex_best(violation: np.ndarray, key: np.ndarray) -> int:
    """Index of the lexicographically smallest (violation, key) pair."""
    return int(np.lexsort((key, violation))[0])


def not_worse(v_a, k_a, v_b, k_b) -> np.ndarray:
    """Elementwise: (v_a, k_a) <= (v_b, k_b) lexicographically."""
    return (v_a < v_b) | ((v_a == v_b) & (k_a <= k_b))


class _Tracker:
    """Best-so-far bookkeeping shared by all single-objective runs."""

    def __init__(self, objective: SingleObjective, budget: int):
        self.objective = objective
        self.budget = budget
        self.evaluations = 0
        self.best_x = None
        self.best_v = math.inf
        self.best_k = math.inf
        self.best_value = math.nan
        self.history: list[tuple[int, float, float]] = []

    @property
    def remaining(self) -> int:
        return self.budget - self.evaluations

    def evaluate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v, value = self.objective(x)
        k = self.objective.key(value)
        self.evaluations += len(x)
        i = lex_best(v, k)
        if (v[i], k[i]) < (self.best_v, self.best_k):
            self.best_x = x[i].copy()
            self.best_v, self.best_k, self.best_value = float(v[i]), float(k[i]), float(value[i])
        return v, k, value

    def log_generation(self):
        score = float(self.objective.model.score(self.best_value))
        self.history.append((self.evaluations, self.best_v, score))

    def record(self, algorithm: str, seed: int) -> RunRecord:
        model = self.objective.model
        return RunRecord(
            algorithm=algorithm,
            instance=self.objective.problem.name,
            outcome=model.id,
            seed=seed,
            best_x=self.best_x,
            best=ScalarFitness(self.best_v, self.best_value),
            score=float(model.score(self.best_value)),
            evaluations=self.evaluations,
            history=self.history,
        )


# --- differential evolution -------------------------------------------------

def de_rand1_mutant(r1, r2, r3, F: float) -> np.ndarray:
    r1, r2, r3 = (np.asarray(a, dtype=float) for a in (r1, r2, r3))
    return r1 + F * (r2 - r3)


def de_current_to_rand1_mutant(x, r1, r2, r3, F: float, K) -> np.ndarray:
    x, r1, r2, r3 = (np.asarray(a, dtype=float) for a in (x, r1, r2, r3))
    K = np.asarray(K, dtype=float)
    if K.ndim == 1 and x.ndim == 2:
        K = K[:, None]
    return x + K * (r1 - x) + F * (r2 - r3)


def binomial_crossover(target, mutant, Cr: float, rng: np.random.Generator) -> np.ndarray:
    """Take each mutant component with probability Cr, plus one forced index.

    Works on a single vector or row-wise on a population.
    """
    target = np.asarray(target, dtype=float)
    mutant = np.asarray(mutant, dtype=float)
    if target.shape != mutant.shape:
        raise ValueError("target and mutant differ in shape")
    t2 = np.atleast_2d(target)
    m2 = np.atleast_2d(mutant)
    n, d = t2.shape
    mask = rng.random((n, d)) < Cr
    mask[np.arange(n), rng.integers(d, size=n)] = True
    return np.where(mask, m2, t2).reshape(target.shape)


def _distinct_donors(n: int, rng: np.random.Generator, count: int = 3) -> np.ndarray:
    """Row i holds ``count`` distinct indices, all different from i."""
    keys = rng.random((n, n))
    np.fill_diagonal(keys, np.inf)
    return np.argsort(keys, axis=1)[:, :count]


def run_de(objective: SingleObjective, budget: int, seed: int,
           cfg: DeConfig = DeConfig()) -> RunRecord:
    rng = np.random.default_rng(seed)
    problem = objective.problem
    n = cfg.population
    if budget < n:
        raise ConfigError(f"budget {budget} is smaller than the population {n}")
    track = _Tracker(objective, budget)
    X = problem.random_population(n, rng)
    fv, fk, _ = track.evaluate(X)
    track.log_generation()
    while track.remaining >= n:
        idx = _distinct_donors(n, rng)
        r1, r2, r3 = X[idx[:, 0]], X[idx[:, 1]], X[idx[:, 2]]
        if cfg.mutation == "rand1":
            V = de_rand1_mutant(r1, r2, r3, cfg.F)
        else:
            K = rng.random(n) if cfg.K is None else np.full(n, cfg.K)
            V = de_current_to_rand1_mutant(X, r1, r2, r3, cfg.F, K)
        U = problem.repair(binomial_crossover(X, V, cfg.Cr, rng))
        uv, uk, _ = track.evaluate(U)
        # ties go to the trial
        take = not_worse(uv, uk, fv, fk)
        X[take], fv[take], fk[take] = U[take], uv[take], uk[take]
        track.log_generation()
    name = "de_rand1" if cfg.mutation == "rand1" else "de_current_to_rand1"
    return track.record(name, seed)


# --- particle swarm ---------------------------------------------------------

def pso_step(x, v, pbest, gbest, cfg: PsoConfig, rng: np.random.Generator | None = None,
             vmax=None, lower=None, upper=None, r1=None, r2=None) -> tuple[np.ndarray, np.ndarray]:
    """One velocity/position update; returns (repaired position, velocity).

    The new position is clamped to ``[lower, upper]`` (when given) before
    closure. ``r1``/``r2`` override the uniform draws.
    """
    x, v, pbest, gbest = (np.asarray(a, dtype=float) for a in (x, v, pbest, gbest))
    if r1 is None:
        r1 = rng.random(x.shape)
    if r2 is None:
        r2 = rng.random(x.shape)
    v_new = cfg.inertia * v + cfg.c1 * r1 * (pbest - x) + cfg.c2 * r2 * (gbest - x)
    if vmax is not None:
        v_new = np.clip(v_new, -vmax, vmax)
    moved = x + v_new
    if lower is not None or upper is not None:
        moved = np.clip(moved, lower, upper)
    return repair(moved), v_new


def run_pso(objective: SingleObjective, budget: int, seed: int,
            cfg: PsoConfig = PsoConfig()) -> RunRecord:
    rng = np.random.default_rng(seed)
    problem = objective.problem
    n = cfg.swarm
    if budget < n:
        raise ConfigError(f"budget {budget} is smaller than the swarm {n}")
    vmax = None
    if cfg.vmax_fraction is not None:
        vmax = cfg.vmax_fraction * (problem.upper - problem.lower)
    track = _Tracker(objective, budget)
    X = problem.random_population(n, rng)
    V = np.zeros_like(X)
    pv, pk, _ = track.evaluate(X)
    P = X.copy()
    track.log_generation()
    while track.remaining >= n:
        g = lex_best(pv, pk)
        X, V = pso_step(X, V, P, P[g], cfg, rng, vmax=vmax,
                        lower=problem.lower, upper=problem.upper)
        xv, xk, _ = track.evaluate(X)
        better = not_worse(xv, xk, pv, pk)
        P[better], pv[better], pk[better] = X[better], xv[better], xk[better]
        track.log_generation()
    return track.record("pso", seed)


# --- CMA-ES -----------------------------------------------------------------

class CMAES:
    """(mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu covariance updates."""

    def __init__(self, mean, sigma: float, lam: int = 10, rng: np.random.Generator | None = None):
        self.rng = rng if rng is not None else np.random.default_rng()
        self.mean = np.array(mean, dtype=float)
        n = self.n = len(self.mean)
        self.sigma = float(sigma)
        self.lam = lam
        self.mu = lam // 2
        w = np.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights ** 2)
        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1,
                       2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chiN = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.invsqrtC = np.eye(n)
        self.generation = 0

    def ask(self) -> np.ndarray:
        z = self.rng.standard_normal((self.lam, self.n))
        return self.mean + self.sigma * (z * self.D) @ self.B.T

    def tell(self, X: np.ndarray, order: np.ndarray):
        """Update from samples ``X`` ranked best-first by ``order``."""
        n = self.n
        self.generation += 1
        old = self.mean
        sel = X[order[: self.mu]]
        self.mean = self.weights @ sel
        step = (self.mean - old) / self.sigma
        self.ps = (1 - self.cs) * self.ps + math.sqrt(
            self.cs * (2 - self.cs) * self.mueff) * (self.invsqrtC @ step)
        ps_norm = np.linalg.norm(self.ps)
        hsig = ps_norm / math.sqrt(1 - (1 - self.cs) ** (2 * self.generation)) / self.chiN \
            < 1.4 + 2 / (n + 1)
        self.pc = (1 - self.cc) * self.pc + hsig * math.sqrt(
            self.cc * (2 - self.cc) * self.mueff) * step
        Y = (sel - old) / self.sigma
        rank_mu = (Y.T * self.weights) @ Y
        self.C = ((1 - self.c1 - self.cmu) * self.C
                  + self.c1 * (np.outer(self.pc, self.pc)
                               + (1 - hsig) * self.cc * (2 - self.cc) * self.C)
                  + self.cmu * rank_mu)
        self.sigma *= math.exp(min(1.0, (self.cs / self.damps) * (ps_norm / self.chiN - 1)))
        self.C = (self.C + self.C.T) / 2
        evals, self.B = np.linalg.eigh(self.C)
        self.D = np.sqrt(np.maximum(evals, 1e-300))
        self.invsqrtC = (self.B / self.D) @ self.B.T

    @property
    def stds(self) -> np.ndarray:
        return self.sigma * np.sqrt(np.diag(self.C))

    def should_stop(self, tolx: float = 1e-12, max_condition: float = 1e14) -> bool:
        if self.stds.max() <= tolx:
            return True
        return (self.D.max() / self.D.min()) ** 2 > max_condition


def cmaes_minimize(func: Callable[[np.ndarray], np.ndarray], mean, sigma: float = 0.3,
                   lam: int = 10, budget: int = 5000, seed: int = 0,
                   tolx: float = 1e-12) -> tuple[np.ndarray, float, CMAES]:
    """Plain CMA-ES on a batch objective returning one float per row."""
    es = CMAES(mean, sigma, lam, np.random.default_rng(seed))
    best_x, best_f, used = None, math.inf, 0
    while used + lam <= budget and not es.should_stop(tolx):
        X = es.ask()
        f = np.asarray(func(X), dtype=float)
        used += lam
        order = np.argsort(f, kind="stable")
        if f[order[0]] < best_f:
            best_f, best_x = float(f[order[0]]), X[order[0]].copy()
        es.tell(X, order)
    return best_x, best_f, es


def run_cmaes(objective: SingleObjective, budget: int, seed: int,
              cfg: CmaesConfig = CmaesConfig()) -> RunRecord:
    """CMA-ES on the unit cube of normalised minutes.

    The search starts from the centre of the cube. Samples are clipped to
    [0, 1] only for decoding; the distribution update uses the unclipped
    samples.
    """
    if budget < cfg.lam:
        raise ConfigError(f"budget {budget} is smaller than lambda {cfg.lam}")
    rng = np.random.default_rng(seed)
    problem = objective.problem
    span = problem.upper - problem.lower
    es = CMAES(np.full(problem.dim, 0.5), cfg.sigma, cfg.lam, rng)
    track = _Tracker(objective, budget)
    while track.remaining >= cfg.lam and not es.should_stop(cfg.tolx):
        C = es.ask()
        X = problem.repair(problem.lower + np.clip(C, 0.0, 1.0) * span)
        v, k, _ = track.evaluate(X)
        es.tell(C, np.lexsort((k, v)))
        track.log_generation()
    return track.record("cmaes", seed)


_RUNNERS = {
    "de_rand1": (run_de, lambda: DeConfig(mutation="rand1")),
    "de_current_to_rand1": (run_de, lambda: DeConfig(mutation="current_to_rand1")),
    "pso": (run_pso, PsoConfig),
    "cmaes": (run_cmaes, CmaesConfig),
}


def default_budget(problem: Problem) -> int:
    return DAY_BUDGET if problem.n_days == 1 else WEEK_BUDGET


def run_single(algorithm: str, instance, model: OutcomeModel | str, budget: int | None = None,
               seed: int = 0, config=None,
               bmi_rule: WeekBmiRule | str = DEFAULT_WEEK_BMI_RULE) -> RunRecord:
    """Run one single-objective optimiser on a day structure or week mixture."""
    name = algorithm_name(algorithm)
    problem = make_problem(instance)
    objective = SingleObjective(problem, outcome(model), WeekBmiRule(bmi_rule))
    budget = default_budget(problem) if budget is None else int(budget)
    if budget <= 0:
        raise ConfigError("budget must be positive")
    runner, default_cfg = _RUNNERS[name]
    return runner(objective, budget, seed, config if config is not None else default_cfg())
