"""Multi-objective engines: MOEA/D, NSGA-II and SPEA2.

Objectives follow the minimisation convention of
:func:`timeuse.objectives.objective_matrix`. Constraints are handled by
feasibility-first domination: a smaller bound violation always wins, and
objectives only decide between equally violating solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .composition import repair
from .objectives import (
    MultiObjective,
    ObjectiveVector,
    OutcomeModel,
    make_problem,
    outcome_subset,
    raw_from_minimized,
)
from .opt_single import ConfigError

ENGINES = ("moead", "nsga2", "spea2")
_ENGINE_ALIASES = {"moea/d": "moead", "moea_d": "moead", "nsga-ii": "nsga2",
                   "nsgaii": "nsga2", "nsga_ii": "nsga2", "spea": "spea2"}

POPULATION = 100
MULTI_BUDGET = 25_000


def engine_name(name: str) -> str:
    key = name.strip().lower()
    key = _ENGINE_ALIASES.get(key, key)
    if key not in ENGINES:
        raise KeyError(f"unknown engine {name!r}; expected one of {', '.join(ENGINES)}")
    return key


# --- domination and sorting -------------------------------------------------

def _as_pair(a):
    violation, f = a
    if isinstance(f, ObjectiveVector):
        return float(violation), f.ids, f.as_array()
    return float(violation), None, np.asarray(f, dtype=float)


def dominates(a, b) -> bool:
    """Feasibility-first Pareto domination of ``(violation, objectives)`` pairs."""
    va, ids_a, fa = _as_pair(a)
    vb, ids_b, fb = _as_pair(b)
    if ids_a is not None and ids_b is not None and ids_a != ids_b:
        raise ConfigError(f"objective subsets differ: {ids_a} vs {ids_b}")
    if fa.shape != fb.shape:
        raise ConfigError("objective vectors differ in length")
    if va != vb:
        return va < vb
    return bool(np.all(fa <= fb) and np.any(fa < fb))


def domination_matrix(F: np.ndarray, violation: np.ndarray | None = None) -> np.ndarray:
    """``D[i, j]`` is True when member i dominates member j."""
    F = np.asarray(F, dtype=float)
    col = F[:, 0]
    le = col[:, None] <= col[None, :]
    lt = col[:, None] < col[None, :]
    for m in range(1, F.shape[1]):
        col = F[:, m]
        le &= col[:, None] <= col[None, :]
        lt |= col[:, None] < col[None, :]
    pareto = le & lt
    if violation is None:
        return pareto
    v = np.asarray(violation, dtype=float)
    return (v[:, None] < v[None, :]) | ((v[:, None] == v[None, :]) & pareto)


def fast_non_dominated_sort(F, violation=None) -> list[np.ndarray]:
    """Partition member indices into fronts F1, F2, ... (best first)."""
    F = np.asarray(F, dtype=float)
    n = len(F)
    if n == 0:
        return []
    D = domination_matrix(F, violation)
    count = D.sum(axis=0)
    remaining = np.ones(n, dtype=bool)
    fronts = []
    while remaining.any():
        front = np.flatnonzero(remaining & (count == 0))
        fronts.append(front)
        remaining[front] = False
        count = count - D[front].sum(axis=0)
    return fronts


def crowding_distance(F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    n, k = F.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for m in range(k):
        order = np.argsort(F[:, m], kind="stable")
        fm = F[order, m]
        span = fm[-1] - fm[0]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (fm[2:] - fm[:-2]) / span
    return dist


# --- variation ----------------------------------------------------------------

def _clip_close(x, lower, upper):
    if lower is not None or upper is not None:
        x = np.clip(x, lower, upper)
    return repair(x)


def sbx_crossover(p1, p2, eta_c: float, rng: np.random.Generator, lower=None, upper=None,
                  prob: float = 0.9, var_prob: float = 0.5, u=None,
                  close: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Simulated binary crossover, row-wise for batches of parent pairs.

    Children are clipped to ``[lower, upper]`` and closed per day unless
    ``close`` is False. ``u`` overrides the spread draws.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    a, b = np.atleast_2d(p1), np.atleast_2d(p2)
    n, d = a.shape
    if u is None:
        u = rng.random((n, d))
    u = np.broadcast_to(np.asarray(u, dtype=float), (n, d))
    beta = np.where(u <= 0.5, (2 * u) ** (1 / (eta_c + 1)),
                    (1 / (2 * (1 - u))) ** (1 / (eta_c + 1)))
    active = np.ones((n, d), dtype=bool)
    if prob < 1 or var_prob < 1:
        active = (rng.random((n, 1)) < prob) & (rng.random((n, d)) < var_prob)
    beta = np.where(active, beta, 1.0)
    c1 = 0.5 * ((1 + beta) * a + (1 - beta) * b)
    c2 = 0.5 * ((1 - beta) * a + (1 + beta) * b)
    if close:
        c1, c2 = _clip_close(c1, lower, upper), _clip_close(c2, lower, upper)
    return c1.reshape(p1.shape), c2.reshape(p2.shape)


def polynomial_mutation(x, eta_m: float, p_m: float, rng: np.random.Generator,
                        lower, upper, close: bool = True) -> np.ndarray:
    """Perturb each variable with probability ``p_m``; clip to bounds and close."""
    x = np.asarray(x, dtype=float)
    x2 = np.atleast_2d(x)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    mask = rng.random(x2.shape) < p_m
    u = rng.random(x2.shape)
    delta = np.where(u < 0.5, (2 * u) ** (1 / (eta_m + 1)) - 1,
                     1 - (2 * (1 - u)) ** (1 / (eta_m + 1)))
    y = np.where(mask, x2 + delta * (upper - lower), x2)
    y = np.clip(y, lower, upper)
    if close:
        y = repair(y)
    return y.reshape(x.shape)


# --- decomposition ------------------------------------------------------------

def tchebycheff(f, w, z) -> float | np.ndarray:
    f, w, z = (np.asarray(a, dtype=float) for a in (f, w, z))
    g = np.max(w * np.abs(f - z), axis=-1)
    return float(g) if np.ndim(g) == 0 else g


def simplex_lattice(k: int, H: int) -> np.ndarray:
    """All weight vectors with entries i/H summing to 1."""
    points = []
    for bars in combinations(range(H + k - 1), k - 1):
        prev, parts = -1, []
        for bar in bars:
            parts.append(bar - prev - 1)
            prev = bar
        parts.append(H + k - 1 - prev - 1)
        points.append(parts)
    return np.asarray(points, dtype=float) / H


@dataclass
class WeightVectorSet:
    weights: np.ndarray
    neighbors: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weights)


def weight_vectors(k: int, population: int = POPULATION, T: int = 20,
                   seed: int = 0) -> WeightVectorSet:
    """Simplex-lattice weights with the lattice size closest to ``population``.

    If the lattice has fewer points than ``population`` it is padded with
    uniformly random simplex points (fixed ``seed``).
    """
    if k < 2:
        raise ConfigError("need at least two objectives")
    best_H = min(range(1, population + 1),
                 key=lambda h: (abs(math.comb(h + k - 1, k - 1) - population), h))
    W = simplex_lattice(k, best_H)
    if len(W) < population:
        extra = np.random.default_rng(seed).dirichlet(np.ones(k), population - len(W))
        W = np.vstack([W, extra])
    T = min(T, len(W))
    dist = np.linalg.norm(W[:, None, :] - W[None, :, :], axis=2)
    neighbors = np.argsort(dist, axis=1, kind="stable")[:, :T]
    return WeightVectorSet(W, neighbors)


# --- SPEA2 ------------------------------------------------------------------

@dataclass
class Spea2Fitness:
    strength: np.ndarray
    raw: np.ndarray
    density: np.ndarray

    @property
    def fitness(self) -> np.ndarray:
        return self.raw + self.density


def _scaled(F: np.ndarray) -> np.ndarray:
    lo, hi = F.min(axis=0), F.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (F - lo) / span


def _distances(F: np.ndarray) -> np.ndarray:
    sq = np.zeros((len(F), len(F)))
    for m in range(F.shape[1]):
        sq += (F[:, m, None] - F[None, :, m]) ** 2
    return np.sqrt(sq)


def spea2_fitness(F, violation=None, normalize: bool = True) -> Spea2Fitness:
    """Strength, raw fitness and k-th nearest neighbour density.

    Distances are taken in objective space, rescaled per objective to the
    population's range when ``normalize`` is set.
    """
    F = np.asarray(F, dtype=float)
    n = len(F)
    D = domination_matrix(F, violation)
    strength = D.sum(axis=1).astype(float)
    raw = (D * strength[:, None]).sum(axis=0)
    if n == 1:
        return Spea2Fitness(strength, raw, np.array([0.5]))
    k = int(math.sqrt(n))
    dist = _distances(_scaled(F) if normalize else F)
    np.fill_diagonal(dist, np.inf)
    sigma_k = np.sort(dist, axis=1)[:, min(k, n - 1) - 1]
    density = 1.0 / (sigma_k + 2.0)
    return Spea2Fitness(strength, raw, density)


def spea2_truncate(F, size: int, normalize: bool = True) -> np.ndarray:
    """Indices kept after iteratively removing the most crowded member.

    The member removed each round has the lexicographically smallest vector
    of sorted distances to the other remaining members.
    """
    F = np.asarray(F, dtype=float)
    n = len(F)
    if n <= size:
        return np.arange(n)
    dist = _distances(_scaled(F) if normalize else F)
    np.fill_diagonal(dist, np.inf)
    alive = np.ones(n, dtype=bool)
    nearest = dist.min(axis=1)
    for _ in range(n - size):
        cand = np.flatnonzero(alive)
        d1 = nearest[cand]
        tied = cand[d1 <= d1.min()]
        if len(tied) > 1:
            rows = np.sort(dist[np.ix_(tied, cand)], axis=1)
            victim = tied[np.lexsort(rows.T[::-1])[0]]
        else:
            victim = tied[0]
        alive[victim] = False
        dist[:, victim] = np.inf
        stale = alive & (nearest <= dist[victim] * (1 + 1e-12))
        stale_idx = np.flatnonzero(stale)
        if len(stale_idx):
            nearest[stale_idx] = dist[stale_idx].min(axis=1)
        dist[victim, :] = np.inf
    return np.flatnonzero(alive)


def spea2_environmental_selection(F, violation, size: int) -> np.ndarray:
    fit = spea2_fitness(F, violation).fitness
    nd = np.flatnonzero(fit < 1.0)
    if len(nd) == size:
        return nd
    if len(nd) < size:
        return np.argsort(fit, kind="stable")[:size]
    keep = spea2_truncate(np.asarray(F)[nd], size)
    return nd[keep]


# --- engines ------------------------------------------------------------------

@dataclass
class ParetoFront:
    engine: str
    instance: str
    outcomes: tuple[str, ...]
    seed: int
    X: np.ndarray
    F: np.ndarray  # minimisation convention
    evaluations: int
    models: tuple[OutcomeModel, ...] = field(repr=False, default=())

    def __len__(self) -> int:
        return len(self.F)

    def raw(self) -> np.ndarray:
        """Outcome values as reported: |f1| for BMI, f otherwise."""
        return raw_from_minimized(self.models, self.F)


@dataclass(frozen=True)
class MoConfig:
    population: int = POPULATION
    eta_c: float = 20.0
    eta_m: float = 20.0
    p_c: float = 0.9
    p_m: float | None = None  # default 1 / n_variables
    T: int = 20
    max_replace: int = 2


class _Evaluator:
    def __init__(self, objective: MultiObjective, budget: int):
        self.objective = objective
        self.budget = budget
        self.evaluations = 0

    def __call__(self, X):
        self.evaluations += len(X)
        return self.objective(X)

    @property
    def remaining(self) -> int:
        return self.budget - self.evaluations


def _binary_tournament(better: np.ndarray, n_pick: int, rng) -> np.ndarray:
    """``better[i, j]`` says whether i wins over j; ties are broken at random."""
    n = len(better)
    a = rng.integers(n, size=n_pick)
    b = rng.integers(n, size=n_pick)
    coin = rng.random(n_pick) < 0.5
    a_wins = better[a, b] | (~better[b, a] & coin)
    return np.where(a_wins, a, b)


def _variation(X, parents, problem, cfg: MoConfig, rng):
    P = X[parents].reshape(-1, 2, X.shape[1])
    c1, c2 = sbx_crossover(P[:, 0], P[:, 1], cfg.eta_c, rng, problem.lower, problem.upper,
                           prob=cfg.p_c, close=False)
    children = np.empty((2 * len(P), X.shape[1]))
    children[0::2], children[1::2] = c1, c2
    p_m = cfg.p_m if cfg.p_m is not None else 1.0 / X.shape[1]
    return polynomial_mutation(children, cfg.eta_m, p_m, rng, problem.lower, problem.upper)


def run_nsga2(objective: MultiObjective, budget: int, seed: int, cfg: MoConfig) -> tuple:
    rng = np.random.default_rng(seed)
    problem = objective.problem
    n = cfg.population
    ev = _Evaluator(objective, budget)
    X = problem.random_population(n, rng)
    V, F = ev(X)
    _, rank, crowd = nsga2_survivors(F, V, n, with_ranks=True)
    while ev.remaining >= n:
        better = (rank[:, None] < rank[None, :]) | (
            (rank[:, None] == rank[None, :]) & (crowd[:, None] > crowd[None, :]))
        parents = _binary_tournament(better, n + n % 2, rng)
        Q = _variation(X, parents, problem, cfg, rng)[:n]
        QV, QF = ev(Q)
        X, V, F = np.vstack([X, Q]), np.concatenate([V, QV]), np.vstack([F, QF])
        keep, rank, crowd = nsga2_survivors(F, V, n, with_ranks=True)
        X, V, F = X[keep], V[keep], F[keep]
    return X, V, F, ev.evaluations


def nsga2_survivors(F, V, size: int, with_ranks: bool = False):
    """Whole fronts while they fit, then the most spread members of the next.

    With ``with_ranks`` also returns the survivors' front ranks and crowding
    distances (computed within each full front).
    """
    keep, ranks, crowd = [], [], []
    for r, front in enumerate(fast_non_dominated_sort(F, V)):
        cd = crowding_distance(F[front])
        room = size - sum(len(k) for k in keep)
        if len(front) > room:
            order = np.argsort(-cd, kind="stable")[:room]
            front, cd = front[order], cd[order]
        keep.append(front)
        ranks.append(np.full(len(front), r))
        crowd.append(cd)
        if sum(len(k) for k in keep) == size:
            break
    keep = np.concatenate(keep)
    if with_ranks:
        return keep, np.concatenate(ranks), np.concatenate(crowd)
    return keep


def run_spea2(objective: MultiObjective, budget: int, seed: int, cfg: MoConfig) -> tuple:
    rng = np.random.default_rng(seed)
    problem = objective.problem
    n = cfg.population
    ev = _Evaluator(objective, budget)
    X = problem.random_population(n, rng)
    V, F = ev(X)
    AX, AV, AF = X[:0], V[:0], F[:0]
    while True:
        UX, UV, UF = np.vstack([X, AX]), np.concatenate([V, AV]), np.vstack([F, AF])
        keep = spea2_environmental_selection(UF, UV, n)
        AX, AV, AF = UX[keep], UV[keep], UF[keep]
        if ev.remaining < n:
            break
        fit = spea2_fitness(AF, AV).fitness
        better = fit[:, None] < fit[None, :]
        parents = _binary_tournament(better, n + n % 2, rng)
        X = _variation(AX, parents, problem, cfg, rng)[:n]
        V, F = ev(X)
    return AX, AV, AF, ev.evaluations


def run_moead(objective: MultiObjective, budget: int, seed: int, cfg: MoConfig) -> tuple:
    rng = np.random.default_rng(seed)
    problem = objective.problem
    wv = weight_vectors(objective.n_obj, cfg.population, cfg.T)
    W, B = wv.weights, wv.neighbors
    n = wv.size
    ev = _Evaluator(objective, budget)
    X = problem.random_population(n, rng)
    V, F = ev(X)
    feasible = V == 0
    z = (F[feasible] if feasible.any() else F).min(axis=0)
    G = tchebycheff(F, W, z)
    p_m = cfg.p_m if cfg.p_m is not None else 1.0 / X.shape[1]
    T = B.shape[1]
    while ev.remaining >= n:
        order = rng.permutation(n)
        picks = np.argsort(rng.random((n, T)), axis=1)[:, :2]
        mates = B[order[:, None], picks]
        c1, _ = sbx_crossover(X[mates[:, 0]], X[mates[:, 1]], cfg.eta_c, rng,
                              problem.lower, problem.upper, prob=cfg.p_c, close=False)
        C = polynomial_mutation(c1, cfg.eta_m, p_m, rng, problem.lower, problem.upper)
        CV, CF = ev(C)
        scan = np.argsort(rng.random((n, T)), axis=1)
        for c, i in enumerate(order):
            cv, cf = CV[c], CF[c]
            if cv == 0 or not feasible.any():
                if np.any(cf < z):
                    z = np.minimum(z, cf)
                    G = tchebycheff(F, W, z)
            hood = B[i][scan[c]]
            gc = np.max(W[hood] * np.abs(cf - z), axis=1)
            wins = (cv < V[hood]) | ((cv == V[hood]) & (gc <= G[hood]))
            for j in hood[wins][: cfg.max_replace]:
                X[j], V[j], F[j] = C[c], cv, cf
            G[hood[wins][: cfg.max_replace]] = gc[wins][: cfg.max_replace]
            feasible = V == 0
    return X, V, F, ev.evaluations


_ENGINES = {"moead": run_moead, "nsga2": run_nsga2, "spea2": run_spea2}


def final_front(X, V, F) -> tuple[np.ndarray, np.ndarray]:
    """Feasible, mutually non-dominated members with duplicates removed."""
    ok = V == 0
    X, F = X[ok], F[ok]
    if len(F) == 0:
        return X, F
    _, first = np.unique(F, axis=0, return_index=True)
    first = np.sort(first)
    X, F = X[first], F[first]
    front = fast_non_dominated_sort(F)[0]
    front = front[np.lexsort(F[front].T[::-1])]
    return X[front], F[front]


def run_multi(engine: str, instance, outcomes: Sequence[str | OutcomeModel],
              population: int = POPULATION, budget: int = MULTI_BUDGET, seed: int = 0,
              config: MoConfig | None = None) -> ParetoFront:
    """Run one engine on a day structure and return its final feasible front."""
    name = engine_name(engine)
    try:
        models = outcome_subset(outcomes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    problem = make_problem(instance)
    objective = MultiObjective(problem, models)
    cfg = config if config is not None else MoConfig(population=population)
    if budget < cfg.population:
        raise ConfigError(f"budget {budget} is smaller than the population {cfg.population}")
    X, V, F, used = _ENGINES[name](objective, int(budget), seed, cfg)
    X, F = final_front(X, V, F)
    return ParetoFront(name, problem.name, tuple(m.id for m in models), seed, X, F, used, models)
