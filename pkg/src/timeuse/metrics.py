"""Front quality, run statistics and the exhaustive grid oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .composition import MINUTES_PER_DAY, DayStructure, day_structure
from .objectives import OutcomeModel, ilr_terms, ilr, outcome

ALPHA = 0.05
HV_REF = 1.1


# --- hypervolume ------------------------------------------------------------

def nondominated(points: np.ndarray) -> np.ndarray:
    """Rows of ``points`` not weakly dominated by another row (duplicates kept once)."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 1:
        return pts
    le = np.all(pts[:, None, :] <= pts[None, :, :], axis=2)
    lt = np.any(pts[:, None, :] < pts[None, :, :], axis=2)
    dominated = np.any(le & lt, axis=0)
    return pts[~dominated]


def _hv2d(pts: np.ndarray, ref: np.ndarray) -> float:
    pts = pts[np.argsort(pts[:, 0], kind="stable")]
    volume, best_y = 0.0, ref[1]
    for x, y in pts:
        if y < best_y:
            volume += (ref[0] - x) * (best_y - y)
            best_y = y
    return volume


def _wfg(pts: np.ndarray, ref: np.ndarray) -> float:
    if len(pts) == 0:
        return 0.0
    if pts.shape[1] == 2:
        return _hv2d(pts, ref)
    if len(pts) == 1:
        return float(np.prod(ref - pts[0]))
    # descending in the last objective keeps limit sets small
    pts = pts[np.argsort(-pts[:, -1], kind="stable")]
    total = 0.0
    for k in range(len(pts)):
        inclusive = float(np.prod(ref - pts[k]))
        rest = pts[k + 1:]
        if len(rest):
            limited = nondominated(np.maximum(rest, pts[k]))
            inclusive -= _wfg(limited, ref)
        total += inclusive
    return total


def hypervolume(front, ref) -> float:
    """Exact hypervolume of a minimisation front with respect to ``ref``.

    Points that do not strictly dominate ``ref`` contribute nothing and are
    dropped. Empty fronts have volume 0.
    """
    ref = np.asarray(ref, dtype=float)
    pts = np.asarray(front, dtype=float).reshape(-1, len(ref))
    if not 2 <= len(ref) <= 4:
        raise ValueError("hypervolume supports 2 to 4 objectives")
    pts = pts[np.all(pts < ref, axis=1)]
    if len(pts) == 0:
        return 0.0
    return _wfg(nondominated(pts), ref)


@dataclass(frozen=True)
class HvResult:
    value: float
    ref: tuple[float, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]


def normalization_box(fronts: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    nonempty = [np.asarray(f, dtype=float) for f in fronts if len(f)]
    if not nonempty:
        raise ValueError("need at least one non-empty front")
    union = np.vstack(nonempty)
    return union.min(axis=0), union.max(axis=0)


def normalize(front, lower, upper) -> np.ndarray:
    front = np.asarray(front, dtype=float)
    span = np.asarray(upper, dtype=float) - np.asarray(lower, dtype=float)
    safe = np.where(span > 0, span, 1.0)
    scaled = (front - lower) / safe
    return np.where(span > 0, scaled, 0.0)


def normalize_fronts(fronts: Sequence[np.ndarray]):
    """Map every front into the [0, 1] box spanned by their union.

    Returns ``(normalised fronts, lower, upper)``. A dimension with no spread
    maps to 0.
    """
    lower, upper = normalization_box(fronts)
    return [normalize(f, lower, upper) if len(f) else np.asarray(f, dtype=float)
            for f in fronts], lower, upper


def normalized_hypervolume(front, lower, upper, ref: float = HV_REF) -> HvResult:
    k = len(lower)
    refv = np.full(k, ref)
    value = hypervolume(normalize(front, lower, upper), refv) if len(front) else 0.0
    return HvResult(value, tuple(refv), tuple(map(float, lower)), tuple(map(float, upper)))


# --- statistics -------------------------------------------------------------

@dataclass(frozen=True)
class MeanStd:
    mean: float
    std: float
    std_defined: bool


def mean_std(values) -> MeanStd:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("mean_std of an empty sample")
    if x.size == 1:
        return MeanStd(float(x[0]), 0.0, False)
    return MeanStd(float(x.mean()), float(x.std(ddof=1)), True)


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> tuple[float, float]:
    """H statistic (tie corrected) and chi-square p-value."""
    if len(groups) < 2:
        raise ValueError("Kruskal-Wallis needs at least two groups")
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if any(a.size == 0 for a in arrays):
        raise ValueError("Kruskal-Wallis groups must be non-empty")
    pooled = np.concatenate(arrays)
    n = pooled.size
    if n < 3:
        raise ValueError("Kruskal-Wallis needs at least 3 observations")
    ranks = stats.rankdata(pooled)
    _, tie_counts = np.unique(pooled, return_counts=True)
    correction = 1.0 - np.sum(tie_counts ** 3 - tie_counts) / (n ** 3 - n)
    if correction <= 0:
        return 0.0, 1.0
    h, start = 0.0, 0
    for a in arrays:
        r = ranks[start:start + a.size]
        h += r.sum() ** 2 / a.size
        start += a.size
    h = (12.0 / (n * (n + 1)) * h - 3 * (n + 1)) / correction
    h = max(h, 0.0)
    return float(h), float(stats.chi2.sf(h, len(arrays) - 1))


def bonferroni(pvalues, m: int, alpha: float = ALPHA) -> list[bool]:
    if m < 1:
        raise ValueError("number of comparisons must be at least 1")
    threshold = alpha / m
    return [bool(p < threshold) for p in np.atleast_1d(pvalues)]


def significance_flags(groups: Mapping[str, Sequence[float]], maximize: bool,
                       alpha: float = ALPHA) -> dict[str, list[int]]:
    """For each group, the 1-based indices of groups it significantly beats.

    Pairwise two-group Kruskal-Wallis tests with Bonferroni correction over
    all pairs; the winner of a significant pair is the one with the better
    median (mean on a median tie).
    """
    names = list(groups)
    pairs = list(combinations(range(len(names)), 2))
    beats: dict[str, list[int]] = {name: [] for name in names}
    if not pairs:
        return beats
    sign = 1.0 if maximize else -1.0
    pvalues = []
    for i, j in pairs:
        a, b = groups[names[i]], groups[names[j]]
        pvalues.append(kruskal_wallis([a, b])[1] if len(a) + len(b) >= 3 else 1.0)
    for (i, j), significant in zip(pairs, bonferroni(pvalues, len(pairs), alpha)):
        if not significant:
            continue
        a = np.asarray(groups[names[i]], dtype=float)
        b = np.asarray(groups[names[j]], dtype=float)
        ka = (sign * np.median(a), sign * a.mean())
        kb = (sign * np.median(b), sign * b.mean())
        if ka > kb:
            beats[names[i]].append(j + 1)
        elif kb > ka:
            beats[names[j]].append(i + 1)
    return {name: sorted(v) for name, v in beats.items()}


@dataclass(frozen=True)
class StatRow:
    mean: float
    std: float
    best: float
    worst: float
    median: float
    n: int


def summarize(values, maximize: bool) -> StatRow:
    x = np.asarray(values, dtype=float)
    ms = mean_std(x)
    best, worst = (x.max(), x.min()) if maximize else (x.min(), x.max())
    return StatRow(ms.mean, ms.std, float(best), float(worst), float(np.median(x)), int(x.size))


# --- grid oracle ------------------------------------------------------------

@dataclass(frozen=True)
class GridResult:
    value: float
    composition: tuple[float, float, float, float]
    points: int


def grid_oracle(model: OutcomeModel | str, day: DayStructure | str,
                step: float = 1.0) -> GridResult | None:
    """Exhaustive search on the lattice ``lower + k * step`` of the first three parts.

    MVPA takes the remainder of 1440 minutes and must itself lie within its
    bounds. Returns None when no lattice point is feasible.
    """
    if step < 1:
        raise ValueError("grid step must be at least 1 minute")
    model = outcome(model)
    day = day_structure(day) if isinstance(day, str) else day
    lo, hi = day.lower_array, day.upper_array
    axes = [np.arange(lo[i], hi[i] + 1e-9, step) for i in range(3)]
    x2, x3 = np.meshgrid(axes[1], axes[2], indexing="ij")
    x2, x3 = x2.ravel(), x3.ravel()
    best_key, best_x, count = math.inf, None, 0
    for x1 in axes[0]:
        x4 = MINUTES_PER_DAY - x1 - x2 - x3
        ok = (x4 >= lo[3]) & (x4 <= hi[3])
        if not ok.any():
            continue
        pts = np.column_stack([np.full(ok.sum(), x1), x2[ok], x3[ok], x4[ok]])
        count += len(pts)
        keys = model.key(ilr_terms(ilr(pts)) @ model.beta)
        i = int(np.argmin(keys))
        if keys[i] < best_key:
            best_key, best_x = float(keys[i]), pts[i]
    if best_x is None:
        return None
    value = float(ilr_terms(ilr(best_x)) @ model.beta)
    return GridResult(value, tuple(map(float, best_x)), count)
