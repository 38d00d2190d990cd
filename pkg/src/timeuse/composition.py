"""Four-part daily activity compositions.

A composition is the minutes spent in sleep, sedentary behaviour, light
physical activity (LPA) and moderate-to-vigorous physical activity (MVPA)
over one day. Everything here works on plain numpy arrays whose last axis
has length 4 (or ``7 * 4`` for week vectors), so whole populations can be
processed at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

MINUTES_PER_DAY = 1440.0
N_PARTS = 4
PARTS = ("sleep", "sedentary", "lpa", "mvpa")

# Candidates with non-positive parts are lifted to this floor before closure.
POSITIVE_FLOOR = 1e-6
SUM_TOL = 1e-9

_SQRT_3_4 = np.sqrt(3.0 / 4.0)
_SQRT_2_3 = np.sqrt(2.0 / 3.0)
_SQRT_1_2 = np.sqrt(1.0 / 2.0)


class CompositionError(ValueError):
    """A composition has a non-positive part."""


@dataclass(frozen=True)
class ActivityComposition:
    sleep: float
    sedentary: float
    lpa: float
    mvpa: float

    def __post_init__(self):
        if min(self.as_array()) <= 0:
            raise CompositionError(f"composition parts must be positive: {self}")

    @classmethod
    def from_array(cls, x) -> "ActivityComposition":
        x = np.asarray(x, dtype=float)
        if x.shape != (N_PARTS,):
            raise ValueError(f"expected 4 parts, got shape {x.shape}")
        return cls(*map(float, x))

    def as_array(self) -> np.ndarray:
        return np.array([self.sleep, self.sedentary, self.lpa, self.mvpa])

    def total(self) -> float:
        return float(self.as_array().sum())

    def rounded(self) -> tuple[int, int, int, int]:
        """Whole minutes, for display only."""
        return tuple(int(v) for v in np.rint(self.as_array()))


@dataclass(frozen=True)
class DayStructure:
    name: str
    lower: tuple[float, float, float, float]
    upper: tuple[float, float, float, float]
    label: str = ""

    def __post_init__(self):
        lo = np.asarray(self.lower, float)
        hi = np.asarray(self.upper, float)
        if lo.shape != (N_PARTS,) or hi.shape != (N_PARTS,):
            raise ValueError(f"{self.name}: bounds must have 4 entries")
        if not (np.all(lo > 0) and np.all(lo <= hi) and np.all(hi <= MINUTES_PER_DAY)):
            raise ValueError(f"{self.name}: need 0 < lower <= upper <= 1440")
        if not lo.sum() <= MINUTES_PER_DAY <= hi.sum():
            raise ValueError(f"{self.name}: bounds cannot sum to 1440 minutes")

    @property
    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)


DAY_ORDER = ("STD", "SPD", "ASJD", "SPWD", "STWD", "WWD")

_UPPER = (720.0, 900.0, 480.0, 210.0)
DAY_STRUCTURES: Mapping[str, DayStructure] = MappingProxyType({
    "STD": DayStructure("STD", (360.0, 690.0, 150.0, 1.0), _UPPER, "Studious day"),
    "SPD": DayStructure("SPD", (360.0, 480.0, 210.0, 61.0), _UPPER, "Sporty day"),
    "ASJD": DayStructure("ASJD", (360.0, 480.0, 220.0, 1.0), _UPPER, "After-school job day"),
    "SPWD": DayStructure("SPWD", (420.0, 210.0, 210.0, 61.0), _UPPER, "Sporty weekend day"),
    "STWD": DayStructure("STWD", (420.0, 270.0, 150.0, 1.0), _UPPER,
                         "Studious/screen weekend day"),
    "WWD": DayStructure("WWD", (360.0, 210.0, 390.0, 1.0), _UPPER, "Working weekend day"),
})


@dataclass(frozen=True)
class WeekMixture:
    index: int
    counts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if sum(self.counts.values()) != 7:
            raise ValueError(f"mixture {self.index}: day counts must sum to 7")
        unknown = set(self.counts) - set(DAY_ORDER)
        if unknown:
            raise KeyError(f"mixture {self.index}: unknown day structures {sorted(unknown)}")

    def days(self) -> list[DayStructure]:
        """The seven day structures in canonical order, expanded by count."""
        return [DAY_STRUCTURES[name] for name in DAY_ORDER
                for _ in range(self.counts.get(name, 0))]


def _mixture(index, *counts):
    return WeekMixture(index, MappingProxyType(dict(zip(DAY_ORDER, counts))))


WEEK_MIXTURES: Mapping[int, WeekMixture] = MappingProxyType({
    1: _mixture(1, 3, 1, 0, 1, 1, 1),
    2: _mixture(2, 3, 0, 2, 0, 1, 1),
    3: _mixture(3, 3, 2, 0, 0, 1, 1),
    4: _mixture(4, 2, 2, 1, 0, 2, 0),
    5: _mixture(5, 2, 2, 0, 1, 0, 2),
    6: _mixture(6, 2, 2, 1, 1, 1, 0),
})


def day_structure(name: str) -> DayStructure:
    try:
        return DAY_STRUCTURES[name.upper()]
    except KeyError:
        raise KeyError(f"unknown day structure {name!r}; "
                       f"expected one of {', '.join(DAY_ORDER)}") from None


def week_mixture(index: int) -> WeekMixture:
    try:
        return WEEK_MIXTURES[int(index)]
    except KeyError:
        raise KeyError(f"unknown week mixture {index!r}; expected 1..6") from None


@dataclass(frozen=True)
class WeekPlan:
    days: tuple[tuple[DayStructure, ActivityComposition], ...]

    def __post_init__(self):
        if len(self.days) != 7:
            raise ValueError(f"a week plan has 7 days, got {len(self.days)}")

    @classmethod
    def from_vector(cls, mixture: WeekMixture, x) -> "WeekPlan":
        x = np.asarray(x, dtype=float).reshape(7, N_PARTS)
        return cls(tuple((d, ActivityComposition.from_array(row))
                         for d, row in zip(mixture.days(), x)))

    def structures(self) -> list[DayStructure]:
        return [d for d, _ in self.days]

    def as_array(self) -> np.ndarray:
        return np.stack([c.as_array() for _, c in self.days])


def floor_positive(x, floor: float = POSITIVE_FLOOR) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=float), floor)


def closure(x, total: float = MINUTES_PER_DAY) -> np.ndarray:
    """Rescale each 4-part row so that it sums to ``total``.

    Accepts any array whose trailing axis has length 4. Raises
    CompositionError if a part is non-positive; use ``floor_positive`` first
    for raw search candidates.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != N_PARTS:
        raise ValueError(f"trailing axis must have 4 parts, got {x.shape}")
    if not np.all(x > 0):
        raise CompositionError("closure requires strictly positive parts")
    return x * (total / x.sum(axis=-1, keepdims=True))


def repair(x) -> np.ndarray:
    """Floor then close a batch of day or week vectors (per day)."""
    x = np.asarray(x, dtype=float)
    shape = x.shape
    days = floor_positive(x.reshape(*shape[:-1], -1, N_PARTS))
    return closure(days).reshape(shape)


def ilr(x) -> np.ndarray:
    """Isometric log-ratio coordinates (z1, z2, z3) of 4-part rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != N_PARTS:
        raise ValueError(f"trailing axis must have 4 parts, got {x.shape}")
    if not np.all(x > 0):
        raise CompositionError("ilr requires strictly positive parts")
    lx = np.log(x)
    l1, l2, l3, l4 = lx[..., 0], lx[..., 1], lx[..., 2], lx[..., 3]
    z1 = _SQRT_3_4 * (l1 - (l2 + l3 + l4) / 3.0)
    z2 = _SQRT_2_3 * (l2 - (l3 + l4) / 2.0)
    z3 = _SQRT_1_2 * (l3 - l4)
    return np.stack([z1, z2, z3], axis=-1)


def bound_violation(x, day: DayStructure) -> np.ndarray | float:
    """Sum over parts of the distance outside [lower, upper]."""
    x = np.asarray(x, dtype=float)
    excess = np.maximum(0.0, np.maximum(x - day.upper_array, day.lower_array - x))
    u = excess.sum(axis=-1)
    return float(u) if np.ndim(u) == 0 else u


def week_violation(week: WeekPlan) -> float:
    return float(sum(bound_violation(c.as_array(), d) for d, c in week.days))


def catalog_document() -> dict:
    """Day structures and week mixtures as plain data, for export."""
    return {
        "parts": list(PARTS),
        "day_structures": {
            d.name: {"label": d.label, "lower": list(d.lower), "upper": list(d.upper)}
            for d in DAY_STRUCTURES.values()
        },
        "week_mixtures": {
            m.index: {name: m.counts[name] for name in DAY_ORDER}
            for m in WEEK_MIXTURES.values()
        },
    }
