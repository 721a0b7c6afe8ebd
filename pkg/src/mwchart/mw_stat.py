"""Mann-Whitney charting statistic and its cell decomposition.

Given the sorted reference sample x_(1) <= ... <= x_(m), a test observation
falls in cell l when exactly l reference values lie below it.  The statistic
is the sum of the cell indices of the n test observations, and conditionally
on x the cell indices are i.i.d. with probabilities a_l = G(x_(l+1)) - G(x_(l)).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .distributions import DistributionSpec, cdf
from .errors import InvalidInputError, NumericError


class TiePolicy(str, enum.Enum):
    STRICT = "strict"
    MIDRANK = "midrank"


def _as_values(values, what):
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise InvalidInputError(f"{what} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{what} contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class ReferenceSample:
    """Phase I observations, sorted once on construction."""

    values: np.ndarray
    sorted_values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vals = _as_values(self.values, "reference sample")
        vals.setflags(write=False)
        srt = np.sort(vals)
        srt.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "sorted_values", srt)

    @property
    def m(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class TestSample:
    values: np.ndarray
    index: int = 1

    __test__ = False  # not a pytest class

    def __post_init__(self):
        vals = _as_values(self.values, "test sample")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.index < 1:
            raise InvalidInputError("test sample index must be positive")

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class CellProbabilities:
    a: np.ndarray
    source: str = "from_cdf"

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).ravel()
        if a.size < 2:
            raise InvalidInputError("need at least two cells (m >= 1)")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise InvalidInputError("cell probabilities must be finite and non-negative")
        if abs(a.sum() - 1.0) > 1e-12:
            raise InvalidInputError(f"cell probabilities sum to {a.sum()!r}, not 1")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def m(self) -> int:
        return self.a.size - 1

    def reversed(self) -> CellProbabilities:
        return CellProbabilities(self.a[::-1].copy(), self.source)

    @classmethod
    def uniform_fixed(cls, m: int) -> CellProbabilities:
        """Cells of the reference sample fixed at the quantiles i/(m+1)."""
        return cls(np.full(m + 1, 1.0 / (m + 1)), "uniform_fixed")


def _coerce_ref(x):
    return x if isinstance(x, ReferenceSample) else ReferenceSample(x)


def _coerce_test(y):
    return y if isinstance(y, TestSample) else TestSample(y)


def mann_whitney_doubled(x, y, tie=TiePolicy.MIDRANK) -> int:
    """Twice the statistic, as an exact integer (midrank ties count 1)."""
    x = _coerce_ref(x)
    y = _coerce_test(y)
    srt = x.sorted_values
    below = np.searchsorted(srt, y.values, side="left")
    if TiePolicy(tie) is TiePolicy.STRICT:
        return int(2 * below.sum())
    at_or_below = np.searchsorted(srt, y.values, side="right")
    return int((below + at_or_below).sum())


def mann_whitney(x, y, tie=TiePolicy.MIDRANK) -> float:
    """Number of (x_i, y_j) pairs with x_i < y_j; ties add 1/2 under midrank."""
    return mann_whitney_doubled(x, y, tie) / 2


def cell_counts(x, y) -> np.ndarray:
    """For each y_j, how many reference values lie strictly below it."""
    x = _coerce_ref(x)
    y = _coerce_test(y)
    return np.searchsorted(x.sorted_values, y.values, side="left")


def cell_probability_rows(sorted_x: np.ndarray, g: DistributionSpec) -> np.ndarray:
    """Cell probabilities for each row of a (K, m) array of sorted samples."""
    gx = cdf(g, sorted_x)
    if not np.all(np.isfinite(gx)):
        raise NumericError("distribution function returned non-finite values")
    k = gx.shape[:-1]
    edges = np.concatenate([np.zeros(k + (1,)), gx, np.ones(k + (1,))], axis=-1)
    return np.maximum(np.diff(edges, axis=-1), 0.0)


def cell_probabilities(x, g: DistributionSpec) -> CellProbabilities:
    x = _coerce_ref(x)
    a = cell_probability_rows(x.sorted_values, g)
    a = a / a.sum()
    return CellProbabilities(a, "from_cdf")
