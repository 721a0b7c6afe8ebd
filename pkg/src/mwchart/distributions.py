"""Continuous process distributions with a location shift in SD units.

Families use their natural parameterisation (uniform on [0, 1], standard
normal, Laplace with unit scale, gamma with shape 2 and rate 2, exponential
with rate 1).  ``standardized=True`` divides the variable by its standard
deviation.  A shift ``delta`` always moves the variable by ``delta`` standard
deviations of the (possibly standardized) family, i.e. G(x) = F(x - delta*sd).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InvalidInputError

FAMILIES = ("uniform01", "normal", "laplace", "gamma22", "exponential")

# standard deviation and mean in the natural parameterisation
_SD = {
    "uniform01": 1.0 / math.sqrt(12.0),
    "normal": 1.0,
    "laplace": math.sqrt(2.0),
    "gamma22": math.sqrt(0.5),
    "exponential": 1.0,
}
_MEAN = {"uniform01": 0.5, "normal": 0.0, "laplace": 0.0, "gamma22": 1.0, "exponential": 1.0}


@dataclass(frozen=True)
class DistributionSpec:
    family: str
    shift_delta: float = 0.0
    standardized: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not math.isfinite(self.shift_delta):
            raise InvalidInputError("shift_delta must be finite")

    @property
    def scale(self) -> float:
        return 1.0 / _SD[self.family] if self.standardized else 1.0

    @property
    def sd(self) -> float:
        return _SD[self.family] * self.scale

    @property
    def mean(self) -> float:
        return _MEAN[self.family] * self.scale + self.shift_delta * self.sd

    @property
    def location(self) -> float:
        return self.shift_delta * self.sd

    def shifted(self, delta: float) -> DistributionSpec:
        return DistributionSpec(self.family, delta, self.standardized)

    def cdf(self, x):
        return cdf(self, x)

    def sample(self, count, rng):
        return sample(self, count, rng)


def _base_cdf(family, z):
    if family == "uniform01":
        return np.clip(z, 0.0, 1.0)
    if family == "normal":
        return special.ndtr(z)
    if family == "laplace":
        return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))
    if family == "gamma22":
        return special.gammainc(2.0, 2.0 * np.maximum(z, 0.0))
    return -np.expm1(-np.maximum(z, 0.0))


def cdf(spec: DistributionSpec, x):
    """Distribution function of ``spec`` evaluated elementwise at ``x``."""
    z = (np.asarray(x, dtype=float) - spec.location) / spec.scale
    out = _base_cdf(spec.family, z)
    if np.ndim(out) == 0:
        return float(out)
    return out


def sample(spec: DistributionSpec, count, rng: np.random.Generator):
    """Draw ``count`` i.i.d. variates (an int or a shape tuple) from ``spec``."""
    if np.prod(count) < 1:
        raise InvalidInputError("count must be at least 1")
    f = spec.family
    if f == "uniform01":
        z = rng.random(count)
    elif f == "normal":
        z = rng.standard_normal(count)
    elif f == "laplace":
        z = rng.laplace(0.0, 1.0, count)
    elif f == "gamma22":
        z = rng.gamma(2.0, 0.5, count)
    else:
        z = rng.standard_exponential(count)
    return z * spec.scale + spec.location


def _laplace_sum_sf(n, s):
    # S = G1 - G2 with G1, G2 ~ Gamma(n, 1); for s >= 0 the tail is a finite
    # mixture of upper incomplete gamma functions
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    tail = np.zeros_like(a)
    lf = math.lgamma(n)
    for j in range(n):
        logc = (
            math.log(math.comb(n - 1, j))
            + math.lgamma(n + j)
            - (n + j) * math.log(2.0)
            - 2.0 * lf
            + math.lgamma(n - j)
        )
        tail = tail + math.exp(logc) * special.gammaincc(n - j, a)
    return np.where(s >= 0, tail, 1.0 - tail)


def _irwin_hall_cdf(n, s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    for k in range(n + 1):
        term = (-1) ** k * math.comb(n, k) * np.where(s > k, (s - k), 0.0) ** n
        out = out + term
    return np.clip(out / math.factorial(n), 0.0, 1.0)


def _base_sum_sf(family, n, s):
    if family == "normal":
        return special.ndtr(-s / math.sqrt(n))
    if family == "gamma22":
        return special.gammaincc(2.0 * n, 2.0 * np.maximum(s, 0.0))
    if family == "exponential":
        return special.gammaincc(float(n), np.maximum(s, 0.0))
    if family == "laplace":
        return _laplace_sum_sf(n, s)
    if n > 12:
        raise InvalidInputError("closed-form uniform subgroup mean is limited to n <= 12")
    return 1.0 - _irwin_hall_cdf(n, s)


def _base_sum_cdf(family, n, s):
    if family == "normal":
        return special.ndtr(s / math.sqrt(n))
    if family == "gamma22":
        return special.gammainc(2.0 * n, 2.0 * np.maximum(s, 0.0))
    if family == "exponential":
        return special.gammainc(float(n), np.maximum(s, 0.0))
    if family == "laplace":
        return _laplace_sum_sf(n, -np.asarray(s, dtype=float))
    if n > 12:
        raise InvalidInputError("closed-form uniform subgroup mean is limited to n <= 12")
    return _irwin_hall_cdf(n, s)


def mean_sf(spec: DistributionSpec, n: int, y):
    """P(Ybar > y) for the mean of ``n`` i.i.d. draws from ``spec``."""
    s = n * (np.asarray(y, dtype=float) - spec.location) / spec.scale
    return _base_sum_sf(spec.family, n, s)


def mean_cdf(spec: DistributionSpec, n: int, y):
    """P(Ybar < y) for the mean of ``n`` i.i.d. draws from ``spec``."""
    s = n * (np.asarray(y, dtype=float) - spec.location) / spec.scale
    return _base_sum_cdf(spec.family, n, s)


UNIFORM = DistributionSpec("uniform01")
