"""Conditional and null tail probabilities of the Mann-Whitney statistic.

Conditional on the reference sample the statistic is a sum of ``n`` i.i.d.
lattice variables with probabilities ``a``.  Its upper tail is available
exactly (power of the probability generating function), through the
Lugannani-Rice saddlepoint formula, or through the CLT.  Lower tails are
always obtained by reversing the cells, never as one minus a cdf.

The null (unconditional, in-control) distribution is handled separately:
exactly by counting rank configurations, or with a second-order Edgeworth
series built from the exact null cumulants.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, special

from . import _kernels_py, kernels
from .errors import CapacityError, InvalidInputError, NumericError
from .mw_stat import CellProbabilities

#: largest (m+1)*n for which the exact conditional expansion is attempted
EXACT_MAX_TERMS = 10_000
#: largest m*n for which the exact null distribution is built
NULL_EXACT_MAX = 1_000_000

LAMBDA_VARIANTS = {"minus": 0, "plus": 1}
#: chosen by comparison with the exact expansion; (1 - exp(gamma)) makes
#: lambda negative in the upper tail and the formula breaks down
DEFAULT_LAMBDA = "minus"


class TailMethod(str, enum.Enum):
    EXACT = "ex"
    LR = "lr"
    NORMAL = "no"


def resolve_method(method, m: int, n: int, max_terms: int = EXACT_MAX_TERMS) -> TailMethod:
    """Map "auto" to EX when the exact expansion fits the budget, LR otherwise."""
    if str(getattr(method, "value", method)).lower() == "auto":
        return TailMethod.EXACT if (m + 1) * n <= max_terms else TailMethod.LR
    return TailMethod(method)


@dataclass(frozen=True)
class PgfPolynomial:
    coeffs: np.ndarray

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1


@dataclass(frozen=True)
class SaddlepointContext:
    gamma: float
    k_at_gamma: float
    mean_at_gamma: float
    sd_at_gamma: float
    u_threshold: float
    lam: float
    r: float


def _rows(a) -> np.ndarray:
    if isinstance(a, CellProbabilities):
        a = a.a
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    return np.ascontiguousarray(arr)


def _check_n_u(n, u, m):
    if n < 1:
        raise InvalidInputError("test sample size n must be at least 1")
    if int(u) != u:
        raise InvalidInputError("thresholds live on the integer lattice")


def check_exact_budget(m: int, n: int, max_terms: int = EXACT_MAX_TERMS):
    if (m + 1) * n > max_terms:
        raise CapacityError(
            f"exact expansion needs (m+1)*n = {(m + 1) * n} terms, above the budget of "
            f"{max_terms}; use the LR method instead"
        )


def pgf_power(a, n: int) -> PgfPolynomial:
    """Coefficients of H(z)**n, i.e. the conditional distribution of M."""
    row = _rows(a)[0]
    res = _kernels_py._power(row, n)
    return PgfPolynomial(res)


# -- conditional upper tails -------------------------------------------------


def exact_upper_tail_rows(A, n, u, prune=True, max_terms=EXACT_MAX_TERMS):
    A = _rows(A)
    check_exact_budget(A.shape[1] - 1, n, max_terms)
    return kernels.exact_upper_tail(A, int(n), int(u), bool(prune))


def exact_upper_tail(a, n: int, u_mn: int, prune: bool = True,
                     max_terms: int = EXACT_MAX_TERMS) -> float:
    """P(M > u_mn) by expanding the n-th power of the cell pgf.

    ``prune=True`` discards partial sums that can no longer cross the
    threshold (and banks those that must); the result is the same.
    """
    A = _rows(a)
    _check_n_u(n, u_mn, A.shape[1] - 1)
    return float(exact_upper_tail_rows(A, n, u_mn, prune, max_terms)[0])


def lr_upper_tail_rows(A, n, u, variant=DEFAULT_LAMBDA):
    A = _rows(A)
    out = kernels.lr_upper_tail(A, int(n), int(u), LAMBDA_VARIANTS[variant])
    if np.isnan(out).any():
        raise NumericError(f"saddlepoint equation did not converge for {int(np.isnan(out).sum())} rows")
    return out


def lr_upper_tail(a, n: int, u_mn: int, variant: str = DEFAULT_LAMBDA) -> float:
    """Lugannani-Rice approximation to P(M > u_mn).

    Solves m(gamma) = (u_mn + 1)/n for the tilted mean of one cell count and
    evaluates 1 - Phi(r) + phi(r) (1/lam - 1/r).  Near the centre of the
    distribution (|gamma| < 1e-6) the continuity-corrected normal value is
    returned instead.
    """
    A = _rows(a)
    _check_n_u(n, u_mn, A.shape[1] - 1)
    if np.count_nonzero(A[0]) < 2:
        raise InvalidInputError("cell probabilities are concentrated on a single cell")
    return float(lr_upper_tail_rows(A, n, u_mn, variant)[0])


def saddlepoint_context(a, n: int, u_mn: int, variant: str = DEFAULT_LAMBDA) -> SaddlepointContext:
    """Intermediate quantities of the LR formula for one threshold."""
    row = _rows(a)[0]
    nz = np.flatnonzero(row)
    u = (u_mn + 1) / n
    if not nz[0] < u < nz[-1]:
        raise InvalidInputError("threshold outside the interior of the lattice support")
    la = np.log(row[nz])[None, :]
    dd = (nz - u)[None, :].astype(float)

    def mean_gap(t):
        return _kernels_py._tilt(np.array([t]), la, dd)[1][0]

    lo, hi = -40.0, 40.0
    while mean_gap(lo) > 0:
        lo *= 2
    while mean_gap(hi) < 0:
        hi *= 2
    g = optimize.brentq(mean_gap, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    kd, gap, var = (v[0] for v in _kernels_py._tilt(np.array([g]), la, dd))
    sig = math.sqrt(var)
    fac = 1 - math.exp(-g) if variant == "minus" else 1 - math.exp(g)
    lam = math.sqrt(n) * fac * sig
    r = math.copysign(math.sqrt(max(-2 * n * kd, 0.0)), g)
    return SaddlepointContext(g, kd + g * u, gap + u, sig, u, lam, r)


def cell_moments(A):
    A = _rows(A)
    l = np.arange(A.shape[1])
    mu = A @ l
    var = A @ (l * l) - mu * mu
    return mu, np.sqrt(np.maximum(var, 0.0))


def normal_upper_tail_rows(A, n, u):
    mu, sd = cell_moments(A)
    if np.any(sd == 0):
        raise InvalidInputError("cell distribution has zero variance")
    return special.ndtr(-(u + 0.5 - n * mu) / (math.sqrt(n) * sd))


def normal_upper_tail(a, n: int, u_mn: int) -> float:
    """CLT approximation with continuity correction."""
    A = _rows(a)
    _check_n_u(n, u_mn, A.shape[1] - 1)
    return float(normal_upper_tail_rows(A, n, u_mn)[0])


def upper_tail_rows(A, n, u, method: TailMethod, **kw):
    method = TailMethod(method)
    if method is TailMethod.EXACT:
        return exact_upper_tail_rows(A, n, u, **kw)
    if method is TailMethod.LR:
        return lr_upper_tail_rows(A, n, u, **kw)
    return normal_upper_tail_rows(A, n, u)


def signal_probability_rows(A, n: int, ucl: int, lcl: Optional[int], method, **kw):
    """Per-row probability that one test sample plots outside the limits."""
    A = _rows(A)
    p = upper_tail_rows(A, n, ucl, method, **kw)
    if lcl is not None:
        mn = (A.shape[1] - 1) * n
        rev = np.ascontiguousarray(A[:, ::-1])
        p = p + upper_tail_rows(rev, n, mn - lcl, method, **kw)
    return p


def signal_probability(a, n: int, limits, method=TailMethod.EXACT, **kw) -> float:
    """P(M < lcl) + P(M > ucl) given the reference sample's cell probabilities.

    ``limits`` is a ChartLimits (or anything with ``ucl``/``lcl``); a one-sided
    chart has ``lcl`` None and only the upper tail counts.
    """
    return float(signal_probability_rows(a, n, limits.ucl, limits.lcl, method, **kw)[0])


# -- null distribution -------------------------------------------------------


def null_distribution(m: int, n: int, max_mn: int = NULL_EXACT_MAX) -> np.ndarray:
    """P0(M = k), k = 0..mn, from the Gaussian binomial coefficient.

    Only the lower half is used by the tail functions; by construction its
    entries never depend on the upper half.
    """
    if m < 1 or n < 1:
        raise InvalidInputError("m and n must be positive")
    if m * n > max_mn:
        raise CapacityError(f"exact null distribution needs m*n = {m * n} > {max_mn}")
    if n > m:
        m, n = n, m
    size = m * n + 1
    c = np.zeros(size)
    c[0] = 1.0
    for j in range(1, n + 1):
        b = np.empty(size)
        for r in range(j):
            b[r::j] = np.cumsum(c[r::j])
        d = b.copy()
        d[m + j:] -= b[: size - m - j]
        d[m * j + 1:] = 0.0
        np.maximum(d, 0.0, out=d)
        c = d * (j / (m + j))
    return c


def null_upper_tail_exact(m: int, n: int, u_mn: int, max_mn: int = NULL_EXACT_MAX) -> float:
    """P0(M > u_mn), evaluated as the lower tail P0(M < mn - u_mn)."""
    mn = m * n
    if u_mn < 0:
        return 1.0
    if u_mn >= mn:
        return 0.0
    pmf = null_distribution(m, n, max_mn)
    k = mn - u_mn  # P(M < k)
    return float(np.sum(pmf[:k][::-1]))


def null_cumulant(m: int, n: int, r: int) -> float:
    """r-th cumulant (even r >= 2) of the null distribution.

    M is distributed as a sum of independent discrete uniforms on
    {0..m+j-1} minus independent discrete uniforms on {0..j-1}, whose
    cumulants are B_r (N**r - 1)/r.
    """
    if r % 2:
        return float(m * n / 2) if r == 1 else 0.0
    b = special.bernoulli(r)[r]
    return float(sum(b * ((m + j) ** r - j ** r) / r for j in range(1, n + 1)))


def _hermite(k, x):
    return special.eval_hermitenorm(k, x)


def null_upper_tail_edgeworth(m: int, n: int, u_mn: int) -> float:
    """Edgeworth approximation to P0(M > u_mn) with continuity correction.

    Uses the exact fourth and sixth null cumulants; odd-order terms vanish
    by symmetry.
    """
    if m < 1 or n < 1:
        raise InvalidInputError("m and n must be positive")
    k2 = null_cumulant(m, n, 2)
    g4 = null_cumulant(m, n, 4) / k2 ** 2
    g6 = null_cumulant(m, n, 6) / k2 ** 3
    x = (u_mn + 0.5 - m * n / 2) / math.sqrt(k2)
    corr = g4 / 24 * _hermite(3, x) + g6 / 720 * _hermite(5, x) + g4 ** 2 / 1152 * _hermite(7, x)
    tail = special.ndtr(-x) + math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi) * corr
    return min(max(float(tail), 0.0), 1.0)


def null_upper_tail_normal(m: int, n: int, u_mn: int) -> float:
    k2 = null_cumulant(m, n, 2)
    return float(special.ndtr(-(u_mn + 0.5 - m * n / 2) / math.sqrt(k2)))
