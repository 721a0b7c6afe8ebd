"""Shewhart X-bar chart with estimated parameters, and head-to-head studies.

The chart estimates mu and sigma from the m reference observations (sample
mean, sample SD with divisor m - 1) and signals when the subgroup mean falls
outside mu_hat +- k sigma_hat / sqrt(n).  As for the MW chart, the run length
is geometric given the reference sample, so everything reduces to the
conditional signal probability p(mu_hat, sigma_hat).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special, stats

from . import run_length
from .chart_design import ChartLimits, DesignCriterion, Sided, find_limits
from .distributions import DistributionSpec, mean_cdf, mean_sf, sample
from .errors import InvalidInputError, NumericError
from .run_length import BLOCK, MonteCarloConfig, reference_block
from .tail_prob import TailMethod, resolve_method

NORMAL = DistributionSpec("normal")
INNER_DEFAULT = 100_000
INNER_STREAM = 1


@dataclass(frozen=True)
class ShewhartLimits:
    k: float
    mu_hat: float
    sigma_hat: float
    n: int
    target_arl0: Optional[float] = None
    sided: Sided = Sided.TWO_SIDED

    def __post_init__(self):
        object.__setattr__(self, "sided", Sided(self.sided))
        if not self.k > 0:
            raise InvalidInputError("chart constant k must be positive")
        if not self.sigma_hat > 0 or not math.isfinite(self.sigma_hat):
            raise InvalidInputError("sigma_hat must be positive and finite")
        if self.n < 1:
            raise InvalidInputError("subgroup size must be positive")

    @classmethod
    def from_reference(cls, x, k: float, n: int, **kw) -> ShewhartLimits:
        x = np.asarray(x, dtype=float)
        if x.size < 2:
            raise InvalidInputError("need at least two reference observations")
        return cls(k, float(x.mean()), float(x.std(ddof=1)), n, **kw)

    @property
    def half_width(self) -> float:
        return self.k * self.sigma_hat / math.sqrt(self.n)

    @property
    def ucl(self) -> float:
        return self.mu_hat + self.half_width

    @property
    def lcl(self) -> Optional[float]:
        return self.mu_hat - self.half_width if self.sided is Sided.TWO_SIDED else None

    def signals(self, ybar: float) -> bool:
        return ybar > self.ucl or (self.lcl is not None and ybar < self.lcl)


def reference_estimates(sorted_x: np.ndarray):
    """Row-wise (mu_hat, sigma_hat) of a (K, m) array."""
    return sorted_x.mean(axis=-1), sorted_x.std(axis=-1, ddof=1)


def signal_probability(mu_hat, sigma_hat, k, g: DistributionSpec, n: int, sided=Sided.TWO_SIDED):
    """Closed-form P(signal) for one subgroup of size n drawn from ``g``."""
    mu_hat = np.asarray(mu_hat, dtype=float)
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    if np.any(sigma_hat <= 0):
        raise InvalidInputError("sigma_hat must be positive")
    h = k * sigma_hat / math.sqrt(n)
    p = mean_sf(g, n, mu_hat + h)
    if Sided(sided) is Sided.TWO_SIDED:
        p = p + mean_cdf(g, n, mu_hat - h)
    return p


def signal_probability_mc(mu_hat, sigma_hat, k, g: DistributionSpec, n: int, sided=Sided.TWO_SIDED,
                          inner: int = INNER_DEFAULT, seed: int = 0):
    """Inner Monte Carlo version of :func:`signal_probability` (scalar inputs)."""
    rng = run_length.block_rng(seed, 0, INNER_STREAM)
    ybar = sample(g, (inner, n), rng).mean(axis=1)
    lim = ShewhartLimits(k, float(mu_hat), float(sigma_hat), n, sided=sided)
    hit = ybar > lim.ucl
    if lim.lcl is not None:
        hit |= ybar < lim.lcl
    return float(hit.mean())


def shewhart_conditional_arl(mu_hat: float, sigma_hat: float, k: float, g: DistributionSpec, n: int,
                             sided=Sided.TWO_SIDED, engine: str = "closed",
                             inner: int = INNER_DEFAULT, seed: int = 0) -> float:
    """1/p for the chart with the given estimates; ``engine`` is "closed" or "mc"."""
    if not sigma_hat > 0:
        raise InvalidInputError("sigma_hat must be positive")
    if engine == "closed":
        p = float(signal_probability(mu_hat, sigma_hat, k, g, n, sided))
    elif engine == "mc":
        p = signal_probability_mc(mu_hat, sigma_hat, k, g, n, sided, inner, seed)
    else:
        raise InvalidInputError(f"unknown engine {engine!r}")
    return math.inf if p <= 0 else 1.0 / p


# -- calibration ---------------------------------------------------------------


def _normal_arl0_quadrature(m, n, k, sided=Sided.TWO_SIDED, nodes=96):
    # E[1/p] with sqrt(m) mu_hat ~ N(0,1) and (m-1) S^2 ~ chi2(m-1), independent
    z, w = special.roots_hermitenorm(nodes)
    w = w / math.sqrt(2 * math.pi)
    a = math.sqrt(n / m) * z
    two = Sided(sided) is Sided.TWO_SIDED
    dof = m - 1

    def inner(v):
        s = math.sqrt(v / dof)
        logp = special.log_ndtr(-(a + k * s))
        if two:
            logp = np.logaddexp(logp, special.log_ndtr(a - k * s))
        return float(np.dot(w, np.exp(-logp))) * stats.chi2.pdf(v, dof)

    lo, hi = stats.chi2.ppf(1e-16, dof), stats.chi2.isf(1e-40, dof)
    mid = float(dof)
    val = 0.0
    for a_, b_ in ((lo, mid), (mid, hi)):
        part, _ = integrate.quad(inner, a_, b_, epsabs=0, epsrel=1e-11, limit=400)
        val += part
    return val


def shewhart_arl0(m: int, n: int, k: float, sided=Sided.TWO_SIDED) -> float:
    """In-control ARL under normality by deterministic quadrature."""
    if m < 2 or n < 1:
        raise InvalidInputError("need m >= 2 and n >= 1")
    return _normal_arl0_quadrature(m, n, k, sided)


def _mc_estimates(f: DistributionSpec, m: int, k_ref: int, seed: int):
    nblocks = -(-k_ref // BLOCK)
    mus, sds = [], []
    for b in range(nblocks):
        x = reference_block(f, m, seed, b)
        mu, sd = reference_estimates(x)
        mus.append(mu)
        sds.append(sd)
    return np.concatenate(mus)[:k_ref], np.concatenate(sds)[:k_ref]


def shewhart_constant(m: int, n: int, target_arl0: float = 500.0, mc: Optional[MonteCarloConfig] = None,
                      dist: DistributionSpec = NORMAL, sided=Sided.TWO_SIDED) -> float:
    """Chart constant k with unconditional ARL0 equal to ``target_arl0``.

    Under normal data the ARL0 is a two-dimensional integral that is
    evaluated by quadrature and solved exactly.  For other families the same
    equation is solved on a fixed set of simulated reference samples (common
    random numbers, so the Monte Carlo ARL0 is smooth and monotone in k).
    """
    if target_arl0 <= 1:
        raise InvalidInputError("target ARL0 must exceed 1")
    sided = Sided(sided)
    lo_k, hi_k = 0.5, 8.0
    if dist.family == "normal":
        def gap(k):
            return math.log(shewhart_arl0(m, n, k, sided)) - math.log(target_arl0)
    else:
        mc = mc or MonteCarloConfig()
        g0 = dist.shifted(0.0)
        kk = min(max(mc.k_initial, 10_000), mc.k_max)
        mu, sd = _mc_estimates(g0, m, kk, mc.seed)

        def gap(k):
            p = signal_probability(mu, sd, k, g0, n, sided)
            with np.errstate(divide="ignore"):
                return math.log(np.mean(1.0 / p)) - math.log(target_arl0)
    try:
        if gap(lo_k) > 0 or gap(hi_k) < 0:
            raise NumericError(f"no chart constant in [{lo_k}, {hi_k}] reaches ARL0 {target_arl0}")
        return float(optimize.brentq(gap, lo_k, hi_k, xtol=1e-10, rtol=1e-12))
    except (ValueError, FloatingPointError) as exc:
        raise NumericError(f"chart constant search failed: {exc}") from exc


# -- head-to-head studies ------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    delta: float
    mw_arl: float
    mw_q95: float
    shewhart_arl: float
    shewhart_q95: float
    mw_smc: float = 0.0
    shewhart_smc: float = 0.0


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple
    distribution: DistributionSpec
    m: int
    n: int
    target_arl0: float
    mw_limits: Optional[ChartLimits] = None
    shewhart_k: Optional[float] = None
    k_used: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(sorted(self.rows, key=lambda r: r.delta)))

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


def paired_conditional_arls(f, m, limits: ChartLimits, k, g, sided, method, seed, k_ref, **kw):
    """Conditional ARLs of both charts on the first k_ref shared reference samples."""
    out_mw, out_sh = [], []
    for b in range(-(-k_ref // BLOCK)):
        x = reference_block(f, m, seed, b)
        out_mw.append(run_length.conditional_arl_rows(x, g, limits, method, **kw))
        mu, sd = reference_estimates(x)
        p = signal_probability(mu, sd, k, g, limits.n, sided)
        with np.errstate(divide="ignore"):
            out_sh.append(np.where(p > 0, 1.0 / np.maximum(p, 1e-320), np.inf))
    return np.concatenate(out_mw)[:k_ref], np.concatenate(out_sh)[:k_ref]


def _q(v, q):
    return float(np.quantile(v, q, method="inverted_cdf"))


def compare_charts(m: int, n: int, target_arl0: float = 500.0, dist: DistributionSpec = NORMAL,
                   deltas: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0),
                   sided=Sided.TWO_SIDED, mc: Optional[MonteCarloConfig] = None,
                   method="auto", mw_limits: Optional[ChartLimits] = None,
                   shewhart_k: Optional[float] = None, **kw) -> ComparisonReport:
    """ARL_delta and the 95th conditional percentile for both charts.

    Both charts are designed for ``target_arl0`` under ``dist``; the MW chart
    is distribution-free, the Shewhart constant is calibrated for ``dist``
    itself.  Every delta reuses the same reference samples for both charts.
    The default method is exact when it fits the budget: out-of-control
    signal probabilities are large, where the saddlepoint formula is least
    accurate.
    """
    mc = mc or MonteCarloConfig()
    sided = Sided(sided)
    f = dist.shifted(0.0)
    method = resolve_method(method, m, n)
    if mw_limits is None:
        mw_limits = find_limits(m, n, DesignCriterion(target=target_arl0), mc, sided, TailMethod.LR)
    if shewhart_k is None:
        shewhart_k = shewhart_constant(m, n, target_arl0, mc, f, sided)
    k_ref = mc.k_initial if mc.k_initial == mc.k_max else max(mc.k_initial, 1000)
    k_ref = min(k_ref, mc.k_max)
    rows = []
    for d in deltas:
        g = f.shifted(float(d))
        mw, sh = paired_conditional_arls(f, m, mw_limits, shewhart_k, g, sided, method, mc.seed, k_ref, **kw)
        mw, sh = mw[np.isfinite(mw)], sh[np.isfinite(sh)]
        rows.append(ComparisonRow(
            float(d), float(mw.mean()), _q(mw, 0.95), float(sh.mean()), _q(sh, 0.95),
            float(mw.std(ddof=1) / math.sqrt(mw.size)), float(sh.std(ddof=1) / math.sqrt(sh.size)),
        ))
    return ComparisonReport(tuple(rows), f, m, n, target_arl0, mw_limits, shewhart_k, k_ref)


@dataclass(frozen=True)
class PercentileRow:
    m: int
    mw_ucl: int
    mw_p5: float
    mw_p95: float
    mw_sd: float
    shewhart_k: float
    sh_p5: float
    sh_p95: float
    sh_sd: float
    mw_arl: float = float("nan")
    sh_arl: float = float("nan")
    k_used: int = 0


def in_control_percentile_table(m_list: Sequence[int], n: int = 5, target_arl0: float = 500.0,
                                mc: Optional[MonteCarloConfig] = None, method=TailMethod.LR,
                                k_ref: int = 1000, ucl: Optional[dict] = None) -> list:
    """Spread of the conditional in-control ARL for both charts, normal data.

    ``ucl`` optionally maps m to a fixed MW upper limit instead of designing one.
    """
    mc = mc or MonteCarloConfig()
    rows = []
    for m in m_list:
        if ucl and m in ucl:
            lim = ChartLimits(m, n, int(ucl[m]))
        else:
            lim = find_limits(m, n, DesignCriterion(target=target_arl0), mc, method=method)
        k = shewhart_constant(m, n, target_arl0)
        mw, sh = paired_conditional_arls(NORMAL, m, lim, k, NORMAL, Sided.TWO_SIDED, TailMethod(method), mc.seed, k_ref)
        rows.append(PercentileRow(
            m, lim.ucl, _q(mw, 0.05), _q(mw, 0.95), float(mw.std(ddof=1)),
            k, _q(sh, 0.05), _q(sh, 0.95), float(sh.std(ddof=1)),
            float(mw.mean()), float(sh.mean()), k_ref,
        ))
    return rows
