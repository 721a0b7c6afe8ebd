"""Run-length properties by conditioning on the reference sample.

Given the reference sample the run length is geometric with parameter p, the
per-sample signal probability, so the conditional ARL is 1/p.  Unconditional
quantities are Monte Carlo averages over reference samples drawn from the
process distribution.

Reference samples are generated in fixed blocks of ``BLOCK`` draws, block b
coming from a Philox stream keyed by (seed, stream, b).  Any K uses the first
K samples of that sequence, so results do not depend on how many workers
evaluate the blocks or on how K was reached.  Evaluations that share a seed
share reference samples (common random numbers).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import tail_prob
from .distributions import UNIFORM, DistributionSpec, sample
from .errors import InvalidInputError, NumericError
from .mw_stat import CellProbabilities, cell_probability_rows, _coerce_ref
from .tail_prob import TailMethod

BLOCK = 100
REFERENCE_STREAM = 0


@dataclass(frozen=True)
class MonteCarloConfig:
    seed: int = 20_050_101
    k_initial: int = 100
    k_max: int = 1_000_000
    error_target: float = 0.015
    relative: bool = True
    percentiles: tuple = (0.05, 0.95)
    workers: int = 1
    infinite_policy: str = "abort"

    def __post_init__(self):
        if not 1 <= self.k_initial <= self.k_max:
            raise InvalidInputError("need 1 <= k_initial <= k_max")
        if self.error_target <= 0:
            raise InvalidInputError("error_target must be positive")
        if self.infinite_policy not in ("abort", "exclude"):
            raise InvalidInputError("infinite_policy is 'abort' or 'exclude'")
        if any(not 0 < q < 1 for q in self.percentiles):
            raise InvalidInputError("percentiles must lie in (0, 1)")

    @classmethod
    def fixed(cls, k: int, **kw) -> MonteCarloConfig:
        """Exactly ``k`` reference samples, no adaptive growth."""
        return cls(k_initial=k, k_max=k, **kw)

    def with_seed(self, seed: int) -> MonteCarloConfig:
        return replace(self, seed=seed)


@dataclass(frozen=True)
class RunLengthSummary:
    arl_estimate: float
    smc: float
    percentiles: dict
    std_dev: float
    k_used: int
    method: str
    converged: bool = True
    n_infinite: int = 0

    def percentile(self, q: float) -> float:
        return self.percentiles[q]


@dataclass(frozen=True)
class ProbabilitySummary:
    estimate: float
    smc: float
    k_used: int
    converged: bool = True

    def __float__(self):
        return float(self.estimate)


def block_rng(seed: int, block: int, stream: int = REFERENCE_STREAM) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream, block])))


def reference_block(f: DistributionSpec, m: int, seed: int, block: int) -> np.ndarray:
    """Sorted (BLOCK, m) reference samples of block ``block``."""
    return np.sort(sample(f, (BLOCK, m), block_rng(seed, block)), axis=1)


def reference_samples(f: DistributionSpec, m: int, k: int, seed: int) -> np.ndarray:
    """The first ``k`` sorted reference samples used under ``seed``."""
    nblocks = -(-k // BLOCK)
    return np.concatenate([reference_block(f, m, seed, b) for b in range(nblocks)])[:k]


class BlockSampler:
    """Lazily evaluates ``fn`` on reference blocks and caches the results.

    ``fn`` maps a sorted (BLOCK, m) array to a length-BLOCK vector.
    """

    def __init__(self, f: DistributionSpec, m: int, seed: int,
                 fn: Callable[[np.ndarray], np.ndarray], workers: int = 1):
        self.f = f
        self.m = m
        self.seed = seed
        self.fn = fn
        self.workers = max(1, int(workers))
        self._blocks: list[np.ndarray] = []

    def _eval(self, b):
        return np.asarray(self.fn(reference_block(self.f, self.m, self.seed, b)), dtype=float)

    def take(self, k: int) -> np.ndarray:
        need = -(-k // BLOCK)
        todo = range(len(self._blocks), need)
        if len(todo):
            if self.workers > 1 and len(todo) > 1:
                with ThreadPoolExecutor(self.workers) as pool:
                    self._blocks.extend(pool.map(self._eval, todo))
            else:
                self._blocks.extend(self._eval(b) for b in todo)
        return np.concatenate(self._blocks[:need])[:k]


def _mn_limits(limits):
    return limits.ucl, limits.lcl


def signal_probability_samples(sorted_x, g: DistributionSpec, n: int, limits,
                               method=TailMethod.LR, **kw) -> np.ndarray:
    A = cell_probability_rows(np.atleast_2d(sorted_x), g)
    ucl, lcl = _mn_limits(limits)
    return tail_prob.signal_probability_rows(A, n, ucl, lcl, method, **kw)


def _reciprocal(p):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(p > 0, 1.0 / np.maximum(p, 1e-320), np.inf)


def conditional_arl_rows(sorted_x, g: DistributionSpec, limits, method=TailMethod.LR, **kw):
    return _reciprocal(signal_probability_samples(sorted_x, g, limits.n, limits, method, **kw))


def conditional_arl(x, g: DistributionSpec, limits, method=TailMethod.EXACT, **kw) -> float:
    """1/p_G(x); ``math.inf`` when no signal is possible at this precision."""
    x = _coerce_ref(x)
    if x.m != limits.m:
        raise InvalidInputError(f"reference sample has m={x.m}, limits were built for m={limits.m}")
    return float(conditional_arl_rows(x.sorted_values[None, :], g, limits, method, **kw)[0])


def _finite(values, policy):
    bad = ~np.isfinite(values)
    nbad = int(bad.sum())
    if nbad and policy == "abort":
        raise NumericError(
            f"{nbad} reference samples gave zero signal probability (infinite conditional ARL); "
            "use a more accurate tail method or infinite_policy='exclude'"
        )
    return values[~bad], nbad


def _adaptive(sampler: BlockSampler, mc: MonteCarloConfig):
    k = mc.k_initial
    while True:
        raw = sampler.take(k)
        vals, nbad = _finite(raw, mc.infinite_policy)
        if vals.size < 2:
            raise NumericError("fewer than two finite Monte Carlo values")
        est = float(np.mean(vals))
        sd = float(np.std(vals, ddof=1))
        smc = sd / math.sqrt(vals.size)
        bound = mc.error_target * abs(est) if mc.relative else mc.error_target
        if smc <= bound:
            return vals, est, sd, smc, k, True, nbad
        if k >= mc.k_max:
            return vals, est, sd, smc, k, False, nbad
        k = min(2 * k, mc.k_max)


def summarize(values: np.ndarray, k: int, method: str, percentiles=(0.05, 0.95),
              converged=True, n_infinite=0) -> RunLengthSummary:
    vals = np.asarray(values, dtype=float)
    sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    pct = {q: float(np.quantile(vals, q, method="inverted_cdf")) for q in sorted(percentiles)}
    return RunLengthSummary(
        arl_estimate=float(np.mean(vals)),
        smc=sd / math.sqrt(vals.size),
        percentiles=pct,
        std_dev=sd,
        k_used=k,
        method=method,
        converged=converged,
        n_infinite=n_infinite,
    )


def conditional_arl_sampler(f_reference: DistributionSpec, g_test: DistributionSpec, limits,
                            method=TailMethod.LR, mc: Optional[MonteCarloConfig] = None,
                            **kw) -> BlockSampler:
    mc = mc or MonteCarloConfig()
    method = TailMethod(method)
    if method is TailMethod.EXACT:
        tail_prob.check_exact_budget(limits.m, limits.n, kw.get("max_terms", tail_prob.EXACT_MAX_TERMS))

    def fn(sorted_x):
        return conditional_arl_rows(sorted_x, g_test, limits, method, **kw)

    return BlockSampler(f_reference, limits.m, mc.seed, fn, mc.workers)


def arl_monte_carlo(f_reference: DistributionSpec = UNIFORM, g_test: Optional[DistributionSpec] = None,
                    limits=None, method=TailMethod.LR, mc: Optional[MonteCarloConfig] = None,
                    sampler: Optional[BlockSampler] = None, **kw) -> RunLengthSummary:
    """Unconditional ARL as the Monte Carlo mean of conditional ARLs.

    K starts at ``mc.k_initial`` and doubles (keeping earlier samples) until
    the Monte Carlo standard error is at most the error target or ``k_max``
    is reached; the summary's ``converged`` flag records which.  Pass a
    ``sampler`` to reuse already evaluated reference blocks.
    """
    mc = mc or MonteCarloConfig()
    g_test = g_test or f_reference
    if sampler is None:
        sampler = conditional_arl_sampler(f_reference, g_test, limits, method, mc, **kw)
    vals, est, sd, smc, k, ok, nbad = _adaptive(sampler, mc)
    return summarize(vals, k, TailMethod(method).name, mc.percentiles, ok, nbad)


def arl0_fixed_reference(m: int, n: int, limits, engine=TailMethod.LR) -> float:
    """1/p with the reference sample fixed at the uniform quantiles i/(m+1).

    The LR engine is the default; ``engine="ex"`` expands exactly.
    """
    a = CellProbabilities.uniform_fixed(m)
    p = tail_prob.signal_probability(a, n, limits, engine)
    return math.inf if p <= 0 else 1.0 / p


def arl0_false_alarm(m: int, n: int, limits, engine: str = "edgeworth") -> float:
    """Reciprocal of the in-control false alarm rate.

    ``engine`` is "edgeworth" (default), "exact", or "auto" (exact when
    m*n is within the exact null budget, Edgeworth otherwise).
    """
    if engine == "auto":
        engine = "exact" if m * n <= tail_prob.NULL_EXACT_MAX else "edgeworth"
    if engine == "exact":
        tail = tail_prob.null_upper_tail_exact(m, n, limits.ucl)
    elif engine == "edgeworth":
        tail = tail_prob.null_upper_tail_edgeworth(m, n, limits.ucl)
    else:
        raise InvalidInputError(f"unknown false-alarm engine {engine!r}")
    rate = tail if limits.lcl is None else 2.0 * tail
    return math.inf if rate <= 0 else 1.0 / rate


def run_length_cdf_rows(sorted_x, g, limits, t, method=TailMethod.LR, **kw):
    p = signal_probability_samples(sorted_x, g, limits.n, limits, method, **kw)
    return -np.expm1(t * np.log1p(-np.minimum(p, 1.0)))


def run_length_cdf_at(t: int, limits, g: DistributionSpec = UNIFORM, method=TailMethod.LR,
                      mc: Optional[MonteCarloConfig] = None,
                      f_reference: Optional[DistributionSpec] = None, **kw) -> ProbabilitySummary:
    """Monte Carlo estimate of P(N <= t), averaging 1 - (1 - p)**t.

    The reference distribution defaults to ``g`` without its shift.
    """
    if t < 1:
        raise InvalidInputError("t must be at least 1")
    mc = mc or MonteCarloConfig()
    f_reference = f_reference or g.shifted(0.0)
    method = TailMethod(method)
    if method is TailMethod.EXACT:
        tail_prob.check_exact_budget(limits.m, limits.n, kw.get("max_terms", tail_prob.EXACT_MAX_TERMS))

    def fn(sorted_x):
        return run_length_cdf_rows(sorted_x, g, limits, t, method, **kw)

    sampler = BlockSampler(f_reference, limits.m, mc.seed, fn, mc.workers)
    vals, est, sd, smc, k, ok, _ = _adaptive(sampler, replace(mc, infinite_policy="exclude"))
    return ProbabilitySummary(est, smc, k, ok)
