"""Control limits for a target in-control criterion.

The search runs in three stages over the integer upper limit U:

1. FA: the smallest U whose reciprocal false alarm rate reaches the target.
2. FR (only for m <= 500): the crossing of the fixed-reference ARL curve,
   which is deterministic and cheap, refines the guess and gives a slope.
3. Monte Carlo: the criterion itself is estimated at successive U.  Until
   two evaluations straddle the target, steps follow the current slope
   estimate; afterwards U is proposed by linear interpolation between the
   closest bracketing pair.  The search stops once an evaluation lies within
   the tolerance band.

All stage-3 evaluations share the Monte Carlo seed, so they see the same
reference samples and the estimated criterion is (nearly) monotone in U.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from . import run_length
from .distributions import UNIFORM
from .errors import InvalidInputError, NumericError
from .run_length import MonteCarloConfig, RunLengthSummary
from .tail_prob import TailMethod

log = logging.getLogger(__name__)


class Sided(str, enum.Enum):
    TWO_SIDED = "two_sided"
    UPPER = "upper"


class CriterionKind(str, enum.Enum):
    MEAN_ARL0 = "mean_arl0"
    CONDITIONAL_PERCENTILE = "conditional_percentile"
    RUN_LENGTH_PROBABILITY = "run_length_probability"


class InfeasibleDesignError(InvalidInputError):
    def __init__(self, msg, max_attainable):
        super().__init__(msg)
        self.max_attainable = max_attainable


@dataclass(frozen=True)
class TraceStep:
    stage: str
    ucl: int
    lcl: Optional[int]
    value: float
    smc: Optional[float] = None
    p5: Optional[float] = None
    k: Optional[int] = None
    label: str = "ARL0"

    def format(self) -> str:
        lcl = "-" if self.lcl is None else self.lcl
        line = f"ucl={self.ucl} lcl={lcl} {self.label}={self.value:.6g}"
        if self.smc is not None:
            line += f" smc={self.smc:.6g}"
        if self.p5 is not None:
            line += f" 5% perc={self.p5:.6g}"
        if self.k is not None:
            line += f" K={self.k}"
        return line


@dataclass(frozen=True)
class ChartLimits:
    m: int
    n: int
    ucl: int
    sided: Sided = Sided.TWO_SIDED
    target_arl0: Optional[float] = None
    attained_arl0: Optional[float] = None
    attained_percentile_5: Optional[float] = None
    converged: bool = True
    trace: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "sided", Sided(self.sided))
        for name in ("m", "n", "ucl"):
            if int(getattr(self, name)) != getattr(self, name):
                raise InvalidInputError(f"{name} must be an integer")
        if self.m < 1 or self.n < 1:
            raise InvalidInputError("m and n must be positive")
        if not self.mn / 2 < self.ucl <= self.mn:
            raise InvalidInputError(f"ucl must lie in (mn/2, mn] = ({self.mn / 2}, {self.mn}], got {self.ucl}")

    @property
    def mn(self) -> int:
        return self.m * self.n

    @property
    def lcl(self) -> Optional[int]:
        return self.mn - self.ucl if self.sided is Sided.TWO_SIDED else None

    @property
    def center(self) -> float:
        return self.mn / 2

    def with_ucl(self, ucl: int) -> ChartLimits:
        return replace(self, ucl=int(ucl), attained_arl0=None, attained_percentile_5=None, trace=())

    def signals(self, statistic: float) -> bool:
        if statistic > self.ucl:
            return True
        return self.lcl is not None and statistic < self.lcl


@dataclass(frozen=True)
class DesignCriterion:
    kind: CriterionKind = CriterionKind.MEAN_ARL0
    target: float = 500.0
    percentile_q: float = 0.05
    t: Optional[int] = None
    tolerance: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "kind", CriterionKind(self.kind))
        if not 0 < self.tolerance < 0.25:
            raise InvalidInputError("tolerance must lie in (0, 0.25)")
        if self.target <= 0:
            raise InvalidInputError("target must be positive")
        if self.kind is CriterionKind.RUN_LENGTH_PROBABILITY:
            if self.t is None or self.t < 1 or not 0 < self.target < 1:
                raise InvalidInputError("run-length probability criterion needs t >= 1 and 0 < target < 1")
        if self.kind is CriterionKind.CONDITIONAL_PERCENTILE and not 0 < self.percentile_q < 1:
            raise InvalidInputError("percentile_q must lie in (0, 1)")

    def arl_equivalent(self) -> float:
        """ARL0 level used to seed the fast stages."""
        if self.kind is CriterionKind.RUN_LENGTH_PROBABILITY:
            return 1.0 / -math.expm1(math.log1p(-self.target) / self.t)
        return self.target


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _limits(m, n, ucl, sided):
    return ChartLimits(m, n, int(ucl), sided)


def _smallest_reaching(f, lo, hi, target):
    """Smallest integer U in [lo, hi] with f(U) >= target (hi if none)."""
    if f(hi) < target:
        return hi
    while lo < hi:
        mid = (lo + hi) // 2
        if f(mid) >= target:
            hi = mid
        else:
            lo = mid + 1
    return lo


class _Evaluator:
    def __init__(self, m, n, criterion, mc, sided, method, kw):
        self.m, self.n = m, n
        self.criterion = criterion
        pct = set(mc.percentiles) | {0.05}
        if criterion.kind is CriterionKind.CONDITIONAL_PERCENTILE:
            pct.add(criterion.percentile_q)
        self.mc = replace(mc, percentiles=tuple(sorted(pct)))
        self.sided = sided
        self.method = method
        self.kw = kw
        self.cache: dict[int, tuple[float, object]] = {}

    @property
    def sense(self):
        # run-length probabilities fall as U grows
        return -1.0 if self.criterion.kind is CriterionKind.RUN_LENGTH_PROBABILITY else 1.0

    def __call__(self, ucl) -> tuple[float, object]:
        if ucl in self.cache:
            return self.cache[ucl]
        lim = _limits(self.m, self.n, ucl, self.sided)
        c = self.criterion
        if c.kind is CriterionKind.RUN_LENGTH_PROBABILITY:
            res = run_length.run_length_cdf_at(c.t, lim, UNIFORM, self.method, self.mc, **self.kw)
            value = res.estimate
        else:
            res = run_length.arl_monte_carlo(UNIFORM, UNIFORM, lim, self.method, self.mc, **self.kw)
            value = res.arl_estimate if c.kind is CriterionKind.MEAN_ARL0 else res.percentiles[c.percentile_q]
        self.cache[ucl] = (value, res)
        return value, res


def find_limits(m: int, n: int, criterion: DesignCriterion = DesignCriterion(),
                mc: Optional[MonteCarloConfig] = None, sided=Sided.TWO_SIDED,
                method=TailMethod.LR, max_iter: int = 25, fr_max_m: int = 500,
                fa_engine: str = "edgeworth", on_step: Optional[Callable[[TraceStep], None]] = None,
                **kw) -> ChartLimits:
    """Integer control limits meeting ``criterion`` for reference size m, test size n."""
    if m < 2 or n < 1:
        raise InvalidInputError("need m >= 2 and n >= 1")
    mc = mc or MonteCarloConfig()
    sided = Sided(sided)
    method = TailMethod(method)
    mn = m * n
    lo_u, hi_u = mn // 2 + 1, mn - 1
    if lo_u > hi_u:
        raise InfeasibleDesignError(f"no admissible limit for m={m}, n={n}", float("nan"))
    trace: list[TraceStep] = []

    def record(step):
        trace.append(step)
        if on_step:
            on_step(step)

    seed_target = criterion.arl_equivalent()

    # stage 1: reciprocal false alarm rate
    def fa(u):
        return run_length.arl0_false_alarm(m, n, _limits(m, n, u, sided), fa_engine)

    u0 = _smallest_reaching(fa, lo_u, hi_u, seed_target)
    record(TraceStep("FA", u0, _limits(m, n, u0, sided).lcl, fa(u0)))
    slope_src = fa

    # stage 2: fixed reference sample
    if m <= fr_max_m:
        def fr(u):
            return run_length.arl0_fixed_reference(m, n, _limits(m, n, u, sided), method if method is not TailMethod.NORMAL else TailMethod.LR)

        first = fr(u0)
        record(TraceStep("FR", u0, _limits(m, n, u0, sided).lcl, first))
        u1 = _smallest_reaching(fr, lo_u, hi_u, seed_target)
        if u1 > lo_u and abs(fr(u1 - 1) - seed_target) < abs(fr(u1) - seed_target):
            u1 -= 1
        if u1 != u0:
            record(TraceStep("FR", u1, _limits(m, n, u1, sided).lcl, fr(u1)))
        u0 = u1
        slope_src = fr

    def local_slope(u):
        a, b = (u - 1, u) if u >= hi_u else (u, u + 1)
        a = max(a, lo_u)
        va, vb = slope_src(a), slope_src(b)
        s = (vb - va) / max(b - a, 1)
        if not math.isfinite(s) or s <= 0:
            s = max(va, 1.0) * 0.02
        if criterion.kind is not CriterionKind.MEAN_ARL0:
            # criterion roughly proportional to (percentile) or inversely
            # proportional to (probability) the ARL near the target
            s *= criterion.target / max(va, 1e-300)
        return s

    # stage 3: Monte Carlo evaluation of the criterion
    ev = _Evaluator(m, n, criterion, mc, sided, method, kw)
    sense = ev.sense
    target = sense * criterion.target
    band = criterion.tolerance * criterion.target
    slope = local_slope(u0)
    u = u0
    label = {CriterionKind.MEAN_ARL0: "ARL0",
             CriterionKind.CONDITIONAL_PERCENTILE: f"Q{criterion.percentile_q:g}",
             CriterionKind.RUN_LENGTH_PROBABILITY: f"P(N<={criterion.t})"}[criterion.kind]
    best = None
    converged = False
    for _ in range(max_iter):
        value, res = ev(u)
        summ = res if isinstance(res, RunLengthSummary) else None
        record(TraceStep(method.name, u, _limits(m, n, u, sided).lcl, value,
                         smc=res.smc, p5=summ.percentiles.get(0.05) if summ else None,
                         k=res.k_used, label=label))
        score = sense * value
        if best is None or abs(value - criterion.target) < abs(best[1] - criterion.target):
            best = (u, value, res)
        if abs(value - criterion.target) <= band:
            converged = True
            break
        below = {k: sense * v for k, (v, _) in ev.cache.items() if sense * v < target}
        above = {k: sense * v for k, (v, _) in ev.cache.items() if sense * v > target}
        if below and above and max(below) < min(above):
            ul, uh = max(below), min(above)
            if uh - ul <= 1:
                log.warning("target falls between adjacent integer limits %d and %d", ul, uh)
                break
            x = ul + (target - below[ul]) * (uh - ul) / (above[uh] - below[ul])
            nxt = min(max(_round_half_up(x), ul + 1), uh - 1)
        else:
            if len(ev.cache) >= 2:
                pts = sorted(ev.cache.items())
                (ua, (va, _)), (ub, (vb, _)) = pts[0], pts[-1]
                s = sense * (vb - va) / (ub - ua)
                if s > 0:
                    slope = s
            step = (target - score) / slope
            step = math.copysign(max(1, _round_half_up(abs(step))), target - score)
            nxt = int(min(max(u + step, lo_u), hi_u))
            if nxt == u:
                if score < target:
                    raise InfeasibleDesignError(
                        f"target {criterion.target} not reachable for m={m}, n={n}; "
                        f"largest attainable value {value:.6g} at ucl={u}", value)
                break
        if nxt in ev.cache:
            break
        u = nxt
    else:
        log.warning("limit search stopped after %d Monte Carlo iterations", max_iter)

    u, value, res = best
    summ = res if isinstance(res, RunLengthSummary) else None
    if criterion.kind is CriterionKind.MEAN_ARL0:
        attained = value
    else:
        attained = ev(u)[1].arl_estimate if summ is not None else None
    return ChartLimits(
        m, n, u, sided,
        target_arl0=criterion.target if criterion.kind is CriterionKind.MEAN_ARL0 else None,
        attained_arl0=attained,
        attained_percentile_5=summ.percentiles.get(0.05) if summ else None,
        converged=converged,
        trace=tuple(trace),
    )


def evaluate_limits(limits: ChartLimits, mc: Optional[MonteCarloConfig] = None,
                    method="lr", **kw) -> RunLengthSummary:
    """In-control ARL of ``limits`` by one of the methods ex, lr, no, fr, fa."""
    mc = mc or MonteCarloConfig()
    method = str(getattr(method, "value", method)).lower()
    if method in ("fr", "fa"):
        if method == "fr":
            value = run_length.arl0_fixed_reference(limits.m, limits.n, limits, kw.get("engine", TailMethod.LR))
        else:
            value = run_length.arl0_false_alarm(limits.m, limits.n, limits, kw.get("engine", "edgeworth"))
        return RunLengthSummary(value, 0.0, {}, 0.0, 0, method.upper())
    try:
        tm = TailMethod(method)
    except ValueError:
        raise InvalidInputError(f"unknown method {method!r}; expected ex, lr, no, fr or fa") from None
    return run_length.arl_monte_carlo(UNIFORM, UNIFORM, limits, tm, mc, **kw)
