import math

import numpy as np
import pytest
from scipy import stats

from mwchart import run_length as rl
from mwchart.chart_design import ChartLimits, Sided
from mwchart.distributions import DistributionSpec
from mwchart.errors import InvalidInputError
from mwchart.shewhart import (NORMAL, ShewhartLimits, compare_charts, in_control_percentile_table,
                              shewhart_arl0, shewhart_conditional_arl, shewhart_constant, signal_probability)


def test_known_parameters_closed_form():
    k = stats.norm.isf(0.001)
    assert shewhart_conditional_arl(0.0, 1.0, k, NORMAL, 5) == pytest.approx(500.0, rel=1e-9)
    one = shewhart_conditional_arl(0.0, 1.0, stats.norm.isf(0.002), NORMAL, 5, sided=Sided.UPPER)
    assert one == pytest.approx(500.0, rel=1e-9)


def test_mc_engine_matches_closed_form():
    closed = float(signal_probability(0.0, 1.0, 3.0, NORMAL, 5))
    p = 1 / shewhart_conditional_arl(0.0, 1.0, 3.0, NORMAL, 5, engine="mc", inner=400_000)
    assert abs(p - closed) < 4 * math.sqrt(closed * (1 - closed) / 400_000)


@pytest.mark.parametrize("family", ["laplace", "uniform01", "exponential"])
def test_closed_form_mean_tails_against_mc(family):
    f = DistributionSpec(family)
    g = f.shifted(0.3)
    mu, sd = f.mean, f.sd
    closed = float(signal_probability(mu, sd, 2.0, g, 4))
    mc = 1 / shewhart_conditional_arl(mu, sd, 2.0, g, 4, engine="mc", inner=200_000, seed=3)
    assert 0 < closed < 0.2
    assert abs(mc - closed) < 4 * math.sqrt(closed * (1 - closed) / 200_000)


def test_large_shift_signals_immediately():
    assert shewhart_conditional_arl(0.0, 1.0, 3.0, NORMAL.shifted(10.0), 5) == pytest.approx(1.0)


def test_constant_approaches_known_parameter_value():
    k = shewhart_constant(2000, 5, 500)
    assert k == pytest.approx(stats.norm.isf(0.001), abs=2e-3)
    assert shewhart_arl0(2000, 5, k) == pytest.approx(500, rel=1e-8)
    # estimation error inflates the ARL, so small m needs a smaller constant
    assert shewhart_constant(50, 5, 500) < k


def test_quadrature_against_monte_carlo():
    k = 3.0
    q = shewhart_arl0(100, 5, k)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((200_000, 100))
    p = signal_probability(x.mean(1), x.std(1, ddof=1), k, NORMAL, 5)
    v = 1 / p
    assert abs(v.mean() - q) < 4 * v.std() / math.sqrt(v.size)


def test_non_normal_constant_hits_target():
    f = DistributionSpec("laplace")
    mc = rl.MonteCarloConfig.fixed(2000, seed=4)
    k = shewhart_constant(100, 5, 370, mc, f)
    # calibrated on the same 2000 reference samples, so the match is exact
    x = rl.reference_samples(f, 100, 2000, seed=4)
    p = signal_probability(x.mean(1), x.std(1, ddof=1), k, f, 5)
    assert np.mean(1 / p) == pytest.approx(370, rel=1e-6)


def test_limits_object():
    lim = ShewhartLimits.from_reference([1.0, 2.0, 3.0], 3.0, 4)
    assert lim.ucl == pytest.approx(2 + 1.5) and lim.lcl == pytest.approx(0.5)
    assert lim.signals(3.6) and not lim.signals(3.4)
    assert ShewhartLimits(3.0, 0.0, 1.0, 4, sided="upper").lcl is None
    with pytest.raises(InvalidInputError):
        ShewhartLimits(3.0, 0.0, 0.0, 4)
    with pytest.raises(InvalidInputError):
        shewhart_conditional_arl(0.0, -1.0, 3.0, NORMAL, 5)
    with pytest.raises(InvalidInputError):
        shewhart_conditional_arl(0.0, 1.0, 3.0, NORMAL, 5, engine="bogus")


def test_compare_charts_deterministic_and_sane():
    mc = rl.MonteCarloConfig.fixed(200, seed=7)
    lim = ChartLimits(100, 5, 435)
    a = compare_charts(100, 5, 500, NORMAL, (1.0, 0.0, 0.5), mc=mc, mw_limits=lim, shewhart_k=2.97)
    b = compare_charts(100, 5, 500, NORMAL, (0.0, 0.5, 1.0), mc=mc, mw_limits=lim, shewhart_k=2.97)
    assert a == b
    assert list(a.column("delta")) == [0.0, 0.5, 1.0]
    mw, sh = a.column("mw_arl"), a.column("shewhart_arl")
    assert np.all(np.diff(mw) < 0) and np.all(np.diff(sh) < 0)
    assert a.rows[0].mw_q95 >= a.rows[0].mw_arl


def test_percentile_table_row():
    mc = rl.MonteCarloConfig.fixed(200, seed=2)
    (row,) = in_control_percentile_table([100], 5, 500, mc, k_ref=200, ucl={100: 435})
    assert row.mw_ucl == 435 and row.mw_p5 < row.mw_arl < row.mw_p95
    assert row.sh_p5 < row.sh_p95 and row.k_used == 200
