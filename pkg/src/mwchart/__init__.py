"""Distribution-free Mann-Whitney control charts for phase II monitoring."""

__version__ = "0.1.0"

from .chart_design import (  # noqa: E402
    ChartLimits,
    CriterionKind,
    DesignCriterion,
    InfeasibleDesignError,
    Sided,
    evaluate_limits,
    find_limits,
)
from .distributions import DistributionSpec  # noqa: E402
from .errors import CapacityError, ChartError, InvalidInputError, NumericError  # noqa: E402
from .kernels import BACKEND  # noqa: E402
from .mw_stat import (  # noqa: E402
    CellProbabilities,
    ReferenceSample,
    TestSample,
    TiePolicy,
    cell_probabilities,
    mann_whitney,
)
from .run_length import (  # noqa: E402
    MonteCarloConfig,
    RunLengthSummary,
    arl0_false_alarm,
    arl0_fixed_reference,
    arl_monte_carlo,
    conditional_arl,
    run_length_cdf_at,
)
from .shewhart import (  # noqa: E402
    ShewhartLimits,
    compare_charts,
    in_control_percentile_table,
    shewhart_conditional_arl,
    shewhart_constant,
)
from .tail_prob import TailMethod, signal_probability  # noqa: E402
