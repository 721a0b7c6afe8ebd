"""Command-line interface: ``mwchart <verb> [options]``.

Verbs: design, evaluate, arl, compare, chart, rlprob.  Every verb prints a
human-readable table; ``--csv`` prints the same numbers as delimited text and
``--out`` writes them to a file (for ``chart``, ``--out`` is the SVG path).

Exit codes: 0 success, 2 invalid input, 3 numeric non-convergence,
4 exact method over its capacity budget.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .chart_design import ChartLimits, CriterionKind, DesignCriterion, Sided, evaluate_limits, find_limits
from .distributions import FAMILIES, UNIFORM, DistributionSpec
from .errors import ChartError, InvalidInputError
from .io import format_table, ingest_csv, records_as_rows, render_chart, run_chart, write_delimited
from .mw_stat import TiePolicy
from .run_length import MonteCarloConfig, arl_monte_carlo, run_length_cdf_at
from .shewhart import compare_charts, in_control_percentile_table

log = logging.getLogger("mwchart")


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=MonteCarloConfig.seed, help="Monte Carlo seed")
    g.add_argument("--method", default=None, choices=["ex", "lr", "no", "fr", "fa", "auto"],
                   help="ARL method (default depends on the verb)")
    g.add_argument("--arl0", type=float, default=500.0, help="target in-control ARL")
    g.add_argument("--tol", type=float, default=0.02, help="relative tolerance of the limit search")
    g.add_argument("--d", type=float, default=0.015, help="Monte Carlo standard error target, relative")
    g.add_argument("--k", type=int, default=None, help="fixed number of reference samples")
    g.add_argument("--k-max", type=int, default=1_000_000, help="cap on adaptive reference samples")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--sided", default="two_sided", choices=[s.value for s in Sided])
    g.add_argument("--tie", default="midrank", choices=[t.value for t in TiePolicy])
    g.add_argument("--out", default=None, help="output file")
    g.add_argument("--csv", action="store_true", help="print delimited output instead of a table")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _size(p, ucl=False):
    p.add_argument("--m", type=int, required=True, help="reference sample size")
    p.add_argument("--n", type=int, required=True, help="test sample size")
    if ucl:
        p.add_argument("--ucl", type=int, required=True, help="upper control limit (integer)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mwchart", description="Distribution-free Mann-Whitney control charts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)
    common = _common()

    p = sub.add_parser("design", parents=[common], help="find control limits")
    _size(p)
    p.add_argument("--criterion", default="mean", choices=["mean", "percentile", "rlprob"])
    p.add_argument("--q", type=float, default=0.05, help="percentile for --criterion percentile")
    p.add_argument("--target", type=float, default=None,
                   help="criterion target (percentile value or probability); defaults to --arl0")
    p.add_argument("--t", type=int, default=None, help="horizon for --criterion rlprob")

    p = sub.add_parser("evaluate", parents=[common], help="in-control ARL of given limits")
    _size(p, ucl=True)

    p = sub.add_parser("arl", parents=[common], help="out-of-control ARL and percentiles")
    _size(p, ucl=True)
    p.add_argument("--dist", default="normal", choices=FAMILIES)
    p.add_argument("--delta", type=float, nargs="+", default=[0.0, 0.5, 1.0])

    p = sub.add_parser("compare", parents=[common], help="MW versus Shewhart X-bar")
    p.add_argument("--m", type=int, nargs="+", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dist", default="normal", choices=FAMILIES)
    p.add_argument("--delta", type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0])
    p.add_argument("--in-control", action="store_true", help="percentile table of the in-control ARL")

    p = sub.add_parser("chart", parents=[common], help="plot a data set against MW limits")
    p.add_argument("csvfile")
    p.add_argument("--ucl", type=int, default=None, help="use this limit instead of designing one")
    p.add_argument("--report", default=None, help="write the chart records as CSV")

    p = sub.add_parser("rlprob", parents=[common], help="in-control P(N <= t)")
    _size(p, ucl=True)
    p.add_argument("--t", type=int, required=True)
    return parser


def _mc(a) -> MonteCarloConfig:
    if a.k is not None:
        return MonteCarloConfig.fixed(a.k, seed=a.seed, workers=a.workers)
    return MonteCarloConfig(seed=a.seed, error_target=a.d, k_max=a.k_max, workers=a.workers)


def _emit(a, rows, columns=None):
    if not rows:
        return
    if a.csv:
        write_delimited(rows, sys.stdout)
    else:
        cols = columns or list(rows[0])
        cells = [[_cell(r[c]) for c in cols] for r in rows]
        widths = [max(len(c), *(len(x[i]) for x in cells)) for i, c in enumerate(cols)]
        print("  ".join(c.rjust(w) for c, w in zip(cols, widths)))
        for x in cells:
            print("  ".join(v.rjust(w) for v, w in zip(x, widths)))
    if a.out:
        write_delimited(rows, a.out)


def _cell(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return "-" if v is None else str(v)


def raise_invalid(msg):
    raise InvalidInputError(msg)


def _limits(a, ucl):
    return ChartLimits(a.m, a.n, ucl, a.sided)


def cmd_design(a):
    kind = {"mean": CriterionKind.MEAN_ARL0, "percentile": CriterionKind.CONDITIONAL_PERCENTILE,
            "rlprob": CriterionKind.RUN_LENGTH_PROBABILITY}[a.criterion]
    target = a.target if a.target is not None else a.arl0
    crit = DesignCriterion(kind, target, a.q, a.t, a.tol)
    method = a.method or "lr"
    if method in ("fr", "fa", "auto"):
        raise_invalid("design evaluates limits with ex, lr or no")
    counter = iter(range(1, 10_000))
    stage_names = {"FA": "FA: 1/(false alarm rate) approximation", "FR": "FR: fixed reference sample approximation"}
    seen = set()

    def show(step):
        name = stage_names.get(step.stage, f"{step.stage} approximation")
        if name not in seen and not a.csv:
            print(name)
            seen.add(name)
        if not a.csv:
            print(f"{next(counter)}. {step.format()}")

    lim = find_limits(a.m, a.n, crit, _mc(a), a.sided, method, on_step=show)
    rows = [{"m": lim.m, "n": lim.n, "ucl": lim.ucl, "lcl": lim.lcl, "sided": lim.sided.value,
             "attained_arl0": lim.attained_arl0, "percentile_5": lim.attained_percentile_5,
             "converged": int(lim.converged)}]
    if not a.csv:
        print()
    _emit(a, rows)
    return 0


def cmd_evaluate(a):
    lim = _limits(a, a.ucl)
    method = a.method or "lr"
    if method == "auto":
        raise_invalid("evaluate needs an explicit method")
    s = evaluate_limits(lim, _mc(a), method)
    row = {"m": a.m, "n": a.n, "ucl": lim.ucl, "lcl": lim.lcl, "method": method.upper(),
           "arl0": s.arl_estimate, "smc": s.smc, "k": s.k_used}
    for q, v in s.percentiles.items():
        row[f"q{q:g}"] = v
    _emit(a, [row])
    return 0


def cmd_arl(a):
    lim = _limits(a, a.ucl)
    method = a.method or "lr"
    if method in ("fr", "fa", "auto"):
        raise_invalid("arl supports ex, lr or no")
    f = DistributionSpec(a.dist)
    mc = _mc(a)
    rows = []
    for d in a.delta:
        s = arl_monte_carlo(f, f.shifted(d), lim, method, mc)
        rows.append({"delta": d, "arl": s.arl_estimate, "smc": s.smc, "q05": s.percentiles.get(0.05),
                     "q95": s.percentiles.get(0.95), "sd": s.std_dev, "k": s.k_used})
    _emit(a, rows)
    return 0


def cmd_compare(a):
    mc = _mc(a) if a.k is not None else MonteCarloConfig.fixed(1000, seed=a.seed, workers=a.workers)
    if a.in_control:
        rows = [r.__dict__ for r in in_control_percentile_table(a.m, a.n, a.arl0, mc, a.method or "lr",
                                                                  k_ref=mc.k_max)]
        _emit(a, rows)
        return 0
    rows = []
    for m in a.m:
        rep = compare_charts(m, a.n, a.arl0, DistributionSpec(a.dist), a.delta, a.sided, mc, a.method or "auto")
        for r in rep.rows:
            rows.append({"m": m, "delta": r.delta, "mw_arl": r.mw_arl, "mw_q95": r.mw_q95,
                         "shewhart_arl": r.shewhart_arl, "shewhart_q95": r.shewhart_q95,
                         "mw_ucl": rep.mw_limits.ucl, "shewhart_k": rep.shewhart_k})
    _emit(a, rows)
    return 0


def cmd_chart(a):
    ref, tests = ingest_csv(a.csvfile)
    if not tests:
        raise_invalid(f"{a.csvfile}: no test samples to chart")
    n = tests[0].n
    if a.ucl is not None:
        lim = ChartLimits(ref.m, n, a.ucl, a.sided)
    else:
        lim = find_limits(ref.m, n, DesignCriterion(target=a.arl0, tolerance=a.tol), _mc(a), a.sided,
                          a.method or "lr")
    records = run_chart(ref, tests, lim, a.tie)
    if a.csv:
        write_delimited(records_as_rows(records), sys.stdout)
    else:
        print(f"m={lim.m} n={lim.n} ucl={lim.ucl} lcl={lim.lcl if lim.lcl is not None else '-'}")
        print(format_table(records), end="")
    if a.report:
        write_delimited(records_as_rows(records), a.report)
    if a.out:
        render_chart(records, lim, a.out, title="Mann-Whitney chart")
    return 0


def cmd_rlprob(a):
    lim = _limits(a, a.ucl)
    method = a.method or "lr"
    if method in ("fr", "fa", "auto"):
        raise_invalid("rlprob supports ex, lr or no")
    s = run_length_cdf_at(a.t, lim, UNIFORM, method, _mc(a))
    _emit(a, [{"m": a.m, "n": a.n, "ucl": lim.ucl, "t": a.t, "prob": s.estimate, "smc": s.smc, "k": s.k_used}])
    return 0


COMMANDS = {"design": cmd_design, "evaluate": cmd_evaluate, "arl": cmd_arl, "compare": cmd_compare,
            "chart": cmd_chart, "rlprob": cmd_rlprob}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.verb](args)
    except ChartError as exc:
        print(f"mwchart: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
