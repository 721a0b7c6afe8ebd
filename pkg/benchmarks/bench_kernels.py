"""Compare the compiled tail kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat R]

Each case evaluates the upper tail for a block of simulated reference
samples; both backends get identical input and their outputs are checked
for agreement before timing.
"""

import argparse
import sys
import timeit

import numpy as np

from mwchart import _kernels_py
from mwchart.distributions import UNIFORM
from mwchart.run_length import reference_block
from mwchart.mw_stat import cell_probability_rows

try:
    from mwchart import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

CASES = [
    # (kernel, m, n, u, rows)
    ("exact", 50, 5, 217, 100),
    ("exact", 100, 10, 776, 100),
    ("exact", 500, 5, 2172, 20),
    ("lr", 100, 5, 435, 100),
    ("lr", 500, 10, 3872, 100),
    ("lr", 2000, 25, 33855, 100),
]


def _inputs(m, rows):
    x = reference_block(UNIFORM, m, 1, 0)[:rows]
    return np.ascontiguousarray(cell_probability_rows(x, UNIFORM))


def _call(mod, kernel, A, n, u):
    if kernel == "exact":
        return mod.exact_upper_tail(A, n, u, True)
    return mod.lr_upper_tail(A, n, u, 0)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels_c is None:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'kernel':>6} {'m':>5} {'n':>3} {'rows':>5} {'numpy s':>10} {'cython s':>10} {'speedup':>8}")
    for kernel, m, n, u, rows in CASES:
        A = _inputs(m, rows)
        t_py = min(timeit.repeat(lambda: _call(_kernels_py, kernel, A, n, u), number=1, repeat=args.repeat))
        if _kernels_c is not None:
            a = _call(_kernels_py, kernel, A, n, u)
            b = _call(_kernels_c, kernel, A, n, u)
            if not np.allclose(a, b, rtol=1e-9, atol=1e-15):
                print(f"backends disagree for {kernel} m={m} n={n}", file=sys.stderr)
                return 1
            t_c = min(timeit.repeat(lambda: _call(_kernels_c, kernel, A, n, u), number=1, repeat=args.repeat))
            print(f"{kernel:>6} {m:>5} {n:>3} {rows:>5} {t_py:>10.4f} {t_c:>10.4f} {t_py / t_c:>8.1f}")
        else:
            print(f"{kernel:>6} {m:>5} {n:>3} {rows:>5} {t_py:>10.4f} {'-':>10} {'-':>8}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
