"""Backend selection for the hot tail kernels.

The compiled extension is preferred; the numpy implementation is used when
the extension is missing or ``MWCHART_PURE_PYTHON`` is set to a non-empty
value before import.
"""

import os

from . import _kernels_py

if os.environ.get("MWCHART_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

exact_upper_tail = _impl.exact_upper_tail
lr_upper_tail = _impl.lr_upper_tail
