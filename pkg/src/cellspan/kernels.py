"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``CELLSPAN_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
kinetics = _pykernels.kinetics
tridiag_solve = _pykernels.tridiag_solve

if os.environ.get("CELLSPAN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        kinetics = _ckernels.kinetics
        tridiag_solve = _ckernels.tridiag_solve

EXP_LIMIT = _pykernels.EXP_LIMIT

__all__ = ["BACKEND", "EXP_LIMIT", "kinetics", "tridiag_solve"]
