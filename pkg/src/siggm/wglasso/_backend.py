"""Kernel selection: compiled extension when available, python otherwise.

Set ``SIGGM_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and by tests that compare the two kernels).
"""

import os

if os.environ.get("SIGGM_PURE_PYTHON", "") not in ("", "0"):
    from ._direction_py import newton_direction

    BACKEND = "python"
else:
    try:
        from ._direction_fast import newton_direction

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._direction_py import newton_direction

        BACKEND = "python"

__all__ = ["newton_direction", "BACKEND"]
