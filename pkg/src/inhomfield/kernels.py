"""Select the compiled kernels when available, else the numpy fallback."""

import os

BACKEND = "python"
if os.environ.get("INHOMFIELD_PURE_PYTHON", "") not in ("1", "true"):
    try:
        from ._kernels import (add_torus_box_sum, max_subset_sums,  # noqa: F401
                               pair_in_range, tube_exit)
        BACKEND = "cython"
    except ImportError:
        pass
if BACKEND == "python":
    from ._kernels_py import (add_torus_box_sum, max_subset_sums,  # noqa: F401
                              pair_in_range, tube_exit)
