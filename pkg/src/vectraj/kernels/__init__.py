"""Hot numeric kernels with two interchangeable lanes.

The numba lane (default) JIT-compiles the inner loops; the numpy lane is a
pure-numpy fallback. Selection happens once at import time:

  * ``VECTRAJ_NUMBA=0`` in the environment forces the numpy lane;
  * a missing/broken numba install silently falls back to numpy.

Both lanes are bit-identical (same arithmetic, same tie-breaks) — see
tests/test_kernels.py and benchmarks/bench_kernels.py.
"""

import os

from . import _numpy as _np_lane

_flag = os.environ.get("VECTRAJ_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "off", "no")

if _want_numba:
    try:
        from . import _numba as _active
        BACKEND = "numba"
    except ImportError:
        _active = _np_lane
        BACKEND = "numpy"
else:
    _active = _np_lane
    BACKEND = "numpy"

segment_max = _active.segment_max
point_in_polygon = _active.point_in_polygon
greedy_nms = _active.greedy_nms
polygon_self_intersects = _active.polygon_self_intersects


def backend_name():
    """Name of the active lane: 'numba' or 'numpy'."""
    return BACKEND
