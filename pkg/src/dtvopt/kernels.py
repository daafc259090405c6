"""Per-step edge kernels, compiled when available.

The compiled ``_core`` extension is used unless it failed to build or the
environment variable ``DTVOPT_PURE_PYTHON=1`` is set. ``BACKEND`` names the
implementation actually in use.
"""

import os

from . import _core_py

if os.environ.get("DTVOPT_PURE_PYTHON") == "1":
    _impl = _core_py
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _core_py

BACKEND = "compiled" if _impl is not _core_py else "python"

sign_coupling = _impl.sign_coupling
layer_coupling = _impl.layer_coupling
potential_coupling = _impl.potential_coupling
proximity_edges = _impl.proximity_edges
pair_distance_range = _impl.pair_distance_range
eval_signals = _impl.eval_signals
pd_inverse = _impl.pd_inverse
CollisionError = _core_py.CollisionError
