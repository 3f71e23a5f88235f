"""Backend selection for the integration kernels.

The compiled extension is used when importable; setting ``DEGBILL_PURE=1``
forces the numpy fallback.  Both expose identical ``Model`` classes.
"""

import os

from . import _pykernels

if os.environ.get("DEGBILL_PURE", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

Model = _impl.Model
BACKEND = _impl.BACKEND
PHYS, REG = _pykernels.PHYS, _pykernels.REG
EV_NONE, EV_DIST, EV_XI = _pykernels.EV_NONE, _pykernels.EV_DIST, _pykernels.EV_XI
ST_DONE, ST_EVENT, ST_GUARD = _pykernels.ST_DONE, _pykernels.ST_EVENT, _pykernels.ST_GUARD
ST_UNDERFLOW, ST_MAXSTEPS = _pykernels.ST_UNDERFLOW, _pykernels.ST_MAXSTEPS
ST_NONFINITE = _pykernels.ST_NONFINITE
METHOD_DOP853, METHOD_RK45 = _pykernels.METHOD_DOP853, _pykernels.METHOD_RK45


def backends():
    """Return the available ``{name: module}`` kernel implementations."""
    out = {"python": _pykernels}
    try:
        from . import _kernels
        out["compiled"] = _kernels
    except ImportError:
        pass
    return out
