"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly, unless the environment
variable ``WISLAM_DISABLE_NUMBA`` is set to a non-empty value other than
``0``. Both paths expose the same functions::

    steering_objective(pos, wavenumber, thetas, u)
    grid2d_power(H, pos, wavenumber, freqs, thetas, delays)
    autocorr(Hs)
    odom_residuals(ti, qi, tj, qj, z)
    bearing_residuals(t, q, ap_xy, theta)
    power_iteration(A, max_iter, rq_tol, res_tol)

``get_backend(name)`` returns either implementation explicitly, which the
cross-check tests and the benchmark use.
"""

import os
from types import ModuleType

from . import _numpy

__all__ = [
    "BACKEND",
    "get_backend",
    "steering_objective",
    "grid2d_power",
    "autocorr",
    "odom_residuals",
    "bearing_residuals",
    "power_iteration",
]


def _numba_disabled() -> bool:
    flag = os.environ.get("WISLAM_DISABLE_NUMBA", "")
    return flag not in ("", "0")


def get_backend(name: str) -> ModuleType:
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba

        return _numba
    raise ValueError(f"unknown kernel backend {name!r}")


if _numba_disabled():
    _impl = _numpy
else:
    try:
        _impl = get_backend("numba")
    except ImportError:
        _impl = _numpy

BACKEND = "numba" if _impl is not _numpy else "numpy"

steering_objective = _impl.steering_objective
grid2d_power = _impl.grid2d_power
autocorr = _impl.autocorr
odom_residuals = _impl.odom_residuals
bearing_residuals = _impl.bearing_residuals
power_iteration = _impl.power_iteration
