"""Backend selection for the hot numeric kernels.

Numba-compiled kernels are used when numba imports cleanly, unless the
environment variable ``POROUS_HARNACK_PURE_NUMPY`` is set to a truthy value
(``1``, ``true``, ``yes``), in which case the pure-numpy twins are used.
The choice is made once, at import time.
"""

import os

from . import _kernels_numpy

_FLAG = "POROUS_HARNACK_PURE_NUMPY"


def _want_numba():
    if os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


if _want_numba():
    from . import _kernels_numba as _impl

    BACKEND = "numba"
else:
    _impl = _kernels_numpy
    BACKEND = "numpy"

philox4x64 = _impl.philox4x64
gaussian_block = _impl.gaussian_block
power_law = _impl.power_law
tamed_update = _impl.tamed_update
lp_power = _impl.lp_power


def implementation(name):
    """Return the kernel module for ``name`` ('numpy' or 'numba')."""
    if name == "numpy":
        return _kernels_numpy
    if name == "numba":
        from . import _kernels_numba

        return _kernels_numba
    raise ValueError(f"unknown kernel backend {name!r}")
