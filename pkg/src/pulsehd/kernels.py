"""Backend selection for the hot loops.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy/scipy fallback. Set ``PULSEHD_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("PULSEHD_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("fallback forced by PULSEHD_PURE_PYTHON")
    from . import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"

_BACKENDS = {"python": _fallback}
if BACKEND == "cython":
    _BACKENDS["cython"] = _impl


def available_backends():
    return sorted(_BACKENDS)


def _get(backend):
    if backend is None:
        return _impl
    try:
        return _BACKENDS[backend]
    except KeyError:
        raise ValueError(f"backend {backend!r} not available; have {available_backends()}") from None


def sos_filter(sos, x, zi=None, lo=-np.inf, hi=np.inf, backend=None):
    """Run ``x`` through a biquad cascade and clip the output.

    Returns ``(y, zf, n_clipped)``. ``zi`` is not modified.
    """
    sos = np.ascontiguousarray(sos, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if zi is None:
        state = np.zeros((sos.shape[0], 2))
    else:
        state = np.array(zi, dtype=np.float64, order="C", copy=True)
    y, n_clipped = _get(backend).sos_filter(sos, x, state, float(lo), float(hi))
    return y, state, n_clipped


def slot_sums(x, start, period, width, n_slots, backend=None):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if n_slots <= 0:
        return np.zeros(0)
    if start < 0 or start + (n_slots - 1) * period + width > x.shape[0]:
        raise IndexError("slot windows extend past the end of the trace")
    return _get(backend).slot_sums(x, int(start), int(period), int(width), int(n_slots))
