"""Backend selection for the hot loops.

The compiled extension ``_ckernels`` is used when it imports; setting
``DEPCAG_LAB_PURE_PYTHON=1`` forces the numpy reference implementation.
"""
import os

import numpy as np

from . import _pykernels

_ckernels = None
if os.environ.get("DEPCAG_LAB_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        _ckernels = None

BACKEND = "cython" if _ckernels is not None else "python"
_impl = _ckernels if _ckernels is not None else _pykernels


def _c(a):
    return np.ascontiguousarray(a, dtype=complex)


def march_affine(ts, A_s, c_s, x0, backend=None):
    impl = _pick(backend)
    return impl.march_affine(np.ascontiguousarray(ts, dtype=float), _c(A_s), _c(c_s), _c(x0))


def panel_moments(Xr, w, v, backend=None):
    impl = _pick(backend)
    return impl.panel_moments(_c(Xr), np.ascontiguousarray(w, dtype=float), _c(v))


def green_assemble(muP, muQ, H, Hinv, Zf, Zb, Xb, exact=False, backend=None):
    impl = _pick(backend)
    return impl.green_assemble(_c(muP), _c(muQ), _c(H), _c(Hinv), _c(Zf), _c(Zb),
                               _c(Xb), bool(exact))


def _pick(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not available")
        return _ckernels
    raise ValueError(f"unknown backend {backend!r}")
