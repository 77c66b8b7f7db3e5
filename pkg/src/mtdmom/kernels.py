"""Backend selection for the autocorrelation kernels.

The compiled extension (``mtdmom._ackern``, Cython) is preferred; the
pure-NumPy module (``mtdmom._ackern_py``) is the fallback.  Selection happens
once at import and can be forced with ``MTDMOM_BACKEND=compiled|pure``.
Both backends implement the same three entry points with identical
zero-padding semantics; `benchmarks/bench_kernels.py` compares their speed.
"""

import os

import numpy as np

from . import _ackern_py

try:
    from . import _ackern
except ImportError:
    _ackern = None


def available_backends():
    names = ["pure"]
    if _ackern is not None:
        names.insert(0, "compiled")
    return names


def get_impl(name):
    if name == "pure":
        return _ackern_py
    if name == "compiled":
        if _ackern is None:
            raise RuntimeError("compiled kernel backend is not built")
        return _ackern
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    forced = os.environ.get("MTDMOM_BACKEND", "").strip().lower()
    if forced in ("", "auto"):
        return "compiled" if _ackern is not None else "pure"
    if forced in ("compiled", "pure"):
        return forced
    raise ValueError(f"MTDMOM_BACKEND must be 'compiled' or 'pure', got {forced!r}")


BACKEND = _select()
_impl = get_impl(BACKEND)


def set_backend(name):
    """Switch the process-wide backend (used by tests and benchmarks)."""
    global BACKEND, _impl
    _impl = get_impl(name)
    BACKEND = name


def frame_sums(tile, core_h, core_w, L, impl=None):
    """Raw zero-padded autocorrelation sums up to third order over a frame.

    ``tile`` may extend past the (core_h, core_w) summation region by a halo
    that shifted reads fall into; reads past ``tile`` itself contribute zero.
    Returns (s1, s2[L,L], s3[L,L,L,L]) of unnormalized sums.
    """
    tile = np.ascontiguousarray(tile, dtype=np.float64)
    if tile.ndim != 2:
        raise ValueError("frame must be 2-D")
    if L < 1:
        raise ValueError("shift range L must be >= 1")
    if core_h > tile.shape[0] or core_w > tile.shape[1]:
        raise ValueError("core region exceeds the frame")
    return (impl or _impl).frame_sums(tile, core_h, core_w, L)


def ac2_adjoint(x, w2, impl=None):
    """Adjoint of the second-order sums: sum_l w2[l]*(x[j+l] + x[j-l])."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w2 = np.ascontiguousarray(w2, dtype=np.float64)
    if w2.shape[0] > x.shape[0] or w2.shape[1] > x.shape[1]:
        raise ValueError("shift range exceeds the image")
    return (impl or _impl).ac2_adjoint(x, w2)


def ac3_adjoint(x, w3, impl=None):
    """Adjoint of the third-order sums under weights w3 (see backend docs)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w3 = np.ascontiguousarray(w3, dtype=np.float64)
    if w3.shape[0] > x.shape[0] or w3.shape[2] > x.shape[1]:
        raise ValueError("shift range exceeds the image")
    return (impl or _impl).ac3_adjoint(x, w3)
