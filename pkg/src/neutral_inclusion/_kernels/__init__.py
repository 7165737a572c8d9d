"""Hot-loop kernels with a compiled backend and a numpy fallback.

The Cython extension ``_ckernels`` is used when it imports; otherwise (or
when ``NEUTRAL_INCLUSION_PURE=1``) the numpy versions in ``_pykernels`` are
bound.  Both expose identical signatures and agree to rounding.
"""
from __future__ import annotations

import os

import numpy as np

from ..config import thread_count
from . import _pykernels

try:
    if os.environ.get("NEUTRAL_INCLUSION_PURE", "") not in ("", "0"):
        raise ImportError("pure-Python kernels requested")
    from . import _ckernels as _backend

    BACKEND = "compiled"
except ImportError:
    _backend = _pykernels
    BACKEND = "python"

__all__ = ["BACKEND", "winding_numbers", "adjoint_double_layer", "single_layer", "double_layer", "backend_module"]


def backend_module(name: str | None = None):
    """Return the kernel module for ``name`` ('compiled', 'python') or the active one."""
    if name is None:
        return _backend
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def _c(a):
    return np.ascontiguousarray(a, dtype=float)


def winding_numbers(points, tri) -> np.ndarray:
    """Generalised winding number of a triangle soup (``tri`` is (m, 3, 3)) at each point."""
    return _backend.winding_numbers(_c(points).reshape(-1, 3), _c(tri).reshape(-1, 3, 3), thread_count())


def adjoint_double_layer(targets, normals, sources, weights) -> np.ndarray:
    """sum_j w_j n_i.(x_i - y_j) / (4 pi |x_i - y_j|^3), coincident pairs skipped."""
    return _backend.adjoint_double_layer(_c(targets), _c(normals), _c(sources), _c(weights), thread_count())


def single_layer(targets, sources, weights) -> np.ndarray:
    """sum_j -w_j / (4 pi |x_i - y_j|), coincident pairs skipped."""
    return _backend.single_layer(_c(targets), _c(sources), _c(weights), thread_count())


def double_layer(targets, sources, normals, weights) -> np.ndarray:
    """sum_j w_j n_j.(y_j - x_i) / (4 pi |x_i - y_j|^3), coincident pairs skipped."""
    return _backend.double_layer(_c(targets), _c(sources), _c(normals), _c(weights), thread_count())
