"""Numerical tolerances and tuning constants, kept in one place.

Every knob here is reachable from a scenario file through the ``numerics``
block (see :mod:`neutral_inclusion.scenario`).
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    # geometry
    geometry_residual: float = 1e-10
    boundary_band: float = 1e-10
    bisection_max_iter: int = 200
    # elliptic integrals
    carlson_rtol: float = 1e-16
    carlson_max_iter: int = 60
    quad_rtol: float = 1e-11
    quad_max_intervals: int = 2000
    # overdetermined fitting
    mfs_outer_inflation: float = 1.6
    mfs_inner_deflation: float = 0.3
    mfs_outer_fraction: float = 0.25
    mfs_tsvd_cut: float = 1e-12
    mfs_validation_stride: int = 5
    # BEM
    bem_near_factor: float = 3.0
    bem_rtol: float = 1e-9
    bem_max_basis: int = 160
    bem_max_aspect: float = 20.0
    bem_probe_count: int = 242
    bem_probe_scale: float = 4.0

    def updated(self, **overrides) -> "Tolerances":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"unknown tolerance keys: {sorted(unknown)}")
        return replace(self, **overrides)


DEFAULT = Tolerances()


def thread_count() -> int:
    """Threads used by the compiled kernels (``NEUTRAL_INCLUSION_THREADS``)."""
    value = os.environ.get("NEUTRAL_INCLUSION_THREADS", "")
    try:
        n = int(value)
    except ValueError:
        return 1
    return max(n, 1)
