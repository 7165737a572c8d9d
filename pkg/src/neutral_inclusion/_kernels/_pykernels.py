"""Pure numpy implementations of the dense kernel sums.

Used when the compiled extension is missing or ``NEUTRAL_INCLUSION_PURE=1``.
Work is chunked over targets to bound memory at ``chunk * n_sources`` doubles.
"""
from __future__ import annotations

import numpy as np

FOUR_PI = 4.0 * np.pi
_CHUNK_ELEMS = 4_000_000


def _chunks(n_targets: int, n_sources: int):
    step = max(1, _CHUNK_ELEMS // max(n_sources, 1))
    for start in range(0, n_targets, step):
        yield slice(start, min(start + step, n_targets))


def winding_numbers(points, tri, num_threads: int = 1) -> np.ndarray:
    points = np.ascontiguousarray(points, dtype=float)
    tri = np.ascontiguousarray(tri, dtype=float)
    out = np.empty(len(points))
    for sl in _chunks(len(points), len(tri)):
        a = tri[None, :, 0, :] - points[sl, None, :]
        b = tri[None, :, 1, :] - points[sl, None, :]
        c = tri[None, :, 2, :] - points[sl, None, :]
        la = np.linalg.norm(a, axis=-1)
        lb = np.linalg.norm(b, axis=-1)
        lc = np.linalg.norm(c, axis=-1)
        det = np.einsum("...i,...i->...", a, np.cross(b, c))
        den = (
            la * lb * lc
            + np.einsum("...i,...i->...", a, b) * lc
            + np.einsum("...i,...i->...", a, c) * lb
            + np.einsum("...i,...i->...", b, c) * la
        )
        out[sl] = 2.0 * np.arctan2(det, den).sum(axis=1) / FOUR_PI
    return out


def adjoint_double_layer(targets, normals, sources, weights, num_threads: int = 1) -> np.ndarray:
    targets = np.ascontiguousarray(targets, dtype=float)
    normals = np.ascontiguousarray(normals, dtype=float)
    sources = np.ascontiguousarray(sources, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    out = np.empty(len(targets))
    for sl in _chunks(len(targets), len(sources)):
        d = targets[sl, None, :] - sources[None, :, :]
        r2 = np.einsum("...i,...i->...", d, d)
        num = np.einsum("...i,...i->...", d, normals[sl, None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.where(r2 > 0.0, num / (r2 * np.sqrt(r2)), 0.0)
        out[sl] = k @ weights / FOUR_PI
    return out


def single_layer(targets, sources, weights, num_threads: int = 1) -> np.ndarray:
    targets = np.ascontiguousarray(targets, dtype=float)
    sources = np.ascontiguousarray(sources, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    out = np.empty(len(targets))
    for sl in _chunks(len(targets), len(sources)):
        d = targets[sl, None, :] - sources[None, :, :]
        r = np.sqrt(np.einsum("...i,...i->...", d, d))
        with np.errstate(divide="ignore"):
            k = np.where(r > 0.0, 1.0 / r, 0.0)
        out[sl] = -(k @ weights) / FOUR_PI
    return out


def double_layer(targets, sources, normals, weights, num_threads: int = 1) -> np.ndarray:
    targets = np.ascontiguousarray(targets, dtype=float)
    sources = np.ascontiguousarray(sources, dtype=float)
    normals = np.ascontiguousarray(normals, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    out = np.empty(len(targets))
    for sl in _chunks(len(targets), len(sources)):
        d = sources[None, :, :] - targets[sl, None, :]
        r2 = np.einsum("...i,...i->...", d, d)
        num = np.einsum("...i,...i->...", d, normals[None, :, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.where(r2 > 0.0, num / (r2 * np.sqrt(r2)), 0.0)
        out[sl] = k @ weights / FOUR_PI
    return out
