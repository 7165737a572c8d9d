# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense kernel sums; see ``_pykernels`` for the reference versions."""
import numpy as np
cimport cython
from cython.parallel cimport prange
from libc.math cimport sqrt, atan2, M_PI


def winding_numbers(const double[:, ::1] points, const double[:, :, ::1] tri, int num_threads=1):
    cdef Py_ssize_t n = points.shape[0], m = tri.shape[0], i, j
    cdef double ax, ay, az, bx, by, bz, cx, cy, cz, la, lb, lc, det, den, acc
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    for i in prange(n, nogil=True, num_threads=num_threads, schedule="static"):
        acc = 0.0
        for j in range(m):
            ax = tri[j, 0, 0] - points[i, 0]
            ay = tri[j, 0, 1] - points[i, 1]
            az = tri[j, 0, 2] - points[i, 2]
            bx = tri[j, 1, 0] - points[i, 0]
            by = tri[j, 1, 1] - points[i, 1]
            bz = tri[j, 1, 2] - points[i, 2]
            cx = tri[j, 2, 0] - points[i, 0]
            cy = tri[j, 2, 1] - points[i, 1]
            cz = tri[j, 2, 2] - points[i, 2]
            la = sqrt(ax * ax + ay * ay + az * az)
            lb = sqrt(bx * bx + by * by + bz * bz)
            lc = sqrt(cx * cx + cy * cy + cz * cz)
            det = ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)
            den = (la * lb * lc + (ax * bx + ay * by + az * bz) * lc
                   + (ax * cx + ay * cy + az * cz) * lb + (bx * cx + by * cy + bz * cz) * la)
            acc = acc + atan2(det, den)
        out[i] = acc / (2.0 * M_PI)
    return out_arr


def adjoint_double_layer(const double[:, ::1] targets, const double[:, ::1] normals,
                         const double[:, ::1] sources, const double[::1] weights, int num_threads=1):
    cdef Py_ssize_t n = targets.shape[0], m = sources.shape[0], i, j
    cdef double dx, dy, dz, r2, acc, tx, ty, tz, nx, ny, nz
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    for i in prange(n, nogil=True, num_threads=num_threads, schedule="static"):
        tx = targets[i, 0]
        ty = targets[i, 1]
        tz = targets[i, 2]
        nx = normals[i, 0]
        ny = normals[i, 1]
        nz = normals[i, 2]
        acc = 0.0
        for j in range(m):
            dx = tx - sources[j, 0]
            dy = ty - sources[j, 1]
            dz = tz - sources[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 > 0.0:
                acc = acc + weights[j] * (dx * nx + dy * ny + dz * nz) / (r2 * sqrt(r2))
        out[i] = acc / (4.0 * M_PI)
    return out_arr


def single_layer(const double[:, ::1] targets, const double[:, ::1] sources, const double[::1] weights, int num_threads=1):
    cdef Py_ssize_t n = targets.shape[0], m = sources.shape[0], i, j
    cdef double dx, dy, dz, r2, acc
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    for i in prange(n, nogil=True, num_threads=num_threads, schedule="static"):
        acc = 0.0
        for j in range(m):
            dx = targets[i, 0] - sources[j, 0]
            dy = targets[i, 1] - sources[j, 1]
            dz = targets[i, 2] - sources[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 > 0.0:
                acc = acc + weights[j] / sqrt(r2)
        out[i] = -acc / (4.0 * M_PI)
    return out_arr


def double_layer(const double[:, ::1] targets, const double[:, ::1] sources,
                 const double[:, ::1] normals, const double[::1] weights, int num_threads=1):
    cdef Py_ssize_t n = targets.shape[0], m = sources.shape[0], i, j
    cdef double dx, dy, dz, r2, acc
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    for i in prange(n, nogil=True, num_threads=num_threads, schedule="static"):
        acc = 0.0
        for j in range(m):
            dx = sources[j, 0] - targets[i, 0]
            dy = sources[j, 1] - targets[i, 1]
            dz = sources[j, 2] - targets[i, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 > 0.0:
                acc = acc + weights[j] * (dx * normals[j, 0] + dy * normals[j, 1] + dz * normals[j, 2]) / (r2 * sqrt(r2))
        out[i] = acc / (4.0 * M_PI)
    return out_arr
