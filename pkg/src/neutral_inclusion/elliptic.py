"""Elliptic integrals attached to a triaxial ellipsoid.

With ``g(s) = (c1^2 + s)(c2^2 + s)(c3^2 + s)`` the module evaluates

* ``phi_j(rho) = int_rho^inf ds / ((cj^2 + s) sqrt(g(s)))``
* ``i0(rho)    = int_rho^inf ds / sqrt(g(s))``

Two independent routes are provided.  The fast path rewrites both integrals
as Carlson symmetric forms (``phi_j = 2/3 R_D``, ``i0 = 2 R_F``) evaluated by
the duplication theorem.  The oracle path integrates the original improper
integrals with an adaptive Gauss-Kronrod rule after mapping ``[rho, inf)``
onto ``[0, 1)``.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, Tolerances
from .errors import ConvergenceFailure, DegenerateAxes, NonFiniteInput

__all__ = [
    "EllipticContext",
    "carlson_rf",
    "carlson_rd",
    "g_eval",
    "phi",
    "phi_all",
    "i0",
    "phi_quad",
    "i0_quad",
    "gauss_kronrod",
]


# ---------------------------------------------------------------------------
# Carlson symmetric forms
# ---------------------------------------------------------------------------


def carlson_rf(x, y, z, rtol: float = DEFAULT.carlson_rtol, max_iter: int = DEFAULT.carlson_max_iter):
    """Carlson's R_F(x, y, z) for nonnegative arguments (at most one zero).

    Vectorised over broadcastable array arguments.
    """
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    x0, y0 = x, y
    x, y, z = x.copy(), y.copy(), z.copy()
    a0 = (x + y + z) / 3.0
    q = (3.0 * rtol) ** (-1.0 / 6.0) * np.maximum.reduce([abs(a0 - x), abs(a0 - y), abs(a0 - z)])
    a = a0.copy()
    scale = 1.0
    for _ in range(max_iter):
        if np.all(scale * q < abs(a)):
            break
        sx, sy, sz = np.sqrt(x), np.sqrt(y), np.sqrt(z)
        lam = sx * sy + sx * sz + sy * sz
        a = (a + lam) / 4.0
        x = (x + lam) / 4.0
        y = (y + lam) / 4.0
        z = (z + lam) / 4.0
        scale /= 4.0
    else:
        raise ConvergenceFailure("R_F duplication did not contract")
    xx = (a0 - x0) * scale / a
    yy = (a0 - y0) * scale / a
    zz = -(xx + yy)
    e2 = xx * yy - zz * zz
    e3 = xx * yy * zz
    out = (1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0) / np.sqrt(a)
    return out[()] if out.ndim == 0 else out


def carlson_rd(x, y, z, rtol: float = DEFAULT.carlson_rtol, max_iter: int = DEFAULT.carlson_max_iter):
    """Carlson's R_D(x, y, z) = 3/2 int_0^inf dt / ((t+z)^{3/2} sqrt((t+x)(t+y)))."""
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    x0, y0 = x, y
    x, y, z = x.copy(), y.copy(), z.copy()
    a0 = (x + y + 3.0 * z) / 5.0
    q = (rtol / 4.0) ** (-1.0 / 6.0) * np.maximum.reduce([abs(a0 - x), abs(a0 - y), abs(a0 - z)])
    a = a0.copy()
    acc = np.zeros_like(a)
    scale = 1.0
    for _ in range(max_iter):
        if np.all(scale * q < abs(a)):
            break
        sx, sy, sz = np.sqrt(x), np.sqrt(y), np.sqrt(z)
        lam = sx * sy + sx * sz + sy * sz
        acc += scale / (sz * (z + lam))
        a = (a + lam) / 4.0
        x = (x + lam) / 4.0
        y = (y + lam) / 4.0
        z = (z + lam) / 4.0
        scale /= 4.0
    else:
        raise ConvergenceFailure("R_D duplication did not contract")
    xx = (a0 - x0) * scale / a
    yy = (a0 - y0) * scale / a
    zz = -(xx + yy) / 3.0
    xy = xx * yy
    z2 = zz * zz
    e2 = xy - 6.0 * z2
    e3 = (3.0 * xy - 8.0 * z2) * zz
    e4 = 3.0 * (xy - z2) * z2
    e5 = xy * z2 * zz
    series = (
        1.0
        - 3.0 * e2 / 14.0
        + e3 / 6.0
        + 9.0 * e2 * e2 / 88.0
        - 3.0 * e4 / 22.0
        - 9.0 * e2 * e3 / 52.0
        + 3.0 * e5 / 26.0
    )
    out = scale * a ** -1.5 * series + 3.0 * acc
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Context
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EllipticContext:
    """Squared semi-axes of the base ellipsoid, kept in caller axis order.

    ``order`` sorts the axes ascending; ``c2_sorted[k] == c2[order[k]]``.
    """

    c2: tuple[float, float, float]
    order: tuple[int, int, int] = field(init=False)
    tol: Tolerances = field(default=DEFAULT, compare=False, repr=False)

    def __post_init__(self):
        c2 = tuple(float(v) for v in self.c2)
        if len(c2) != 3:
            raise DegenerateAxes("expected three squared semi-axes")
        if not all(np.isfinite(c2)):
            raise NonFiniteInput("semi-axes must be finite")
        if min(c2) <= 0.0:
            raise DegenerateAxes(f"semi-axes must be positive, got c^2={c2}")
        object.__setattr__(self, "c2", c2)
        object.__setattr__(self, "order", tuple(int(i) for i in np.argsort(c2, kind="stable")))

    @classmethod
    def from_axes(cls, c, tol: Tolerances = DEFAULT) -> "EllipticContext":
        c = np.asarray(c, dtype=float)
        if not np.all(np.isfinite(c)):
            raise NonFiniteInput("semi-axes must be finite")
        if np.any(c <= 0):
            raise DegenerateAxes(f"semi-axes must be positive, got {c.tolist()}")
        return cls(tuple(float(v) ** 2 for v in c), tol=tol)

    @property
    def c2_sorted(self) -> tuple[float, float, float]:
        return tuple(self.c2[i] for i in self.order)

    def shifted(self, rho):
        """Return the three arrays ``cj^2 + rho`` (caller order)."""
        rho = np.asarray(rho, dtype=float)
        return [cj + rho for cj in self.c2]


def _check_rho(ctx: EllipticContext, rho):
    rho = np.asarray(rho, dtype=float)
    if not np.all(np.isfinite(rho)):
        raise NonFiniteInput("rho must be finite")
    if np.any(rho <= -min(ctx.c2)):
        raise ValueError("rho must exceed -min(c_j^2)")
    return rho


def g_eval(ctx: EllipticContext, rho):
    rho = _check_rho(ctx, rho)
    a, b, c = ctx.shifted(rho)
    return a * b * c


def phi(ctx: EllipticContext, rho, j: int):
    """phi_j(rho) for axis ``j`` in {0, 1, 2}."""
    if j not in (0, 1, 2):
        raise IndexError("axis index must be 0, 1 or 2")
    rho = _check_rho(ctx, rho)
    s = ctx.shifted(rho)
    others = [s[i] for i in range(3) if i != j]
    return (2.0 / 3.0) * carlson_rd(others[0], others[1], s[j], ctx.tol.carlson_rtol, ctx.tol.carlson_max_iter)


def phi_all(ctx: EllipticContext, rho) -> np.ndarray:
    """Stack of ``phi_1..3`` with a trailing axis of length 3."""
    return np.stack([np.asarray(phi(ctx, rho, j)) for j in range(3)], axis=-1)


def i0(ctx: EllipticContext, rho):
    rho = _check_rho(ctx, rho)
    a, b, c = ctx.shifted(rho)
    return 2.0 * carlson_rf(a, b, c, ctx.tol.carlson_rtol, ctx.tol.carlson_max_iter)


# ---------------------------------------------------------------------------
# Quadrature oracle
# ---------------------------------------------------------------------------

# Gauss-Kronrod (7, 15) nodes and weights on [-1, 1].
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KWEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss points are the odd-indexed Kronrod nodes (1, 3, 5, 7 counted from the end).
_GWEIGHTS = np.zeros(15)
_GWEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], [_WG[-1]], _WG[:-1][::-1]])


def _gk15(f, a: float, b: float) -> tuple[float, float]:
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    vals = f(mid + half * _NODES)
    k = half * float(np.dot(_KWEIGHTS, vals))
    g = half * float(np.dot(_GWEIGHTS, vals))
    return k, abs(k - g)


def gauss_kronrod(f, a: float, b: float, rtol: float = 1e-11, max_intervals: int = 2000) -> float:
    """Globally adaptive G7-K15 quadrature of a vectorised ``f`` over ``[a, b]``.

    Intervals with the largest error estimate are bisected until the summed
    estimate drops below ``rtol * |integral|``.
    """
    total, err = _gk15(f, a, b)
    heap = [(-err, a, b, total)]
    err_sum = err
    n = 1
    while err_sum > rtol * abs(total):
        if n >= max_intervals:
            raise ConvergenceFailure(
                f"adaptive quadrature stalled at {n} intervals (err {err_sum:.3e}, value {total:.6e})"
            )
        neg_err, lo, hi, val = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        v1, e1 = _gk15(f, lo, mid)
        v2, e2 = _gk15(f, mid, hi)
        total += v1 + v2 - val
        err_sum += e1 + e2 + neg_err
        heapq.heappush(heap, (-e1, lo, mid, v1))
        heapq.heappush(heap, (-e2, mid, hi, v2))
        n += 1
    # re-sum to shed accumulated update rounding
    return float(sum(item[3] for item in heap))


def _mapped(ctx: EllipticContext, rho: float, integrand, power: int):
    # s = rho + (t / (1 - t))**power maps [0, 1) onto [rho, inf)
    def f(t):
        u = t / (1.0 - t)
        s = rho + u**power
        ds = power * u ** (power - 1) / (1.0 - t) ** 2
        return integrand(s) * ds

    return f


def phi_quad(ctx: EllipticContext, rho: float, j: int, rtol: float | None = None) -> float:
    rtol = ctx.tol.quad_rtol if rtol is None else rtol
    rho = float(_check_rho(ctx, rho))
    cj = ctx.c2[j]

    def integrand(s):
        g = (ctx.c2[0] + s) * (ctx.c2[1] + s) * (ctx.c2[2] + s)
        return 1.0 / ((cj + s) * np.sqrt(g))

    return gauss_kronrod(_mapped(ctx, rho, integrand, 1), 0.0, 1.0, rtol, ctx.tol.quad_max_intervals)


def i0_quad(ctx: EllipticContext, rho: float, rtol: float | None = None) -> float:
    # the 1/sqrt(g) tail decays only like s^-3/2, so a squared map keeps the integrand bounded
    rtol = ctx.tol.quad_rtol if rtol is None else rtol
    rho = float(_check_rho(ctx, rho))

    def integrand(s):
        g = (ctx.c2[0] + s) * (ctx.c2[1] + s) * (ctx.c2[2] + s)
        return 1.0 / np.sqrt(g)

    return gauss_kronrod(_mapped(ctx, rho, integrand, 2), 0.0, 1.0, rtol, ctx.tol.quad_max_intervals)
