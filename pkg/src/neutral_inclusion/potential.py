"""Newtonian potentials of ellipsoids and meshed domains.

``N_E(x) = int_E gamma(x - y) dy`` with ``gamma(x) = -1 / (4 pi |x|)``.
Ellipsoids use the closed form built on :mod:`neutral_inclusion.elliptic`;
arbitrary domains use a seeded Monte Carlo estimate that integrates the
``1/r`` singularity analytically in radius inside a small ball.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .analytic import OverdetSolution
from .config import DEFAULT, Tolerances
from .elliptic import EllipticContext, i0, phi_all
from .errors import IllConditionedFit, SeedRequired, SingularPoint
from .geometry import ConfocalPair, Ellipsoid, TriMesh, confocal_rho, fibonacci_sphere

__all__ = [
    "gamma",
    "newtonian_ellipsoid",
    "newtonian_ellipsoid_gradient",
    "newtonian_mc",
    "DifferenceSamples",
    "averaged_difference",
    "QuadraticFit",
    "quadratic_fit",
    "TraceCheck",
    "trace_defect",
    "trace_check",
    "interior_samples",
]

Domain = Union[Ellipsoid, TriMesh]

_FOUR_PI = 4.0 * math.pi
MC_CHUNK = 1 << 16


def gamma(x) -> np.ndarray:
    """Fundamental solution of the Laplacian, ``-1 / (4 pi |x|)``."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0.0):
        raise SingularPoint("gamma is singular at the origin")
    return -1.0 / (_FOUR_PI * r)


def _ellipsoid_parts(e: Ellipsoid, x, tol: Tolerances):
    ctx = EllipticContext.from_axes(e.c, tol)
    y = e.local(x)
    rho = np.maximum(confocal_rho(y, e.c, tol), 0.0)
    rho = np.where(e.implicit(np.asarray(x, dtype=float)) <= 0.0, 0.0, rho)
    return ctx, y, rho, float(np.prod(e.c))


def newtonian_ellipsoid(e: Ellipsoid, x, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Closed-form Newtonian potential of a solid ellipsoid.

    Inside, ``rho = 0``; outside, ``rho`` is the confocal coordinate of ``x``.
    """
    ctx, y, rho, cprod = _ellipsoid_parts(e, x, tol)
    ph = phi_all(ctx, rho)
    return 0.25 * cprod * (np.sum(ph * y * y, axis=-1) - i0(ctx, rho))


def newtonian_ellipsoid_gradient(e: Ellipsoid, x, tol: Tolerances = DEFAULT) -> np.ndarray:
    # the rho-derivative of the bracket vanishes on the confocal surface through x
    ctx, y, rho, cprod = _ellipsoid_parts(e, x, tol)
    return 0.5 * cprod * phi_all(ctx, rho) * y


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def _bbox(domain: Domain) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(domain, Ellipsoid):
        ctr = np.array(domain.center)
        return ctr - domain.c, ctr + domain.c
    v = domain.vertices
    return v.min(axis=0), v.max(axis=0)


def _contains(domain: Domain, pts: np.ndarray) -> np.ndarray:
    return domain.contains(pts)


def _uniform_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def newtonian_mc(domain: Domain, x, n_samples: int, seed: int | None) -> tuple[float, float]:
    """Monte Carlo estimate of ``N(x)`` and its standard error.

    A ball of radius ``eps`` around ``x`` is integrated in spherical
    coordinates (uniform radius, uniform direction), which removes the
    singularity; the remainder is rejection-sampled from the bounding box.
    Samples are drawn in fixed-size chunks from spawned seed streams, so the
    result does not depend on the thread count.
    """
    if seed is None:
        raise SeedRequired("Monte Carlo evaluation requires an explicit seed")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    x = np.asarray(x, dtype=float).reshape(3)
    lo, hi = _bbox(domain)
    half = 0.5 * (hi - lo)
    eps = 0.5 * float(half.min())
    if np.any(x < lo - eps) or np.any(x > hi + eps):
        eps = 0.0
    box_volume = float(np.prod(hi - lo))

    n_ball = n_samples // 4 if eps > 0.0 else 0
    n_box = n_samples - n_ball
    streams = np.random.SeedSequence(seed).spawn(2)

    def _chunked(n, stream, draw):
        chunks = [MC_CHUNK] * (n // MC_CHUNK) + ([n % MC_CHUNK] if n % MC_CHUNK else [])
        sums = []
        for size, child in zip(chunks, stream.spawn(len(chunks))):
            vals = draw(np.random.default_rng(child), size)
            sums.append((vals.sum(), (vals * vals).sum()))
        if not sums:
            return 0.0, 0.0
        s = np.array(sums)
        return float(s[:, 0].sum()), float(s[:, 1].sum())

    def draw_ball(rng, size):
        r = eps * rng.random(size)
        pts = x + r[:, None] * _uniform_directions(rng, size)
        return np.where(_contains(domain, pts), r, 0.0)

    def draw_box(rng, size):
        pts = lo + (hi - lo) * rng.random((size, 3))
        dist = np.linalg.norm(pts - x, axis=1)
        keep = _contains(domain, pts) & (dist > eps)
        with np.errstate(divide="ignore"):
            return np.where(keep, 1.0 / np.where(keep, dist, 1.0), 0.0)

    estimate, variance = 0.0, 0.0
    if n_ball:
        s1, s2 = _chunked(n_ball, streams[0], draw_ball)
        mean = s1 / n_ball
        var = max(s2 / n_ball - mean * mean, 0.0) / (n_ball - 1)
        estimate += -eps * mean
        variance += eps * eps * var
    s1, s2 = _chunked(n_box, streams[1], draw_box)
    mean = s1 / n_box
    var = max(s2 / n_box - mean * mean, 0.0) / (n_box - 1)
    scale = box_volume / _FOUR_PI
    estimate += -scale * mean
    variance += scale * scale * var
    return estimate, math.sqrt(variance)


# ---------------------------------------------------------------------------
# Averaged potentials of nested pairs
# ---------------------------------------------------------------------------


def _pair_domains(pair) -> tuple[Domain, Domain]:
    if isinstance(pair, ConfocalPair):
        return pair.outer, pair.inner
    outer, inner = pair
    return outer, inner


def _volume(d: Domain) -> float:
    return float(d.volume)


@dataclass(frozen=True)
class DifferenceSamples:
    """Values of ``N_outer / |outer| - N_inner / |inner|`` at sample points."""

    points: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    branch: np.ndarray


def _branches(outer: Domain, inner: Domain, pts: np.ndarray) -> np.ndarray:
    in_inner = _contains(inner, pts)
    in_outer = _contains(outer, pts)
    return np.where(in_inner, "core", np.where(in_outer, "shell", "exterior"))


def averaged_difference(
    pair,
    points,
    n_samples: int | None = None,
    seed: int | None = None,
    tol: Tolerances = DEFAULT,
    method: str = "auto",
) -> DifferenceSamples:
    """Averaged-potential difference for a confocal pair, two ellipsoids or two meshes.

    Ellipsoids are evaluated in closed form (zero stderr) unless
    ``method="mc"``; meshes always use :func:`newtonian_mc`, which needs a seed.
    """
    if method not in ("auto", "mc"):
        raise ValueError(f"method must be 'auto' or 'mc', got {method!r}")
    outer, inner = _pair_domains(pair)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vol_o, vol_i = _volume(outer), _volume(inner)
    values = np.zeros(len(pts))
    var = np.zeros(len(pts))
    for dom, vol, sign, k in ((outer, vol_o, 1.0, 0), (inner, vol_i, -1.0, 1)):
        if isinstance(dom, Ellipsoid) and method == "auto":
            values += sign * newtonian_ellipsoid(dom, pts, tol) / vol
            continue
        if seed is None:
            raise SeedRequired("mesh potentials are Monte Carlo estimates and need a seed")
        n = n_samples or 200_000
        for i, p in enumerate(pts):
            est, err = newtonian_mc(dom, p, n, seed + 7919 * (2 * i + k))
            values[i] += sign * est / vol
            var[i] += (err / vol) ** 2
    return DifferenceSamples(pts, values, np.sqrt(var), _branches(outer, inner, pts))


def interior_samples(domain: Domain, n: int, seed: int) -> np.ndarray:
    """``n`` scrambled-Sobol points inside ``domain`` (rejection from its bounding box)."""
    from scipy.stats import qmc

    lo, hi = _bbox(domain)
    sampler = qmc.Sobol(d=3, scramble=True, seed=seed)
    out = []
    count = 0
    while count < n:
        m = 1 << max(8, int(math.ceil(math.log2(max(2 * (n - count), 2)))))
        pts = qmc.scale(sampler.random(m), lo, hi)
        pts = pts[_contains(domain, pts)]
        out.append(pts)
        count += len(pts)
    return np.concatenate(out)[:n]


# ---------------------------------------------------------------------------
# Quadratic identity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticFit:
    """Full quadratic ``x.A x / 2 + d.x + C`` fitted to ``k |outer| (N^_outer - N^_inner)``.

    ``residual`` is the max deviation over the interior fit points;
    ``exterior_residual`` is the max of the (scaled) difference outside the
    outer domain, which should vanish for a solution.
    """

    A_fit: np.ndarray
    d_fit: np.ndarray
    C_star: float
    residual: float
    exterior_residual: float
    n_points: int
    k: float
    A_reference: np.ndarray | None = None

    @property
    def A_error(self) -> float | None:
        if self.A_reference is None:
            return None
        return float(np.max(np.abs(self.A_fit - self.A_reference)))

    def as_dict(self) -> dict:
        return {
            "A_fit": self.A_fit.tolist(),
            "d_fit": self.d_fit.tolist(),
            "C_star": self.C_star,
            "residual": self.residual,
            "exterior_residual": self.exterior_residual,
            "n_points": self.n_points,
            "k": self.k,
            "A_reference": None if self.A_reference is None else self.A_reference.tolist(),
            "A_error": self.A_error,
        }


_MIN_FIT_POINTS = 200


def _monomials(p: np.ndarray) -> np.ndarray:
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    one = np.ones_like(x)
    return np.stack([x * x, y * y, z * z, x * y, x * z, y * z, x, y, z, one], axis=1)


def quadratic_fit(
    pair,
    points,
    k: float | None = None,
    exterior_points=None,
    n_samples: int | None = None,
    seed: int | None = None,
    tol: Tolerances = DEFAULT,
) -> QuadraticFit:
    """Fit all ten quadratic coefficients to the scaled averaged difference.

    ``k`` defaults to the shell constant of the confocal solution for a
    :class:`ConfocalPair` and to 1 otherwise.  ``exterior_points`` defaults to
    242 points on a sphere of twice the outer diameter.
    """
    outer, _ = _pair_domains(pair)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) < _MIN_FIT_POINTS:
        raise ValueError(f"need at least {_MIN_FIT_POINTS} interior points, got {len(pts)}")
    A_ref = None
    if isinstance(pair, ConfocalPair):
        sol = OverdetSolution(pair, tol=tol)
        A_ref = sol.A
        if k is None:
            k = sol.k
    if k is None:
        k = 1.0
    scale = k * _volume(outer)

    vals = scale * averaged_difference(pair, pts, n_samples, seed, tol).values
    centre = pts.mean(axis=0)
    spread = float(np.max(np.linalg.norm(pts - centre, axis=1)))
    if spread == 0.0:
        raise IllConditionedFit("sample points coincide")
    q = (pts - centre) / spread
    M = _monomials(q)
    col = np.linalg.norm(M, axis=0)
    if np.any(col <= 1e-12 * col.max()):
        raise IllConditionedFit("sample points do not span all quadratic monomials")
    Mn = M / col
    s = np.linalg.svd(Mn, compute_uv=False)
    if s[-1] < 1e-8 * s[0]:
        raise IllConditionedFit(f"sample spread is degenerate (condition {s[0] / max(s[-1], 1e-300):.3g})")
    coef = np.linalg.lstsq(Mn, vals, rcond=None)[0] / col
    residual = float(np.max(np.abs(M @ coef - vals)))

    # back to unscaled, uncentred coordinates: f(x) = q.H q/2 + g.q + c, q = (x - m)/s
    H = np.array(
        [
            [2 * coef[0], coef[3], coef[4]],
            [coef[3], 2 * coef[1], coef[5]],
            [coef[4], coef[5], 2 * coef[2]],
        ]
    )
    g = coef[6:9]
    A_fit = H / spread**2
    d_fit = g / spread - A_fit @ centre
    C_star = float(coef[9] - g @ centre / spread + 0.5 * centre @ A_fit @ centre)

    if exterior_points is None:
        ctr = _bbox(outer)
        mid = 0.5 * (ctr[0] + ctr[1])
        exterior_points = mid + 2.0 * float(outer.diameter) * fibonacci_sphere(242)
    ext = scale * averaged_difference(pair, exterior_points, n_samples, seed, tol).values
    return QuadraticFit(
        A_fit, d_fit, C_star, residual, float(np.max(np.abs(ext))), len(pts), float(k), A_ref
    )


# ---------------------------------------------------------------------------
# Trace relation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceCheck:
    defect: float
    relative: float


def trace_defect(k: float, A, shell_volume: float, core_volume: float) -> TraceCheck:
    """Signed ``k |shell| + tr(A) |core|`` and its size relative to ``|k| |shell|``."""
    A = np.asarray(A, dtype=float)
    tr = float(np.trace(A)) if A.ndim == 2 else float(A) * 3.0
    defect = k * shell_volume + tr * core_volume
    ref = abs(k) * shell_volume
    return TraceCheck(defect, abs(defect) / ref if ref > 0 else math.inf)


def trace_check(obj, tol: Tolerances = DEFAULT) -> TraceCheck:
    """Trace relation for a confocal pair, its solution, or an MFS fit."""
    if isinstance(obj, ConfocalPair):
        obj = OverdetSolution(obj, tol=tol)
    if isinstance(obj, OverdetSolution):
        pair = obj.pair
        return trace_defect(obj.k, obj.A, pair.shell_volume, pair.base.volume)
    if hasattr(obj, "shell_volume") and hasattr(obj, "core_volume"):
        return trace_defect(obj.k, obj.A, obj.shell_volume, obj.core_volume)
    raise TypeError(f"cannot check trace relation for {type(obj).__name__}")
