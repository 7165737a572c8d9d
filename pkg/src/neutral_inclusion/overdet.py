"""Residual checks and least-squares fits for the over-determined shell problem.

The problem: find ``w`` on the shell with ``Lap w = k``, ``grad w = 0`` on the
outer surface and ``grad w = A x + d`` on the inner surface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .analytic import ShellField, laplacian_probe
from .config import DEFAULT, Tolerances
from .errors import (
    DisconnectedShell,
    EvaluationOutsideDomain,
    InsufficientRadii,
    MeshesIntersect,
    RankDeficient,
    SourceSurfaceIntersectsShell,
)
from .geometry import Ellipsoid, TriMesh, fibonacci_sphere, mesh_ellipsoid

__all__ = [
    "OverdetResiduals",
    "residuals",
    "check_shell",
    "MfsFit",
    "mfs_fit",
    "farthest_point_sample",
    "RadialProfile",
    "radial_fit",
    "angular_derivatives",
    "sweep_pair",
    "isotropy_sweep",
]

Constraint = Literal["isotropic", "symmetric"]
_FOUR_PI = 4.0 * math.pi


# ---------------------------------------------------------------------------
# Shell checks and sampling
# ---------------------------------------------------------------------------


def _component_count(mesh: TriMesh) -> int:
    t = mesh.triangles
    rows = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
    cols = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
    n = len(mesh.vertices)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return connected_components(graph, directed=False)[0]


def check_shell(outer: TriMesh, inner: TriMesh) -> None:
    """Reject shells that are not a connected region between nested surfaces."""
    if not np.all(outer.contains(inner.vertices)):
        raise MeshesIntersect("inner surface is not strictly inside the outer surface")
    if np.any(inner.contains(outer.vertices)):
        raise MeshesIntersect("outer surface enters the inner domain")
    if _component_count(outer) != 1:
        raise DisconnectedShell("outer surface has several components; the shell is disconnected")


def shell_samples(outer: TriMesh, inner: TriMesh, n: int, seed: int, margin: float = 0.0) -> np.ndarray:
    """Scrambled-Sobol points in the shell whose ``margin``-stencil stays in the shell."""
    from scipy.stats import qmc

    lo, hi = outer.vertices.min(axis=0), outer.vertices.max(axis=0)
    sampler = qmc.Sobol(d=3, scramble=True, seed=seed)
    offsets = np.vstack([np.zeros(3), margin * np.eye(3), -margin * np.eye(3)]) if margin > 0 else np.zeros((1, 3))
    out, count = [], 0
    for _ in range(64):
        if count >= n:
            break
        pts = qmc.scale(sampler.random(1 << max(8, int(math.ceil(math.log2(4 * (n - count)))))), lo, hi)
        probe = (pts[:, None, :] + offsets).reshape(-1, 3)
        ok = (outer.contains(probe) & ~inner.contains(probe)).reshape(len(pts), -1).all(axis=1)
        out.append(pts[ok])
        count += int(ok.sum())
    if count < n:
        raise EvaluationOutsideDomain("could not place enough sample points in the shell")
    return np.concatenate(out)[:n]


# ---------------------------------------------------------------------------
# Residuals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OverdetResiduals:
    r_outer: float
    r_inner: float
    r_interior: float
    scale: float
    n_outer: int
    n_inner: int
    n_interior: int

    @property
    def normalized(self) -> tuple[float, float, float]:
        return (self.r_outer / self.scale, self.r_inner / self.scale, self.r_interior / self.scale)

    def as_dict(self) -> dict:
        return {
            "r_outer": self.r_outer,
            "r_inner": self.r_inner,
            "r_interior": self.r_interior,
            "scale": self.scale,
            "normalized": list(self.normalized),
            "n_outer": self.n_outer,
            "n_inner": self.n_inner,
            "n_interior": self.n_interior,
        }


def residuals(
    outer: TriMesh,
    inner: TriMesh,
    field: ShellField,
    k: float,
    A,
    d,
    n_interior: int = 1000,
    seed: int = 0,
    fd_step: float | None = None,
    sample_at: Literal["vertices", "centroids"] = "vertices",
) -> OverdetResiduals:
    """Boundary and interior residuals of ``field`` for the data ``(k, A, d)``.

    Boundary samples are mesh vertices by default (they lie on the exact
    surface for meshed analytic shapes).  With ``fd_step`` the Laplacian is a
    seven-point finite difference and interior points keep their stencil in
    the shell; otherwise ``field.laplacian`` is used.
    """
    A = np.asarray(A, dtype=float)
    d = np.asarray(d, dtype=float)
    po = outer.vertices if sample_at == "vertices" else outer.centroids
    pi = inner.vertices if sample_at == "vertices" else inner.centroids
    r_outer = float(np.max(np.linalg.norm(field.gradient(po), axis=-1)))
    r_inner = float(np.max(np.linalg.norm(field.gradient(pi) - pi @ A.T - d, axis=-1)))
    interior = shell_samples(outer, inner, n_interior, seed, margin=fd_step or 0.0)
    if fd_step:
        lap = laplacian_probe(field, interior, fd_step, check_domain=False)
    else:
        lap = field.laplacian(interior)
    r_interior = float(np.max(np.abs(np.asarray(lap) - k)))
    scale = abs(k) * outer.diameter
    return OverdetResiduals(r_outer, r_inner, r_interior, scale, len(po), len(pi), len(interior))


# ---------------------------------------------------------------------------
# Method of fundamental solutions
# ---------------------------------------------------------------------------


def farthest_point_sample(points: np.ndarray, n: int) -> np.ndarray:
    """Indices of ``n`` points chosen greedily far apart (deterministic, starts at 0)."""
    m = len(points)
    if n >= m:
        return np.arange(m)
    chosen = np.empty(n, dtype=np.int64)
    chosen[0] = 0
    dist = np.linalg.norm(points - points[0], axis=1)
    for i in range(1, n):
        j = int(np.argmax(dist))
        chosen[i] = j
        dist = np.minimum(dist, np.linalg.norm(points - points[j], axis=1))
    return np.sort(chosen)


def _grad_gamma_matrix(x: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """Rows ``3 i + c``: component ``c`` of ``grad gamma(x_i - y_s)``."""
    r = x[:, None, :] - sources[None, :, :]
    dist3 = np.linalg.norm(r, axis=-1) ** 3
    G = r / (_FOUR_PI * dist3[..., None])
    return G.transpose(0, 2, 1).reshape(3 * len(x), len(sources))


def _a_basis(constraint: Constraint) -> list[np.ndarray]:
    if constraint == "isotropic":
        return [np.eye(3)]
    basis = []
    for i in range(3):
        for j in range(i, 3):
            E = np.zeros((3, 3))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    return basis


def _interface_columns(x: np.ndarray, constraint: Constraint) -> np.ndarray:
    """Columns for ``-(A x + d)`` with A in the constraint basis and free d."""
    cols = [-(x @ E.T).reshape(-1) for E in _a_basis(constraint)]
    for c in range(3):
        e = np.zeros((len(x), 3))
        e[:, c] = 1.0
        cols.append(-e.reshape(-1))
    return np.stack(cols, axis=1)


@dataclass(frozen=True, eq=False)
class MfsFit(ShellField):
    """Least-squares shell field ``|x - o|^2 / 6 + sum q_s gamma(x - y_s)`` (so k = 1).

    ``o`` is the outer centroid, which makes the fit translation covariant.
    """

    constraint: str
    outer_sources: np.ndarray
    inner_sources: np.ndarray
    strengths: np.ndarray
    A: np.ndarray
    d: np.ndarray
    rho_fit: float
    collocation_residual: float
    rank: int
    n_collocation: int
    n_validation: int
    shell_volume: float
    core_volume: float
    diameter: float
    k: float = 1.0
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    singular_values: np.ndarray = field(default=None, repr=False)

    @property
    def c(self) -> float | None:
        """Isotropic coefficient (``A = c I``), or ``None`` for symmetric fits."""
        return float(self.A[0, 0]) if self.constraint == "isotropic" else None

    @property
    def sources(self) -> np.ndarray:
        return np.vstack([self.outer_sources, self.inner_sources])

    def value(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 3)
        r = np.linalg.norm(flat[:, None, :] - self.sources[None], axis=-1)
        h = -(1.0 / (_FOUR_PI * r)) @ self.strengths
        y = flat - self.origin
        return (np.sum(y * y, axis=1) / 6.0 + h).reshape(x.shape[:-1])

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 3)
        g = (_grad_gamma_matrix(flat, self.sources) @ self.strengths).reshape(-1, 3)
        return ((flat - self.origin) / 3.0 + g).reshape(x.shape)

    def laplacian(self, x):
        return np.ones(np.asarray(x).shape[:-1])

    def as_dict(self) -> dict:
        return {
            "constraint": self.constraint,
            "k": self.k,
            "c": self.c,
            "A": self.A.tolist(),
            "d": self.d.tolist(),
            "rho_fit": self.rho_fit,
            "collocation_residual": self.collocation_residual,
            "rank": self.rank,
            "n_sources": int(len(self.strengths)),
            "n_collocation": self.n_collocation,
            "n_validation": self.n_validation,
            "shell_volume": self.shell_volume,
            "core_volume": self.core_volume,
            "origin": self.origin.tolist(),
        }


def _inflated(mesh: TriMesh, factor: float) -> np.ndarray:
    ctr = mesh.centroid
    return ctr + factor * (mesh.vertices - ctr)


def _deflated(mesh: TriMesh, factor: float) -> np.ndarray:
    """Vertices pulled into the confocal family of the inertia ellipsoid.

    The smallest principal axis shrinks by ``factor``; a sphere is simply
    scaled about its centroid.
    """
    ctr, R, c = mesh.inertia_ellipsoid
    if c.min() <= 0.0:
        raise SourceSurfaceIntersectsShell("inner surface has a degenerate inertia ellipsoid")
    shrunk = np.sqrt(c**2 - (1.0 - factor**2) * c.min() ** 2)
    return ctr + (((mesh.vertices - ctr) @ R) * (shrunk / c)) @ R.T


def mfs_fit(
    outer: TriMesh,
    inner: TriMesh,
    constraint: Constraint = "isotropic",
    n_sources: int | None = None,
    tol: Tolerances = DEFAULT,
) -> MfsFit:
    """Fit ``(strengths, A, d)`` by truncated-SVD least squares.

    Sources sit on the outer surface inflated about its centroid and on the
    inner surface deflated within its inertia-ellipsoid confocal family.  By
    default every deflated inner vertex is a source and the outer surface gets
    ``mfs_outer_fraction`` as many; ``n_sources`` fixes the total instead.

    Collocation and validation use disjoint vertex subsets of both meshes;
    ``rho_fit`` is the max validation misfit divided by ``k diam(outer)``.
    """
    if constraint not in ("isotropic", "symmetric"):
        raise ValueError(f"constraint must be 'isotropic' or 'symmetric', got {constraint!r}")
    check_shell(outer, inner)

    src_out = _inflated(outer, tol.mfs_outer_inflation)
    src_in = _deflated(inner, tol.mfs_inner_deflation)
    if np.any(outer.contains(src_out)):
        raise SourceSurfaceIntersectsShell("inflated source surface enters the outer domain")
    if not np.all(inner.contains(src_in)):
        raise SourceSurfaceIntersectsShell("deflated source surface leaves the inner domain")
    if n_sources is None:
        n_out = max(1, int(round(tol.mfs_outer_fraction * len(src_in))))
        n_in = len(src_in)
    else:
        if n_sources < 2:
            raise ValueError("need at least two sources")
        n_out = max(1, int(round(tol.mfs_outer_fraction * n_sources)))
        n_in = n_sources - n_out
    src_out = src_out[farthest_point_sample(src_out, n_out)]
    src_in = src_in[farthest_point_sample(src_in, n_in)]
    sources = np.vstack([src_out, src_in])

    stride = tol.mfs_validation_stride

    def split(v):
        held = np.zeros(len(v), dtype=bool)
        held[stride // 2 :: stride] = True
        return v[~held], v[held]
    col_o, val_o = split(outer.vertices)
    col_i, val_i = split(inner.vertices)

    n_a = len(_a_basis(constraint))
    origin = outer.centroid

    def system(po, pi):
        top = np.hstack([_grad_gamma_matrix(po, sources), np.zeros((3 * len(po), n_a + 3))])
        bottom = np.hstack([_grad_gamma_matrix(pi, sources), _interface_columns(pi, constraint)])
        rhs = -np.concatenate([(po - origin).reshape(-1), (pi - origin).reshape(-1)]) / 3.0
        return np.vstack([top, bottom]), rhs

    M, rhs = system(col_o, col_i)
    norms = np.linalg.norm(M, axis=0)
    norms[norms == 0.0] = 1.0
    U, s, Vt = np.linalg.svd(M / norms, full_matrices=False)
    keep = s > tol.mfs_tsvd_cut * s[0]
    rank = int(keep.sum())
    if rank < n_a + 4:
        raise RankDeficient(f"collocation matrix has rank {rank}", rank)
    sol = (Vt[keep].T @ ((U[:, keep].T @ rhs) / s[keep])) / norms
    q = sol[: len(sources)]
    params = sol[len(sources) :]
    A = sum(c * E for c, E in zip(params[:n_a], _a_basis(constraint)))
    d = params[n_a:]

    scale = outer.diameter
    coll = float(np.max(np.abs(M @ sol - rhs)))
    Mv, rv = system(val_o, val_i)
    mis = (Mv @ sol - rv).reshape(-1, 3)
    rho_fit = float(np.max(np.linalg.norm(mis, axis=1))) / scale
    return MfsFit(
        constraint=constraint,
        outer_sources=src_out,
        inner_sources=src_in,
        strengths=q,
        A=A,
        d=d,
        rho_fit=rho_fit,
        collocation_residual=coll / scale,
        rank=rank,
        n_collocation=len(col_o) + len(col_i),
        n_validation=len(val_o) + len(val_i),
        shell_volume=float(outer.volume - inner.volume),
        core_volume=float(inner.volume),
        diameter=float(scale),
        origin=origin,
        singular_values=s,
    )


# ---------------------------------------------------------------------------
# Radial structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialProfile:
    """Radial profile ``k r^2 / 6 + k1 / r + k2`` fitted to spherical averages.

    ``residual`` is the largest pointwise deviation of the field from the
    profile over all sampled points.
    """

    k: float
    k1: float
    k2: float
    residual: float
    scale: float
    n_radii: int

    @property
    def outer_radius(self) -> float:
        """Radius where the radial derivative of the fitted profile vanishes."""
        return (3.0 * self.k1 / self.k) ** (1.0 / 3.0)


def radial_fit(field: ShellField, center, radii: Sequence[float], n_directions: int = 2000) -> RadialProfile:
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or len(radii) < 3:
        raise InsufficientRadii(f"need at least 3 radii, got {radii.size}")
    center = np.asarray(center, dtype=float)
    dirs = fibonacci_sphere(n_directions)
    pts = center + radii[:, None, None] * dirs[None]
    if not np.all(field.in_domain(pts)):
        raise EvaluationOutsideDomain("sample spheres must lie in the shell")
    vals = np.asarray(field.value(pts))
    avg = vals.mean(axis=1)
    M = np.stack([radii**2 / 6.0, 1.0 / radii, np.ones_like(radii)], axis=1)
    coef = np.linalg.lstsq(M, avg, rcond=None)[0]
    # averages of any field with constant Laplacian fit exactly; the
    # pointwise deviation is what detects a non-radial field
    residual = float(np.max(np.abs(vals - (M @ coef)[:, None])))
    scale = abs(coef[0]) * float(radii.max()) ** 2
    return RadialProfile(float(coef[0]), float(coef[1]), float(coef[2]), residual, scale, len(radii))


def angular_derivatives(field: ShellField, points, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """``|x_j d_i w - x_i d_j w|`` for the three pairs ``(i, j)``, about ``center``."""
    x = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    g = field.gradient(np.asarray(points, dtype=float))
    out = [x[..., j] * g[..., i] - x[..., i] * g[..., j] for i, j in ((0, 1), (0, 2), (1, 2))]
    return np.abs(np.stack(out, axis=-1))


# ---------------------------------------------------------------------------
# Shape families
# ---------------------------------------------------------------------------

FAMILIES = ("core-distortion", "offset", "confocal")


def sweep_pair(family: str, t: float, subdivisions: int) -> tuple[TriMesh, TriMesh]:
    """Meshes for a family that is concentric spheres (1, 2) at ``t = 0``.

    ``core-distortion``: core axes ``(1, 1, 1 + 0.2 t)``.
    ``offset``: unit core shifted by ``0.3 t`` along x.
    ``confocal``: core axes ``(1, 1 + 0.5 t, 1 + t)`` with its confocal shell at ``rho0 = 3``.
    """
    if family == "core-distortion":
        outer = Ellipsoid.sphere(2.0)
        inner = Ellipsoid((1.0, 1.0, 1.0 + 0.2 * t))
    elif family == "offset":
        outer = Ellipsoid.sphere(2.0)
        inner = Ellipsoid.sphere(1.0, (0.3 * t, 0.0, 0.0))
    elif family == "confocal":
        inner = Ellipsoid((1.0, 1.0 + 0.5 * t, 1.0 + t))
        outer = inner.confocal(3.0)
    else:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    return mesh_ellipsoid(outer, subdivisions), mesh_ellipsoid(inner, subdivisions)


def isotropy_sweep(
    t_values: Sequence[float],
    subdivisions: int,
    family: str = "core-distortion",
    constraint: Constraint = "isotropic",
    n_sources: int | None = None,
    tol: Tolerances = DEFAULT,
) -> list[tuple[float, float]]:
    """Rows ``(t, rho_fit)``; a trend report, not a monotonicity claim."""
    rows = []
    for t in t_values:
        outer, inner = sweep_pair(family, float(t), subdivisions)
        fit = mfs_fit(outer, inner, constraint, n_sources, tol)
        rows.append((float(t), fit.rho_fit))
    return rows
