"""Ellipsoids, confocal coordinates and closed triangulated surfaces."""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _kernels
from .config import DEFAULT, Tolerances
from .errors import (
    DegenerateAxes,
    DegenerateCoordinates,
    InvalidMesh,
    NonFiniteInput,
    SubdivisionTooLarge,
)

__all__ = [
    "Ellipsoid",
    "ConfocalPair",
    "ConfocalCoords",
    "Region",
    "Classification",
    "confocal_coords",
    "confocal_roots",
    "confocal_rho",
    "classify",
    "TriMesh",
    "mesh_ellipsoid",
    "icosphere",
    "fibonacci_sphere",
    "read_off",
    "write_off",
]


# ---------------------------------------------------------------------------
# Analytic shapes
# ---------------------------------------------------------------------------


def _as_axes(c) -> np.ndarray:
    c = np.asarray(c, dtype=float).reshape(3)
    if not np.all(np.isfinite(c)):
        raise NonFiniteInput("semi-axes must be finite")
    if np.any(c <= 0.0):
        raise DegenerateAxes(f"semi-axes must be positive, got {c.tolist()}")
    return c


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError("points must have a trailing dimension of 3")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("points must be finite")
    return x


@dataclass(frozen=True)
class Ellipsoid:
    """Axis-aligned ellipsoid ``sum (x_j - center_j)^2 / c_j^2 = 1``."""

    semi_axes: tuple[float, float, float]
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "semi_axes", tuple(float(v) for v in _as_axes(self.semi_axes)))
        center = _as_points(np.asarray(self.center, dtype=float).reshape(3))
        object.__setattr__(self, "center", tuple(float(v) for v in center))

    @classmethod
    def sphere(cls, radius: float, center=(0.0, 0.0, 0.0)) -> "Ellipsoid":
        return cls((radius, radius, radius), center)

    @property
    def c(self) -> np.ndarray:
        return np.array(self.semi_axes)

    @property
    def volume(self) -> float:
        c1, c2, c3 = self.semi_axes
        return 4.0 * np.pi / 3.0 * c1 * c2 * c3

    @property
    def diameter(self) -> float:
        return 2.0 * max(self.semi_axes)

    def local(self, x) -> np.ndarray:
        return _as_points(x) - np.array(self.center)

    def implicit(self, x) -> np.ndarray:
        """``sum x_j^2/c_j^2 - 1`` after centring; negative inside."""
        y = self.local(x)
        return np.sum((y / self.c) ** 2, axis=-1) - 1.0

    def contains(self, x) -> np.ndarray:
        return self.implicit(x) < 0.0

    def confocal(self, rho: float) -> "Ellipsoid":
        """The member of this ellipsoid's confocal family at parameter ``rho``."""
        return Ellipsoid(tuple(np.sqrt(self.c**2 + rho)), self.center)

    def surface_points(self, directions) -> np.ndarray:
        """Map unit vectors radially onto the surface."""
        u = np.asarray(directions, dtype=float)
        u = u / np.linalg.norm(u, axis=-1, keepdims=True)
        scale = 1.0 / np.sqrt(np.sum((u / self.c) ** 2, axis=-1, keepdims=True))
        return np.array(self.center) + u * scale


@dataclass(frozen=True)
class ConfocalPair:
    """Core ``base`` and the confocal shell surface ``rho = rho0``."""

    base: Ellipsoid
    rho0: float

    def __post_init__(self):
        if not np.isfinite(self.rho0):
            raise NonFiniteInput("rho0 must be finite")
        if self.rho0 <= 0.0:
            raise ValueError(f"rho0 must be positive, got {self.rho0}")
        object.__setattr__(self, "rho0", float(self.rho0))

    @classmethod
    def from_axes(cls, c, rho0: float, center=(0.0, 0.0, 0.0)) -> "ConfocalPair":
        return cls(Ellipsoid(tuple(c), tuple(center)), rho0)

    @property
    def outer(self) -> Ellipsoid:
        return self.base.confocal(self.rho0)

    @property
    def inner(self) -> Ellipsoid:
        return self.base

    @property
    def shell_volume(self) -> float:
        return self.outer.volume - self.base.volume


class ConfocalCoords(NamedTuple):
    rho: float
    mu: float
    xi: float


# ---------------------------------------------------------------------------
# Confocal coordinates
# ---------------------------------------------------------------------------


def _p(s, cs, x2):
    f0, f1, f2 = cs[0] + s, cs[1] + s, cs[2] + s
    return f0 * (f1 * f2 - x2[1] * f2 - x2[2] * f1) - x2[0] * f1 * f2


def _cubic(s, cs, x2):
    """p(s) = prod(cs_j + s) - sum x_j^2 prod_{i != j}(cs_i + s), p'(s) and a backward-error scale.

    The scale is ``sum |a_k| |s|^k`` over the monomial coefficients of the
    monic cubic plus the termwise magnitude of the factored form that is
    actually evaluated; either alone can vanish at a root.
    """
    f0, f1, f2 = cs[0] + s, cs[1] + s, cs[2] + s
    p = f0 * f1 * f2 - x2[0] * f1 * f2 - x2[1] * f0 * f2 - x2[2] * f0 * f1
    dp = f1 * f2 + f0 * f2 + f0 * f1 - x2[0] * (f1 + f2) - x2[1] * (f0 + f2) - x2[2] * (f0 + f1)
    a2 = cs[0] + cs[1] + cs[2] - x2[0] - x2[1] - x2[2]
    a1 = (cs[0] * cs[1] + cs[0] * cs[2] + cs[1] * cs[2]
          - x2[0] * (cs[1] + cs[2]) - x2[1] * (cs[0] + cs[2]) - x2[2] * (cs[0] + cs[1]))
    a0 = cs[0] * cs[1] * cs[2] - x2[0] * cs[1] * cs[2] - x2[1] * cs[0] * cs[2] - x2[2] * cs[0] * cs[1]
    a = abs(s)
    scale = a**3 + abs(a2) * a**2 + abs(a1) * a + abs(a0)
    scale = scale + abs(f0 * f1 * f2) + x2[0] * abs(f1 * f2) + x2[1] * abs(f0 * f2) + x2[2] * abs(f0 * f1)
    return p, dp, scale


def _bisect(lo, hi, cs, x2, increasing: bool, max_iter: int):
    # p(lo) <= 0 <= p(hi) when increasing, reversed otherwise; endpoints may be roots
    shape = np.shape(x2[0])
    lo = np.array(np.broadcast_to(lo, shape), dtype=float)
    hi = np.array(np.broadcast_to(hi, shape), dtype=float)
    floor = 4.0 * np.finfo(float).eps * cs[2]
    for _ in range(max_iter):
        if np.all(hi - lo <= floor + 4.0 * np.finfo(float).eps * np.maximum(abs(lo), abs(hi))):
            break
        mid = 0.5 * (lo + hi)
        p = _p(mid, cs, x2)
        go_right = (p <= 0.0) if increasing else (p >= 0.0)
        np.copyto(lo, mid, where=go_right)
        np.copyto(hi, mid, where=~go_right)
    root = 0.5 * (lo + hi)
    # Newton polish, accepted only when it stays bracketed and lowers |p|
    for _ in range(2):
        p, dp, _ = _cubic(root, cs, x2)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = root - p / dp
        pc, _, _ = _cubic(cand, cs, x2)
        ok = np.isfinite(cand) & (cand >= lo) & (cand <= hi) & (abs(pc) < abs(p))
        root = np.where(ok, cand, root)
    return root


def _prepare(x, c):
    c = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(c)):
        raise NonFiniteInput("semi-axes must be finite")
    if np.any(c <= 0.0):
        raise DegenerateAxes("semi-axes must be positive")
    x = _as_points(x)
    c2 = np.broadcast_to(c**2, np.broadcast_shapes(c.shape, x.shape))
    x = np.broadcast_to(x, c2.shape)
    order = np.argsort(c2, axis=-1, kind="stable")
    cs = np.moveaxis(np.take_along_axis(c2, order, axis=-1), -1, 0)
    x2 = np.moveaxis(np.take_along_axis(x, order, axis=-1) ** 2, -1, 0)
    return cs, x2


def confocal_roots(x, c, tol: Tolerances = DEFAULT):
    """Vectorised ``(rho, mu, xi)`` for points ``x`` (centred) and semi-axes ``c``.

    The three roots of the defining cubic are located by bisection on the
    brackets ``[-c3^2, -c2^2]``, ``[-c2^2, -c1^2]``, ``[-c1^2, |x|^2 - c1^2]``
    (axes sorted ascending).  The cubic is evaluated in factored form, so a
    vanishing coordinate ``x_j`` simply turns the bracket endpoint into an
    exact root instead of producing a pole.
    """
    cs, x2 = _prepare(x, c)
    r2 = x2[0] + x2[1] + x2[2]
    it = tol.bisection_max_iter
    xi = _bisect(-cs[2], -cs[1], cs, x2, True, it)
    mu = _bisect(-cs[1], -cs[0], cs, x2, False, it)
    rho = _bisect(-cs[0], np.maximum(r2 - cs[0], -cs[0]), cs, x2, True, it)
    return rho, mu, xi


def confocal_rho(x, c, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Largest confocal coordinate only (the ellipsoidal 'radius')."""
    cs, x2 = _prepare(x, c)
    r2 = x2[0] + x2[1] + x2[2]
    return _bisect(-cs[0], np.maximum(r2 - cs[0], -cs[0]), cs, x2, True, tol.bisection_max_iter)


def cubic_residual(s, x, c):
    """Return ``(|p(s)|, scale)`` for checking a computed coordinate."""
    cs, x2 = _prepare(x, c)
    p, _, scale = _cubic(np.asarray(s, dtype=float), cs, x2)
    return abs(p), scale


def confocal_coords(x, c, tol: Tolerances = DEFAULT) -> ConfocalCoords:
    """Confocal coordinates of a single point relative to the ellipsoid's centre."""
    x = _as_points(np.asarray(x, dtype=float).reshape(3))
    c = _as_axes(c)
    rho, mu, xi = (float(v) for v in confocal_roots(x, c, tol))
    cs = np.sort(c**2)
    # rho and mu merge only on the focal ellipse (requires c1 < c2)
    if cs[1] - cs[0] > tol.geometry_residual * cs[2] and rho - mu <= tol.geometry_residual * cs[2]:
        raise DegenerateCoordinates(f"point {x.tolist()} lies on the focal set of axes {c.tolist()}")
    return ConfocalCoords(rho, mu, xi)


class Region(enum.Enum):
    CORE = "core"
    SHELL = "shell"
    EXTERIOR = "exterior"
    ON_BOUNDARY = "on_boundary"


@dataclass(frozen=True)
class Classification:
    region: Region
    which: str | None = None  # "inner" or "outer" for boundary points

    def __str__(self) -> str:
        if self.region is Region.ON_BOUNDARY:
            return f"OnBoundary({self.which})"
        return self.region.name.capitalize()


def classify(pair: ConfocalPair, x, tol: Tolerances = DEFAULT) -> Classification:
    x = pair.base.local(np.asarray(x, dtype=float).reshape(3))
    rho = float(confocal_rho(x, pair.base.c, tol))
    band = tol.boundary_band * max(1.0, max(pair.base.semi_axes) ** 2)
    if abs(rho) <= band:
        return Classification(Region.ON_BOUNDARY, "inner")
    if abs(rho - pair.rho0) <= band:
        return Classification(Region.ON_BOUNDARY, "outer")
    if rho < 0.0:
        return Classification(Region.CORE)
    if rho < pair.rho0:
        return Classification(Region.SHELL)
    return Classification(Region.EXTERIOR)


# ---------------------------------------------------------------------------
# Triangle meshes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Closed, outward-oriented triangulated surface.

    Construction validates closure (``sum area * normal = 0``), positive areas
    and a positive enclosed volume.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or t.ndim != 2 or t.shape[1] != 3:
            raise InvalidMesh("vertices must be (n, 3) and triangles (m, 3)")
        if not np.all(np.isfinite(v)):
            raise NonFiniteInput("mesh vertices must be finite")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise InvalidMesh("triangle index out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if self.validate:
            self.check()

    def check(self) -> None:
        if np.any(self.areas <= 0.0):
            raise InvalidMesh("degenerate triangle with non-positive area")
        total = self.areas.sum()
        closure = np.linalg.norm((self.areas[:, None] * self.normals).sum(axis=0))
        if closure > 1e-12 * total:
            raise InvalidMesh(f"surface is not closed: |sum a*n| = {closure:.3e}")
        if self.volume <= 0.0:
            raise InvalidMesh("enclosed volume is not positive (inward orientation?)")

    @cached_property
    def corners(self) -> np.ndarray:
        return self.vertices[self.triangles]

    @cached_property
    def _cross(self) -> np.ndarray:
        p = self.corners
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        return self._cross / np.linalg.norm(self._cross, axis=1, keepdims=True)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def volume(self) -> float:
        """Enclosed volume from the divergence theorem, exact for flat facets."""
        return float(np.sum(np.einsum("ij,ij->i", self.centroids, self.normals) * self.areas) / 3.0)

    @cached_property
    def centroid(self) -> np.ndarray:
        """Volume centroid of the enclosed solid (signed tetrahedra about the origin)."""
        p = self.corners
        vol6 = np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2]))
        return (vol6[:, None] * p.sum(axis=1)).sum(axis=0) / (4.0 * vol6.sum())

    @cached_property
    def inertia_ellipsoid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(center, rotation, semi_axes)`` of the solid ellipsoid with the same second moments.

        Columns of ``rotation`` are the principal directions, axes ascending.
        """
        p = self.corners
        a, b, c = p[:, 0], p[:, 1], p[:, 2]
        vol6 = np.einsum("ij,ij->i", a, np.cross(b, c))
        s = a + b + c
        outer = lambda u: np.einsum("ni,nj->nij", u, u)  # noqa: E731
        M = np.einsum("n,nij->ij", vol6, outer(a) + outer(b) + outer(c) + outer(s)) / 120.0
        vol = vol6.sum() / 6.0
        ctr = self.centroid
        w, R = np.linalg.eigh(M / vol - np.outer(ctr, ctr))
        return ctr, R, np.sqrt(5.0 * np.maximum(w, 0.0))

    @cached_property
    def diameter(self) -> float:
        """Largest distance between two vertices (searched over convex-hull vertices)."""
        from scipy.spatial import ConvexHull

        try:
            pts = self.vertices[ConvexHull(self.vertices).vertices]
        except Exception:  # qhull rejects flat or tiny inputs; fall back to all vertices
            pts = self.vertices
        pts = pts - pts.mean(axis=0)
        sq = np.sum(pts * pts, axis=1)
        best = 0.0
        for start in range(0, len(pts), 2048):
            block = pts[start : start + 2048]
            d2 = sq[start : start + 2048, None] + sq[None, :] - 2.0 * (block @ pts.T)
            best = max(best, float(d2.max()))
        return float(np.sqrt(max(best, 0.0)))

    @cached_property
    def panel_size(self) -> np.ndarray:
        """Longest edge of each triangle."""
        p = self.corners
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    @cached_property
    def aspect_ratios(self) -> np.ndarray:
        """Longest edge squared over twice the area (1.15 for equilateral)."""
        return self.panel_size**2 / (2.0 * self.areas)

    def gauss_identity(self) -> float:
        """``sum centroid . n * area``; equals three times the volume."""
        return float(np.sum(np.einsum("ij,ij->i", self.centroids, self.normals) * self.areas))

    def winding_numbers(self, points) -> np.ndarray:
        return _kernels.winding_numbers(np.asarray(points, dtype=float).reshape(-1, 3), self.corners)

    def contains(self, points) -> np.ndarray:
        """Point-in-solid test by generalised winding number."""
        return self.winding_numbers(points) > 0.5

    def translated(self, offset) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(offset, dtype=float), self.triangles)

    def scaled(self, factor: float, about=None) -> "TriMesh":
        about = self.centroid if about is None else np.asarray(about, dtype=float)
        return TriMesh(about + factor * (self.vertices - about), self.triangles)

    def to_off(self) -> str:
        buf = io.StringIO()
        buf.write("OFF\n")
        buf.write(f"{len(self.vertices)} {len(self.triangles)} 0\n")
        for x, y, z in self.vertices.tolist():
            buf.write(f"{x!r} {y!r} {z!r}\n")
        for a, b, c in self.triangles.tolist():
            buf.write(f"3 {a} {b} {c}\n")
        return buf.getvalue()


def write_off(mesh: TriMesh, path) -> None:
    Path(path).write_text(mesh.to_off())


def read_off(path) -> TriMesh:
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise InvalidMesh(f"{path}: missing OFF header")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4
        verts = np.array(tokens[pos : pos + 3 * nv], dtype=float).reshape(nv, 3)
        pos += 3 * nv
        tris = []
        for _ in range(nf):
            k = int(tokens[pos])
            if k != 3:
                raise InvalidMesh(f"{path}: only triangular faces are supported")
            tris.append([int(t) for t in tokens[pos + 1 : pos + 4]])
            pos += 4
    except (ValueError, IndexError) as exc:
        raise InvalidMesh(f"{path}: malformed OFF body ({exc})") from None
    return TriMesh(verts, np.array(tris, dtype=np.int64).reshape(-1, 3))


# ---------------------------------------------------------------------------
# Icosphere
# ---------------------------------------------------------------------------

MAX_SUBDIVISIONS = 7


def _icosahedron():
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def icosphere(subdivisions: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit-sphere vertices and outward triangles; ``10 * 4**s + 2`` vertices.

    Vertices of coarser levels keep their indices, so the first
    ``10 * 4**k + 2`` vertices form a quasi-uniform level-``k`` subset.
    """
    if not 0 <= subdivisions <= MAX_SUBDIVISIONS:
        raise SubdivisionTooLarge(f"subdivisions must be in [0, {MAX_SUBDIVISIONS}], got {subdivisions}")
    verts, faces = _icosahedron()
    verts = list(verts)
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            idx = cache.get(key)
            if idx is None:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                idx = cache[key] = len(verts) - 1
            return idx

        new = np.empty((4 * len(faces), 3), dtype=np.int64)
        for k, (a, b, c) in enumerate(faces):
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new[4 * k : 4 * k + 4] = [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    return np.array(verts), faces


def mesh_ellipsoid(e: Ellipsoid, subdivisions: int) -> TriMesh:
    """Icosphere carried onto ``e`` by the axis scaling ``u -> center + c * u``.

    Vertices lie exactly on the surface.  The affine map keeps the relative
    volume defect of the unit icosphere, so refinement behaves identically
    for every axis ratio.
    """
    u, faces = icosphere(subdivisions)
    return TriMesh(np.array(e.center) + u * e.c, faces)


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` quasi-uniform unit vectors on a golden-angle spiral."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(1.0 - z * z)
    theta = np.pi * (3.0 - np.sqrt(5.0)) * k
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])
