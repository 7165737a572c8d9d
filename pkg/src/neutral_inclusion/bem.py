"""Boundary-integral solver for a coated inclusion in a uniform field.

The potential is ``u = a.x + S_D[phi_D] + S_O[phi_O]`` with single layers on
the core surface D and the shell's outer surface O.  Flux continuity at
panel centroids gives the second-kind system ``(Lambda - K) phi = a.n`` where
``K`` is the adjoint double layer and ``Lambda`` is a per-surface contrast.

Far interactions use the centroid rule (compiled kernel); pairs closer than
``bem_near_factor`` panel sizes are replaced by exact flat-triangle integrals,
and self terms are fixed by the Gauss identity for the transposed operator.
Systems are solved either by dense LU or in a subspace shared by every
medium and field direction of a family, grown from block-split residuals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse import csr_matrix
from scipy.spatial import cKDTree

from . import _kernels
from .analytic import LayeredMedium
from .config import DEFAULT, Tolerances
from .errors import ContrastSingular, ConvergenceFailure, InvalidMesh
from .geometry import TriMesh, fibonacci_sphere
from .overdet import check_shell

__all__ = [
    "panel_gradient_integrals",
    "contrast",
    "TransmissionOperator",
    "TransmissionSolution",
    "solve_transmission",
    "solve_family",
    "NeutralityDefect",
    "neutrality_defect",
    "DipoleFit",
    "fit_dipole",
]

_FOUR_PI = 4.0 * math.pi


# ---------------------------------------------------------------------------
# Exact flat-triangle integrals
# ---------------------------------------------------------------------------


def panel_gradient_integrals(x, tri) -> np.ndarray:
    """``int_T (x - y) / |x - y|^3 dS_y`` for points ``x`` (P, 3) and triangles ``tri`` (P, 3, 3).

    Normal part from the signed solid angle, in-plane part from the edge
    line integrals of ``1/|x - y|``.  Zero for ``x`` inside its own flat panel.
    """
    x = np.asarray(x, dtype=float)
    tri = np.asarray(tri, dtype=float)
    a, b, c = (tri[:, k] - x for k in range(3))
    la, lb, lc = (np.linalg.norm(v, axis=1) for v in (a, b, c))
    det = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = (
        la * lb * lc
        + np.einsum("ij,ij->i", a, b) * lc
        + np.einsum("ij,ij->i", a, c) * lb
        + np.einsum("ij,ij->i", b, c) * la
    )
    solid = 2.0 * np.arctan2(det, den)
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    out = -solid[:, None] * n

    rel = (a, b, c)
    dist = (la, lb, lc)
    for k in range(3):
        p0, p1 = rel[k], rel[(k + 1) % 3]
        r0, r1 = dist[k], dist[(k + 1) % 3]
        edge = p1 - p0
        length = np.linalg.norm(edge, axis=1)
        t = edge / length[:, None]
        # outward in-plane normal of the edge for counter-clockwise vertices
        m = np.cross(t, n)
        s0 = np.einsum("ij,ij->i", p0, t)
        s1 = np.einsum("ij,ij->i", p1, t)
        # (r1 + s1)(r1 - s1) == (r0 + s0)(r0 - s0); pick the well-conditioned ratio
        fwd = s0 + s1 >= 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            log = np.where(
                fwd,
                np.log((r1 + s1) / (r0 + s0)),
                np.log((r0 - s0) / (r1 - s1)),
            )
        out += m * log[:, None]
    return out


# ---------------------------------------------------------------------------
# Operator
# ---------------------------------------------------------------------------


def contrast(inside: float, outside: float) -> float:
    """``(inside + outside) / (2 (inside - outside))``; 1/2 for a perfect conductor inside."""
    if math.isinf(inside):
        return 0.5
    if inside == outside:
        raise ContrastSingular(f"equal conductivities {inside} across an interface: contrast undefined")
    return (inside + outside) / (2.0 * (inside - outside))


class TransmissionOperator:
    """Discrete adjoint double layer on the union of core and shell panels.

    Panels ``[0, n_core)`` belong to the core surface, the rest to the outer
    surface.  ``apply`` evaluates ``K phi``.
    """

    def __init__(self, core: TriMesh, shell: TriMesh, tol: Tolerances = DEFAULT):
        for name, mesh in (("core", core), ("shell", shell)):
            worst = float(mesh.aspect_ratios.max())
            if worst > tol.bem_max_aspect:
                raise InvalidMesh(f"{name} mesh has a sliver panel (aspect ratio {worst:.3g} > {tol.bem_max_aspect})")
        check_shell(shell, core)
        self.core = core
        self.shell = shell
        self.tol = tol
        self.n_core = core.n_triangles
        self.centroids = np.ascontiguousarray(np.vstack([core.centroids, shell.centroids]))
        self.normals = np.ascontiguousarray(np.vstack([core.normals, shell.normals]))
        self.areas = np.concatenate([core.areas, shell.areas])
        self.corners = np.vstack([core.corners, shell.corners])
        self.n = len(self.areas)
        self.matvecs = 0.0
        self._near = self._near_correction()
        self.diagonal = self._gauss_diagonal()

    @property
    def core_slice(self) -> slice:
        return slice(0, self.n_core)

    @property
    def shell_slice(self) -> slice:
        return slice(self.n_core, self.n)

    def _near_correction(self) -> csr_matrix:
        h = float(max(self.core.panel_size.max(), self.shell.panel_size.max()))
        tree = cKDTree(self.centroids)
        pairs = tree.query_pairs(self.tol.bem_near_factor * h, output_type="ndarray")
        if len(pairs) == 0:
            return csr_matrix((self.n, self.n))
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        vals = np.empty(len(rows))
        step = 1 << 18
        for s in range(0, len(rows), step):
            i, j = rows[s : s + step], cols[s : s + step]
            x = self.centroids[i]
            exact = np.einsum("ij,ij->i", self.normals[i], panel_gradient_integrals(x, self.corners[j]))
            d = x - self.centroids[j]
            r = np.linalg.norm(d, axis=1)
            approx = self.areas[j] * np.einsum("ij,ij->i", d, self.normals[i]) / r**3
            vals[s : s + step] = (exact - approx) / _FOUR_PI
        return csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def _gauss_diagonal(self) -> np.ndarray:
        """Self terms making area-weighted column sums equal 1/2 on each surface.

        The transpose of the discrete operator is then a double layer that
        reproduces the constant exactly, which removes the first-order error
        of the centroid rule just outside the near zone.
        """
        diag = np.empty(self.n)
        for sl in (self.core_slice, self.shell_slice):
            x, n, a = self.centroids[sl], self.normals[sl], self.areas[sl]
            far = _kernels.double_layer(x, x, n, a)
            near = self._near[sl, sl].T @ a / a
            diag[sl] = 0.5 - far - near
        return diag

    def apply(self, phi: np.ndarray, support: slice | None = None) -> np.ndarray:
        """``K phi``; with ``support`` only those panels carry charge (cost scales with it)."""
        sl = support or slice(0, self.n)
        w = self.areas[sl] * phi[sl]
        out = _kernels.adjoint_double_layer(self.centroids, self.normals, self.centroids[sl], w)
        masked = np.zeros(self.n)
        masked[sl] = phi[sl]
        self.matvecs += (sl.stop - sl.start) / self.n
        return out + self._near @ masked + self.diagonal * masked

    def dense(self) -> np.ndarray:
        """Assembled ``K`` (for small meshes and cross-checks)."""
        K = np.empty((self.n, self.n))
        step = max(1, 2_000_000 // self.n)
        for s in range(0, self.n, step):
            x = self.centroids[s : s + step]
            d = x[:, None, :] - self.centroids[None, :, :]
            r2 = np.einsum("ijk,ijk->ij", d, d)
            num = np.einsum("ijk,ik->ij", d, self.normals[s : s + step])
            with np.errstate(divide="ignore", invalid="ignore"):
                K[s : s + step] = np.where(r2 > 0, num / (r2 * np.sqrt(r2)), 0.0) * self.areas / _FOUR_PI
        return K + self._near.toarray() + np.diag(self.diagonal)

    def single_layer(self, x, phi) -> np.ndarray:
        return _kernels.single_layer(np.atleast_2d(x), self.centroids, self.areas * phi)

    def normal_field(self, a) -> np.ndarray:
        return self.normals @ np.asarray(a, dtype=float)


# ---------------------------------------------------------------------------
# Systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _System:
    lam_core: float
    lam_shell: float
    conducting_core: bool

    @classmethod
    def from_medium(cls, medium: LayeredMedium) -> "_System":
        if not medium.is_isotropic:
            raise ValueError("the boundary-integral solver needs an isotropic matrix")
        sm = medium.sigma_m[0]
        lam_shell = contrast(medium.sigma_s, sm)
        if medium.sigma_c == 0.0:
            lam_core = -0.5
        else:
            lam_core = contrast(medium.sigma_c, medium.sigma_s)
        return cls(lam_core, lam_shell, math.isinf(medium.sigma_c))

    def diag(self, op: TransmissionOperator) -> np.ndarray:
        lam = np.full(op.n, self.lam_shell)
        lam[op.core_slice] = self.lam_core
        return lam

    def rank_one(self, op: TransmissionOperator, phi: np.ndarray) -> np.ndarray:
        """Zero-total-charge constraint on a perfectly conducting core."""
        out = np.zeros_like(phi)
        if self.conducting_core:
            sl = op.core_slice
            out[sl] = (op.areas[sl] @ phi[sl]) / op.areas[sl].sum()
        return out


@dataclass(frozen=True, eq=False)
class TransmissionSolution:
    operator: TransmissionOperator = field(repr=False)
    medium: LayeredMedium
    direction: np.ndarray
    density: np.ndarray
    relative_residual: float

    @property
    def core_density(self) -> np.ndarray:
        return self.density[self.operator.core_slice]

    @property
    def shell_density(self) -> np.ndarray:
        return self.density[self.operator.shell_slice]

    @property
    def charges(self) -> tuple[float, float]:
        op = self.operator
        return (
            float(op.areas[op.core_slice] @ self.core_density),
            float(op.areas[op.shell_slice] @ self.shell_density),
        )

    def perturbation(self, x) -> np.ndarray:
        """``u(x) - a.x`` (centroid-rule single layers; accurate away from the surfaces)."""
        return self.operator.single_layer(x, self.density)

    def potential(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x @ self.direction + self.perturbation(x)


def _lstsq_residual(M: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.linalg.lstsq(M, b, rcond=None)[0]
    return y, b - M @ y


class _SharedSubspace:
    """Block-split subspace reused across contrasts and right-hand sides.

    Every basis column is supported on one surface, so ``Lambda V`` is a
    column scaling and ``K V`` is stored once.
    """

    def __init__(self, op: TransmissionOperator):
        self.op = op
        self.V = np.zeros((op.n, 0))
        self.KV = np.zeros((op.n, 0))
        self.on_core = np.zeros(0, dtype=bool)

    def extend(self, vectors: Sequence[np.ndarray]) -> int:
        op = self.op
        added = 0
        for v in vectors:
            for sl, is_core in ((op.core_slice, True), (op.shell_slice, False)):
                part = np.zeros(op.n)
                part[sl] = v[sl]
                for _ in range(2):
                    same = self.V[:, self.on_core == is_core]
                    part -= same @ (same.T @ part)
                norm = np.linalg.norm(part)
                if norm <= 1e-14 * max(np.linalg.norm(v[sl]), 1e-300) or norm == 0.0:
                    continue
                part /= norm
                self.V = np.column_stack([self.V, part])
                self.KV = np.column_stack([self.KV, op.apply(part, sl)])
                self.on_core = np.append(self.on_core, is_core)
                added += 1
        return added

    def matrix(self, system: _System) -> np.ndarray:
        lam = np.where(self.on_core, system.lam_core, system.lam_shell)
        M = self.V * lam - self.KV
        if system.conducting_core:
            M = M + np.column_stack([system.rank_one(self.op, c) for c in self.V.T]) if self.V.shape[1] else M
        return M


def _solve_shared(op: TransmissionOperator, systems: list[_System], rhs: list[np.ndarray]):
    tol = op.tol
    space = _SharedSubspace(op)
    space.extend(rhs)
    jobs = [(s, b) for s in systems for b in rhs]
    while True:
        worst, worst_res, results = -1.0, None, []
        for s, b in jobs:
            y, r = _lstsq_residual(space.matrix(s), b)
            rel = float(np.linalg.norm(r) / np.linalg.norm(b))
            results.append((space.V @ y, rel))
            if rel > worst:
                worst, worst_res = rel, r
        if worst <= tol.bem_rtol:
            return results
        if space.V.shape[1] >= tol.bem_max_basis:
            raise ConvergenceFailure(
                f"shared subspace reached {space.V.shape[1]} columns with relative residual {worst:.3g}"
            )
        if space.extend([worst_res]) == 0:
            raise ConvergenceFailure(f"subspace stagnated at relative residual {worst:.3g}")


def _solve_dense(op: TransmissionOperator, systems: list[_System], rhs: list[np.ndarray]):
    K = op.dense()
    results = []
    for s in systems:
        M = np.diag(s.diag(op)) - K
        if s.conducting_core:
            sl = op.core_slice
            M[sl, sl] += op.areas[sl][None, :] / op.areas[sl].sum()
        lu = lu_factor(M)
        for b in rhs:
            phi = lu_solve(lu, b)
            results.append((phi, float(np.linalg.norm(M @ phi - b) / np.linalg.norm(b))))
    return results


def solve_family(
    core: TriMesh,
    shell: TriMesh,
    media: Sequence[LayeredMedium],
    directions: Sequence = ((1.0, 0.0, 0.0),),
    tol: Tolerances = DEFAULT,
    method: str = "auto",
    operator: TransmissionOperator | None = None,
) -> list[list[TransmissionSolution]]:
    """Solutions indexed ``[medium][direction]`` sharing one operator.

    ``method`` is ``"dense"`` (LU on the assembled matrix), ``"subspace"`` or
    ``"auto"`` (dense up to 3000 panels).
    """
    op = operator or TransmissionOperator(core, shell, tol)
    systems = [_System.from_medium(m) for m in media]
    dirs = [np.asarray(a, dtype=float) for a in directions]
    rhs = [op.normal_field(a) for a in dirs]
    if method == "auto":
        method = "dense" if op.n <= 3000 else "subspace"
    if method == "dense":
        flat = _solve_dense(op, systems, rhs)
    elif method == "subspace":
        flat = _solve_shared(op, systems, rhs)
    else:
        raise ValueError(f"unknown method {method!r}")
    out = []
    it = iter(flat)
    for m in media:
        row = []
        for a in dirs:
            phi, rel = next(it)
            row.append(TransmissionSolution(op, m, a, phi, rel))
        out.append(row)
    return out


def solve_transmission(
    core: TriMesh,
    shell: TriMesh,
    medium: LayeredMedium,
    a=(1.0, 0.0, 0.0),
    tol: Tolerances = DEFAULT,
    method: str = "auto",
) -> TransmissionSolution:
    return solve_family(core, shell, [medium], [a], tol, method)[0][0]


# ---------------------------------------------------------------------------
# Far field
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DipoleFit:
    """Least-squares fit of ``q / |x| + P.x / |x|^3`` to far-field samples."""

    monopole: float
    dipole: np.ndarray
    max_remainder: float
    max_dipole_term: float


def fit_dipole(points: np.ndarray, values: np.ndarray, center) -> DipoleFit:
    x = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    r = np.linalg.norm(x, axis=1)
    M = np.column_stack([1.0 / r, x / r[:, None] ** 3])
    coef = np.linalg.lstsq(M, values, rcond=None)[0]
    dip = M[:, 1:] @ coef[1:]
    return DipoleFit(
        float(coef[0]),
        coef[1:],
        float(np.max(np.abs(values - M @ coef))),
        float(np.max(np.abs(dip))),
    )


def probe_points(sol_or_op, tol: Tolerances = DEFAULT) -> tuple[np.ndarray, np.ndarray]:
    op = sol_or_op.operator if isinstance(sol_or_op, TransmissionSolution) else sol_or_op
    center = op.shell.centroid
    radius = tol.bem_probe_scale * op.shell.diameter
    return center + radius * fibonacci_sphere(tol.bem_probe_count), center


@dataclass(frozen=True)
class NeutralityDefect:
    defect: float
    per_direction: tuple[float, ...]
    n_panels: int
    probe_radius: float
    dipoles: tuple[tuple[float, float, float], ...]

    def as_dict(self) -> dict:
        return {
            "defect": self.defect,
            "per_direction": list(self.per_direction),
            "n_panels": self.n_panels,
            "probe_radius": self.probe_radius,
            "dipoles": [list(d) for d in self.dipoles],
        }


def _direction_defect(sol: TransmissionSolution, probes: np.ndarray, center: np.ndarray) -> tuple[float, np.ndarray]:
    pert = sol.perturbation(probes)
    r2 = np.sum((probes - center) ** 2, axis=1)
    return float(np.max(np.abs(pert) * r2) / np.linalg.norm(sol.direction)), pert


def neutrality_defect(solutions, tol: Tolerances = DEFAULT) -> NeutralityDefect:
    """``max |u - a.x| |x|^2 / |a|`` over the probe sphere, per field direction.

    Accepts one solution or a sequence (one per direction); the defect is the
    largest per-direction value.
    """
    sols = [solutions] if isinstance(solutions, TransmissionSolution) else list(solutions)
    probes, center = probe_points(sols[0], tol)
    per, dipoles = [], []
    for s in sols:
        d, pert = _direction_defect(s, probes, center)
        per.append(d)
        dipoles.append(tuple(float(v) for v in fit_dipole(probes, pert, center).dipole))
    radius = float(np.linalg.norm(probes[0] - center))
    return NeutralityDefect(max(per), tuple(per), sols[0].operator.n, radius, tuple(dipoles))
