"""Closed-form solutions.

* The confocal-ellipsoid solution of the over-determined shell problem
  ``Lap w = k``, ``grad w = 0`` on the outer surface, ``grad w = A x + d`` on
  the inner surface.
* The coated-sphere transmission problem for a uniform applied field, in the
  finite, insulating (sigma_c = 0) and perfectly conducting (sigma_c = inf)
  core regimes, together with the neutral matrix conductivity and the scalar
  shell potential obtained from the neutral solution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import DEFAULT, Tolerances
from .elliptic import EllipticContext, i0, phi_all
from .errors import (
    AssumptionViolated,
    EvaluationOutsideDomain,
    NeutralityVacuous,
    NoPositiveRoot,
    SingularInterfaceSystem,
    StencilLeavesShell,
)
from .geometry import ConfocalPair, confocal_rho

__all__ = [
    "LayeredMedium",
    "ShellField",
    "FunctionField",
    "OverdetSolution",
    "overdet_solution",
    "laplacian_probe",
    "SphereTransmission",
    "sphere_transmission",
    "neutral_sigma_m",
    "RadialShellField",
    "NeutralShell",
    "neutral_shell_field",
]


# ---------------------------------------------------------------------------
# Media
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayeredMedium:
    """Core / shell / matrix conductivities.

    ``sigma_c`` may be ``0.0`` (insulating core) or ``math.inf`` (perfectly
    conducting core).  ``sigma_m`` is the diagonal of the matrix tensor.
    """

    sigma_c: float
    sigma_s: float
    sigma_m: tuple[float, float, float]

    def __post_init__(self):
        sm = np.broadcast_to(np.asarray(self.sigma_m, dtype=float), (3,))
        if math.isnan(self.sigma_c) or self.sigma_c < 0.0:
            raise ValueError(f"sigma_c must lie in [0, inf], got {self.sigma_c}")
        if not (math.isfinite(self.sigma_s) and self.sigma_s > 0.0):
            raise ValueError(f"sigma_s must be positive and finite, got {self.sigma_s}")
        if not (np.all(np.isfinite(sm)) and np.all(sm > 0.0)):
            raise ValueError(f"sigma_m entries must be positive and finite, got {sm.tolist()}")
        object.__setattr__(self, "sigma_c", float(self.sigma_c))
        object.__setattr__(self, "sigma_s", float(self.sigma_s))
        object.__setattr__(self, "sigma_m", tuple(float(v) for v in sm))

    @classmethod
    def isotropic(cls, sigma_c: float, sigma_s: float, sigma_m: float) -> "LayeredMedium":
        return cls(sigma_c, sigma_s, (sigma_m,) * 3)

    @property
    def is_isotropic(self) -> bool:
        return self.sigma_m[0] == self.sigma_m[1] == self.sigma_m[2]

    @property
    def vacuous(self) -> bool:
        """True when the core matches the shell and neutrality says nothing."""
        return self.sigma_c == self.sigma_s

    @property
    def alpha(self) -> float:
        return self.sigma_c / self.sigma_s - 1.0

    @property
    def beta(self) -> np.ndarray:
        return np.array(self.sigma_m) / self.sigma_s - 1.0

    @property
    def B(self) -> np.ndarray:
        beta = self.beta
        if np.any(beta == 0.0):
            raise ValueError("B is undefined when sigma_m equals sigma_s along some axis")
        return np.diag(1.0 / beta)


# ---------------------------------------------------------------------------
# Fields on the shell
# ---------------------------------------------------------------------------


class ShellField:
    """A scalar field evaluatable on (a neighbourhood of) a shell.

    Subclasses implement ``value`` and ``gradient``; ``laplacian`` defaults to
    a finite-difference probe.  ``in_domain`` reports where the field is
    meaningful and is used by stencil checks.
    """

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def laplacian(self, x) -> np.ndarray:
        return laplacian_probe(self, x, 1e-3, check_domain=False)

    def in_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape[:-1], dtype=bool)


class FunctionField(ShellField):
    """Wrap plain callables as a :class:`ShellField`."""

    def __init__(self, value: Callable, gradient: Callable | None = None, laplacian: Callable | None = None):
        self._value = value
        self._gradient = gradient
        self._laplacian = laplacian

    def value(self, x):
        return self._value(np.asarray(x, dtype=float))

    def gradient(self, x):
        if self._gradient is None:
            raise NotImplementedError("no gradient supplied")
        return self._gradient(np.asarray(x, dtype=float))

    def laplacian(self, x):
        if self._laplacian is None:
            return super().laplacian(x)
        return self._laplacian(np.asarray(x, dtype=float))


def laplacian_probe(field: ShellField, x, h: float, check_domain: bool = True) -> np.ndarray:
    """Seven-point central estimate of ``Lap w`` at ``x`` (exact on quadratics)."""
    x = np.asarray(x, dtype=float)
    offsets = h * np.vstack([np.eye(3), -np.eye(3)])
    stencil = x[..., None, :] + offsets
    if check_domain:
        inside = np.asarray(field.in_domain(stencil)) & np.asarray(field.in_domain(x))[..., None]
        if not np.all(inside):
            raise StencilLeavesShell(f"stencil with h={h} leaves the field's domain")
    centre = np.asarray(field.value(x))
    around = np.asarray(field.value(stencil)).sum(axis=-1)
    return (around - 6.0 * centre) / (h * h)


@dataclass(frozen=True, eq=False)
class OverdetSolution(ShellField):
    """Explicit solution on a confocal pair, scaled as ``C * w0 + E``.

    ``w0(x) = i0(rho)/2 - sum phi_j(rho) y_j^2 / 2 + sum phi_j(rho0) y_j^2 / 2``
    with ``y`` the coordinates relative to the ellipsoid centre.
    """

    pair: ConfocalPair
    scale: float = 1.0
    offset: float = 0.0
    tol: Tolerances = field(default=DEFAULT, repr=False)
    ctx: EllipticContext = field(init=False, repr=False)
    phi0: np.ndarray = field(init=False, repr=False)
    phi_outer: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ctx = EllipticContext.from_axes(self.pair.base.c, self.tol)
        object.__setattr__(self, "ctx", ctx)
        object.__setattr__(self, "phi0", phi_all(ctx, 0.0))
        object.__setattr__(self, "phi_outer", phi_all(ctx, self.pair.rho0))

    @property
    def k(self) -> float:
        return self.scale * float(self.phi_outer.sum())

    @property
    def A(self) -> np.ndarray:
        return self.scale * np.diag(self.phi_outer - self.phi0)

    @property
    def d(self) -> np.ndarray:
        return -self.A @ np.array(self.pair.base.center)

    @property
    def C(self) -> float:
        return self.scale

    @property
    def E(self) -> float:
        return self.offset

    def scaled(self, C: float, E: float = 0.0) -> "OverdetSolution":
        """The solution ``C * w + E`` (same geometry, k, A, d scaled by C)."""
        return OverdetSolution(self.pair, self.scale * C, self.offset * C + E, self.tol)

    def _local(self, x):
        y = self.pair.base.local(x)
        rho = confocal_rho(y, self.pair.base.c, self.tol)
        if np.any(rho <= -min(self.ctx.c2)):
            raise EvaluationOutsideDomain("field is singular on the focal set of the core")
        return y, rho

    def rho(self, x) -> np.ndarray:
        return self._local(x)[1]

    def in_domain(self, x):
        rho = confocal_rho(self.pair.base.local(x), self.pair.base.c, self.tol)
        return (rho >= 0.0) & (rho <= self.pair.rho0)

    def value(self, x):
        y, rho = self._local(x)
        ph = phi_all(self.ctx, rho)
        w0 = 0.5 * i0(self.ctx, rho) - 0.5 * np.sum(ph * y * y, axis=-1) + 0.5 * np.sum(self.phi_outer * y * y, axis=-1)
        return self.scale * w0 + self.offset

    def gradient(self, x):
        y, rho = self._local(x)
        return self.scale * (self.phi_outer - phi_all(self.ctx, rho)) * y

    def laplacian(self, x):
        # divergence of the gradient above collapses via d(rho)/dx; the sum
        # identity of the phi_j is what makes this constant
        _, rho = self._local(x)
        ph = phi_all(self.ctx, rho)
        g = (self.ctx.c2[0] + rho) * (self.ctx.c2[1] + rho) * (self.ctx.c2[2] + rho)
        return self.scale * (self.phi_outer.sum() - ph.sum(axis=-1) + 2.0 / np.sqrt(g))


def overdet_solution(pair: ConfocalPair, tol: Tolerances = DEFAULT) -> OverdetSolution:
    return OverdetSolution(pair, tol=tol)


# ---------------------------------------------------------------------------
# Coated spheres
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SphereTransmission:
    """Dipolar (l = 1) solution of the coated-sphere problem for field ``e_axis``.

    ``u = core_slope * x_j`` in the core, ``(shell_slope + shell_dipole / r^3) x_j``
    in the shell and ``x_j + exterior_dipole * x_j / r^3`` outside.
    For ``sigma_c = inf`` the core is held at ``core_constant``.
    """

    r_i: float
    r_e: float
    medium: LayeredMedium
    axis: int
    core_slope: float
    shell_slope: float
    shell_dipole: float
    exterior_dipole: float
    core_constant: float
    residual: float

    def potential(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        xj = x[..., self.axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            shell = (self.shell_slope + self.shell_dipole / r**3) * xj
            outside = xj + self.exterior_dipole * xj / r**3
        core = self.core_constant + self.core_slope * xj if math.isinf(self.medium.sigma_c) else self.core_slope * xj
        return np.where(r < self.r_i, core, np.where(r < self.r_e, shell, outside))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)[..., None]
        e = np.zeros(3)
        e[self.axis] = 1.0
        xj = x[..., self.axis][..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            shell = (self.shell_slope + self.shell_dipole / r**3) * e - 3.0 * self.shell_dipole * xj * x / r**5
            outside = (1.0 + self.exterior_dipole / r**3) * e - 3.0 * self.exterior_dipole * xj * x / r**5
        core = self.core_slope * e + 0.0 * x
        return np.where(r < self.r_i, core, np.where(r < self.r_e, shell, outside))


def _solve_interface(M: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, float]:
    if np.linalg.cond(M) > 1e14:
        raise SingularInterfaceSystem("interface system is singular for these conductivities")
    sol = np.linalg.solve(M, rhs)
    return sol, float(np.max(np.abs(M @ sol - rhs)))


def sphere_transmission(r_i: float, r_e: float, medium: LayeredMedium, axis: int = 0) -> SphereTransmission:
    """Solve the coated-sphere interface conditions for the uniform field ``e_axis``.

    Unknowns are the l = 1 coefficients; the rows are potential continuity and
    flux continuity on ``r = r_i`` and ``r = r_e``.  A perfectly conducting core
    replaces the two inner rows by ``u = const`` (the constant is zero since an
    l = 1 field carries no net flux); an insulating core keeps only the
    vanishing shell-side flux.
    """
    if not 0.0 < r_i < r_e:
        raise ValueError(f"need 0 < r_i < r_e, got {r_i}, {r_e}")
    if not medium.is_isotropic:
        raise ValueError("coated-sphere solution requires an isotropic matrix")
    sc, ss, sm = medium.sigma_c, medium.sigma_s, medium.sigma_m[axis]
    ri3, re3 = r_i**3, r_e**3
    outer_rows = [
        # b + g/re^3 - p/re^3 = 1
        ([1.0, 1.0 / re3, -1.0 / re3], 1.0),
        # ss (b - 2 g/re^3) = sm (1 - 2 p/re^3)
        ([ss, -2.0 * ss / re3, 2.0 * sm / re3], sm),
    ]
    core_constant = 0.0
    if math.isinf(sc):
        M = np.array([[1.0, 1.0 / ri3, 0.0]] + [r for r, _ in outer_rows])
        rhs = np.array([0.0] + [v for _, v in outer_rows])
        (b, g, p), res = _solve_interface(M, rhs)
        a = 0.0
    elif sc == 0.0:
        M = np.array([[1.0, -2.0 / ri3, 0.0]] + [r for r, _ in outer_rows])
        rhs = np.array([0.0] + [v for _, v in outer_rows])
        (b, g, p), res = _solve_interface(M, rhs)
        a = b + g / ri3  # continuous extension: the sigma_c -> 0 limit
    else:
        M = np.array(
            [
                [1.0, -1.0, -1.0 / ri3, 0.0],
                [sc, -ss, 2.0 * ss / ri3, 0.0],
                [0.0] + outer_rows[0][0],
                [0.0] + outer_rows[1][0],
            ]
        )
        rhs = np.array([0.0, 0.0, outer_rows[0][1], outer_rows[1][1]])
        (a, b, g, p), res = _solve_interface(M, rhs)
    return SphereTransmission(
        float(r_i), float(r_e), medium, axis, float(a), float(b), float(g), float(p), core_constant, res
    )


def neutral_sigma_m(r_i: float, r_e: float, sigma_c: float, sigma_s: float) -> float:
    """Matrix conductivity that makes coated spheres neutral (exterior dipole zero).

    Setting the exterior dipole to zero decouples the matrix: the core rows
    and outer continuity fix the shell field, and the outer flux row then
    reads ``sigma_m = sigma_s (b - 2 g / r_e^3)``.
    """
    if not 0.0 < r_i < r_e:
        raise ValueError(f"need 0 < r_i < r_e, got {r_i}, {r_e}")
    if sigma_c == sigma_s:
        raise NeutralityVacuous("sigma_c == sigma_s: the core is invisible and neutrality is vacuous")
    if not sigma_s > 0.0 or sigma_c < 0.0:
        raise ValueError("conductivities must be nonnegative with sigma_s > 0")
    ri3, re3 = r_i**3, r_e**3
    if math.isinf(sigma_c):
        inner = [1.0, 1.0 / ri3]
    elif sigma_c == 0.0:
        inner = [1.0, -2.0 / ri3]
    else:
        # eliminate the core slope a = b + g/ri^3 from the flux row
        inner = [sigma_c - sigma_s, sigma_c / ri3 + 2.0 * sigma_s / ri3]
    M = np.array([inner, [1.0, 1.0 / re3]])
    b, g = np.linalg.solve(M, np.array([0.0, 1.0]))
    sigma_m = sigma_s * (b - 2.0 * g / re3)
    if not sigma_m > 0.0:
        raise NoPositiveRoot(f"no positive neutral sigma_m for r_i={r_i}, r_e={r_e}, sigma_c={sigma_c}, sigma_s={sigma_s}")
    return float(sigma_m)


# 24-point Gauss-Legendre rule for the radial integral of the neutral potential
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


class RadialShellField(ShellField):
    """Scalar potential ``psi - |x|^2 / (2 beta)`` on neutral coated spheres.

    ``psi`` is recovered by integrating the vector field ``u / beta`` along
    rays from the core surface, i.e. it is built numerically from the
    transmission coefficients rather than written down.
    """

    def __init__(self, solution: SphereTransmission, beta: float):
        self.solution = solution
        self.beta = beta

    def _radial_w(self, t):
        s = self.solution
        return (s.shell_slope + s.shell_dipole / t**3) * t / self.beta

    def psi(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        r_i = self.solution.r_i
        half = 0.5 * (r - r_i)
        nodes = r_i + half[..., None] * (_GL_X + 1.0)
        return half * np.sum(_GL_W * self._radial_w(nodes), axis=-1)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.psi(x) - 0.5 * np.sum(x * x, axis=-1) / self.beta

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        s = self.solution
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return ((s.shell_slope - 1.0) + s.shell_dipole / r**3) / self.beta * x

    def laplacian(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], 3.0 * (self.solution.shell_slope - 1.0) / self.beta)

    def in_domain(self, x):
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return (r >= self.solution.r_i) & (r <= self.solution.r_e)


@dataclass(frozen=True)
class NeutralShell:
    field: RadialShellField
    k: float
    A: np.ndarray
    d: np.ndarray
    c0: float
    sigma_m: float
    transmission: SphereTransmission

    def __iter__(self):
        return iter((self.field, self.k, self.A, self.d, self.c0))


def neutral_shell_field(r_i: float, r_e: float, sigma_c: float, sigma_s: float) -> NeutralShell:
    """Scalar shell potential of neutral coated spheres and its data ``(k, A, d, c0)``.

    Requires ``sigma_c > sigma_s``: that is the regime where the core field
    is known to be affine, ``w = c0 x + d``.
    """
    if not sigma_c > sigma_s:
        raise AssumptionViolated(f"requires sigma_c > sigma_s, got sigma_c={sigma_c}, sigma_s={sigma_s}")
    sigma_m = neutral_sigma_m(r_i, r_e, sigma_c, sigma_s)
    medium = LayeredMedium.isotropic(sigma_c, sigma_s, sigma_m)
    st = sphere_transmission(r_i, r_e, medium)
    beta = float(medium.beta[0])
    c0 = st.core_slope / beta
    # Lap psi = 3 b / beta and Lap(|x|^2 / (2 beta)) = 3 / beta
    k = 3.0 * (st.shell_slope - 1.0) / beta
    A = (c0 - 1.0 / beta) * np.eye(3)
    return NeutralShell(RadialShellField(st, beta), k, A, np.zeros(3), c0, sigma_m, st)
