import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neutral_inclusion.analytic import (
    FunctionField,
    LayeredMedium,
    laplacian_probe,
    neutral_shell_field,
    neutral_sigma_m,
    overdet_solution,
    sphere_transmission,
)
from neutral_inclusion.errors import (
    AssumptionViolated,
    EvaluationOutsideDomain,
    NeutralityVacuous,
    StencilLeavesShell,
)
from neutral_inclusion.geometry import ConfocalPair, Ellipsoid, fibonacci_sphere, mesh_ellipsoid

axes = st.tuples(*[st.floats(0.3, 3.0)] * 3)
cond = st.floats(0.2, 5.0)


def coated_sphere_sigma(r_i, r_e, sc, ss):
    """Classical coated-sphere effective conductivity (independent closed form)."""
    f = (r_i / r_e) ** 3
    if math.isinf(sc):
        return ss * (1 + 2 * f) / (1 - f)
    return ss * (1 + 3 * f * (sc - ss) / (3 * ss + (1 - f) * (sc - ss)))


def shell_points(pair, n, rng):
    u = rng.normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1)[:, None]
    rho = rng.uniform(0.05, 0.95, size=n) * pair.rho0
    c = np.sqrt(np.asarray(pair.base.c) ** 2 + rho[:, None])
    # a point on the confocal surface rho: scale unit direction by its axes
    return np.asarray(pair.base.center) + c * u


class TestLayeredMedium:
    def test_derived(self):
        m = LayeredMedium.isotropic(5.0, 1.0, 16 / 13)
        assert m.alpha == 4.0
        assert np.allclose(m.beta, 3 / 13)
        assert np.allclose(m.B, np.eye(3) * 13 / 3)

    def test_validation(self):
        for bad in ((-1.0, 1.0, 1.0), (1.0, 0.0, 1.0), (1.0, 1.0, -2.0), (math.nan, 1.0, 1.0)):
            with pytest.raises(ValueError):
                LayeredMedium.isotropic(*bad)
        assert LayeredMedium.isotropic(1.0, 1.0, 2.0).vacuous
        with pytest.raises(ValueError):
            LayeredMedium.isotropic(2.0, 1.0, 1.0).B


class TestOverdetSolution:
    def test_sphere_pair(self):
        sol = overdet_solution(ConfocalPair.from_axes((1, 1, 1), 3.0))
        assert sol.k == pytest.approx(0.25, abs=1e-15)
        assert np.allclose(sol.A, -7 / 12 * np.eye(3), atol=1e-15)
        assert np.all(sol.d == 0)
        g = sol.gradient(2.0 * fibonacci_sphere(100))
        assert np.max(np.abs(g)) <= 1e-12

    def test_triaxial_trace(self):
        pair = ConfocalPair.from_axes((1, 1.5, 2), 1.0)
        sol = overdet_solution(pair)
        assert np.trace(sol.A) == pytest.approx(2 / np.sqrt(32.5) - 2 / 3, rel=1e-12)
        outer = 4 * np.pi / 3 * np.sqrt(32.5)
        core = 4 * np.pi / 3 * 3.0
        assert abs(sol.k * (outer - core) + np.trace(sol.A) * core) <= 1e-10 * sol.k * outer

    def test_laplacian_probe_examples(self):
        sp = overdet_solution(ConfocalPair.from_axes((1, 1, 1), 3.0))
        assert laplacian_probe(sp, np.array([1.5, 0, 0]), 1e-3) == pytest.approx(0.25, abs=1e-6)
        el = overdet_solution(ConfocalPair.from_axes((1, 1.5, 2), 1.0))
        v1 = laplacian_probe(el, np.array([1.2, 0.1, 0.2]), 1e-3)
        v2 = laplacian_probe(el, np.array([0.1, 0.2, 2.1]), 1e-3)
        assert v1 == pytest.approx(v2, abs=1e-6)
        quad = FunctionField(lambda x: x[..., 0] ** 2)
        assert laplacian_probe(quad, np.array([0.3, -1.0, 2.0]), 0.1) == pytest.approx(2.0, abs=1e-12)

    def test_stencil_guard(self):
        sp = overdet_solution(ConfocalPair.from_axes((1, 1, 1), 3.0))
        with pytest.raises(StencilLeavesShell):
            laplacian_probe(sp, np.array([1.9995, 0, 0]), 1e-3)

    def test_focal_set(self):
        sol = overdet_solution(ConfocalPair.from_axes((1, 1, 1), 3.0))
        with pytest.raises(EvaluationOutsideDomain):
            sol.value(np.zeros(3))

    @given(axes, st.floats(0.1, 5.0))
    def test_boundary_residuals_and_definiteness(self, c, rho0):
        pair = ConfocalPair.from_axes(c, rho0)
        sol = overdet_solution(pair)
        scale = sol.k * pair.outer.diameter
        m_out, m_in = mesh_ellipsoid(pair.outer, 3), mesh_ellipsoid(pair.inner, 3)
        assert len(m_out.vertices) >= 600
        assert np.max(np.linalg.norm(sol.gradient(m_out.vertices), axis=1)) <= 1e-10 * scale
        r_in = sol.gradient(m_in.vertices) - m_in.vertices @ sol.A.T - sol.d
        assert np.max(np.linalg.norm(r_in, axis=1)) <= 1e-10 * scale
        assert np.all(np.diag(sol.A) < 0)

    @given(axes, st.floats(0.1, 5.0))
    def test_analytic_laplacian_is_k(self, c, rho0):
        pair = ConfocalPair.from_axes(c, rho0)
        sol = overdet_solution(pair)
        x = shell_points(pair, 20, np.random.default_rng(0))
        assert np.allclose(sol.laplacian(x), sol.k, rtol=1e-11)

    @given(st.floats(-3, 3).filter(lambda v: abs(v) > 0.1), st.floats(-2, 2))
    def test_scaling_covariance(self, C, E):
        pair = ConfocalPair.from_axes((1, 1.5, 2), 1.0)
        base = overdet_solution(pair)
        s = base.scaled(C, E)
        assert s.k == pytest.approx(C * base.k)
        assert np.allclose(s.A, C * base.A)
        x = shell_points(pair, 10, np.random.default_rng(1))
        assert np.allclose(s.value(x), C * base.value(x) + E, rtol=1e-13, atol=1e-13)

    def test_offset_center(self):
        pair = ConfocalPair.from_axes((1, 1.5, 2), 1.0, (0.5, -0.2, 0.1))
        sol = overdet_solution(pair)
        m_in = mesh_ellipsoid(pair.inner, 2)
        r = sol.gradient(m_in.vertices) - m_in.vertices @ sol.A.T - sol.d
        assert np.max(np.abs(r)) <= 1e-12


class TestSphereTransmission:
    def test_homogeneous(self):
        st_ = sphere_transmission(1, 2, LayeredMedium.isotropic(1, 1, 1))
        assert (st_.core_slope, st_.shell_slope, st_.shell_dipole, st_.exterior_dipole) == pytest.approx((1, 1, 0, 0), abs=1e-15)

    def test_neutral_coefficients(self):
        st_ = sphere_transmission(1, 2, LayeredMedium.isotropic(5, 1, 16 / 13))
        assert st_.core_slope == pytest.approx(6 / 13, abs=1e-14)
        assert st_.shell_slope == pytest.approx(14 / 13, abs=1e-14)
        assert st_.shell_dipole == pytest.approx(-8 / 13, abs=1e-14)
        assert abs(st_.exterior_dipole) <= 1e-14
        assert st_.residual <= 1e-13

    def test_conducting_core(self):
        st_ = sphere_transmission(1, 2, LayeredMedium.isotropic(math.inf, 1, 10 / 7))
        assert abs(st_.exterior_dipole) <= 1e-14
        assert st_.shell_slope + st_.shell_dipole == pytest.approx(0.0, abs=1e-14)

    def test_conducting_limit(self):
        inf = sphere_transmission(1, 2, LayeredMedium.isotropic(math.inf, 1, 2.0))
        big = sphere_transmission(1, 2, LayeredMedium.isotropic(1e6, 1, 2.0))
        assert big.exterior_dipole == pytest.approx(inf.exterior_dipole, abs=1e-4)
        assert big.shell_dipole == pytest.approx(inf.shell_dipole, abs=1e-4)

    def test_insulating_core_has_no_flux(self):
        st_ = sphere_transmission(1, 2, LayeredMedium.isotropic(0.0, 1, 2.0))
        x = fibonacci_sphere(50) * (1 + 1e-9)
        flux = np.einsum("ij,ij->i", st_.gradient(x), x)
        assert np.max(np.abs(flux)) <= 1e-7
        small = sphere_transmission(1, 2, LayeredMedium.isotropic(1e-8, 1, 2.0))
        assert small.exterior_dipole == pytest.approx(st_.exterior_dipole, abs=1e-7)

    @given(cond, cond, cond, st.floats(0.2, 0.9))
    def test_interface_conditions(self, sc, ss, sm, ratio):
        m = LayeredMedium.isotropic(sc, ss, sm)
        st_ = sphere_transmission(ratio, 1.0, m)
        u = fibonacci_sphere(40)
        for r, s_in, s_out in ((ratio, sc, ss), (1.0, ss, sm)):
            lo, hi = u * r * (1 - 1e-12), u * r * (1 + 1e-12)
            assert np.allclose(st_.potential(lo), st_.potential(hi), atol=1e-9)
            f_in = s_in * np.einsum("ij,ij->i", st_.gradient(lo), u)
            f_out = s_out * np.einsum("ij,ij->i", st_.gradient(hi), u)
            assert np.allclose(f_in, f_out, atol=1e-9 * max(sc, ss, sm))


class TestNeutralSigma:
    @pytest.mark.parametrize("sc,expected", [(5.0, 16 / 13), (math.inf, 10 / 7), (0.0, 14 / 17)])
    def test_examples(self, sc, expected):
        assert neutral_sigma_m(1, 2, sc, 1.0) == pytest.approx(expected, abs=1e-12)

    def test_vacuous(self):
        with pytest.raises(NeutralityVacuous):
            neutral_sigma_m(1, 2, 1.0, 1.0)

    @given(st.floats(0.01, 100.0).filter(lambda v: abs(v - 1) > 1e-3), st.floats(0.1, 10.0), st.floats(0.1, 0.95))
    def test_matches_classical_formula_and_cancels_dipole(self, sc, ss, ratio):
        sm = neutral_sigma_m(ratio, 1.0, sc * ss, ss)
        assert sm == pytest.approx(coated_sphere_sigma(ratio, 1.0, sc * ss, ss), rel=1e-11)
        p = sphere_transmission(ratio, 1.0, LayeredMedium.isotropic(sc * ss, ss, sm)).exterior_dipole
        assert abs(p) <= 1e-11


class TestNeutralShell:
    def test_example(self):
        ns = neutral_shell_field(1, 2, 5, 1)
        field, k, A, d, c0 = ns
        assert ns.sigma_m == pytest.approx(16 / 13, abs=1e-12)
        assert c0 == pytest.approx(2.0, abs=1e-10)
        assert k == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(A, -7 / 3 * np.eye(3), atol=1e-10)
        ref = overdet_solution(ConfocalPair.from_axes((1, 1, 1), 3.0))
        assert A[0, 0] / k == pytest.approx(ref.A[0, 0] / ref.k, abs=1e-8)

    def test_guard(self):
        with pytest.raises(AssumptionViolated):
            neutral_shell_field(1, 2, 0.5, 1)

    def test_residuals_and_affine_match(self, rng):
        ns = neutral_shell_field(1, 2, 5, 1)
        ref = overdet_solution(ConfocalPair.from_axes((1, 1, 1), 3.0))
        u = rng.normal(size=(500, 3))
        u /= np.linalg.norm(u, axis=1)[:, None]
        x = u * rng.uniform(1.0, 2.0, size=(500, 1))
        # boundary conditions of the overdetermined problem
        assert np.max(np.abs(ns.field.gradient(2 * u))) <= 1e-12
        assert np.max(np.abs(ns.field.gradient(u) - u @ ns.A.T)) <= 1e-12
        assert np.allclose(laplacian_probe(ns.field, x[:50] * 0.999 + 0.0005 * u[:50], 1e-4, check_domain=False), 1.0, atol=1e-5)
        # uniqueness: the two fields differ by an affine rescaling w1 = C w2 + E
        C = ns.k / ref.k
        E = np.mean(ns.field.value(x) - C * ref.value(x))
        assert np.max(np.abs(ns.field.value(x) - C * ref.value(x) - E)) <= 1e-8
        # angular derivatives vanish for radial fields
        g = ns.field.gradient(x)
        ang = x[:, [0]] * g[:, [1]] - x[:, [1]] * g[:, [0]]
        assert np.max(np.abs(ang)) <= 1e-12
        # trace relation
        shell, core = 4 * np.pi / 3 * 7, 4 * np.pi / 3
        assert abs(ns.k * shell + np.trace(ns.A) * core) <= 1e-8 * ns.k * shell
