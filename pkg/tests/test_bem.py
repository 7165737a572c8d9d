import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad

from neutral_inclusion.analytic import LayeredMedium, sphere_transmission
from neutral_inclusion.bem import (
    TransmissionOperator,
    contrast,
    fit_dipole,
    neutrality_defect,
    panel_gradient_integrals,
    probe_points,
    solve_family,
    solve_transmission,
)
from neutral_inclusion.errors import ContrastSingular, InvalidMesh, MeshesIntersect
from neutral_inclusion.geometry import Ellipsoid, TriMesh, mesh_ellipsoid

NEUTRAL = LayeredMedium.isotropic(5.0, 1.0, 16 / 13)
AXES = [(1.0, 0, 0), (0, 1.0, 0), (0, 0, 1.0)]


def pair(s, offset=(0.0, 0.0, 0.0)):
    return mesh_ellipsoid(Ellipsoid.sphere(1.0, offset), s), mesh_ellipsoid(Ellipsoid.sphere(2.0), s)


@pytest.fixture(scope="module")
def op3():
    return TransmissionOperator(*pair(3))


def bem_dipole(sol):
    probes, center = probe_points(sol)
    return fit_dipole(probes, sol.perturbation(probes), center)


class TestPanelIntegrals:
    @given(st.tuples(*[st.floats(-1.0, 1.5)] * 3))
    @settings(max_examples=8)
    def test_against_quadrature(self, x):
        x = np.array(x)
        tri = np.array([[0.0, 0.0, 0.0], [1.0, 0.1, 0.0], [0.2, 0.9, 0.1]])
        if abs(np.dot(x - tri[0], np.cross(tri[1] - tri[0], tri[2] - tri[0]))) < 0.05:
            return
        e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
        jac = np.linalg.norm(np.cross(e1, e2))

        def comp(k):
            f = lambda v, u: ((x - tri[0] - u * e1 - v * e2) / np.linalg.norm(x - tri[0] - u * e1 - v * e2) ** 3)[k] * jac
            return dblquad(f, 0, 1, 0, lambda u: 1 - u, epsabs=1e-11, epsrel=1e-11)[0]

        exact = panel_gradient_integrals(x[None], tri[None])[0]
        assert np.allclose(exact, [comp(k) for k in range(3)], rtol=1e-7, atol=1e-9)

    def test_solid_angle_jump(self):
        tri = np.array([[[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]])
        above = panel_gradient_integrals(np.array([[0.2, 0.2, 1e-9]]), tri)[0]
        below = panel_gradient_integrals(np.array([[0.2, 0.2, -1e-9]]), tri)[0]
        # normal component jumps by 4 pi across the panel
        assert above[2] - below[2] == pytest.approx(4 * np.pi, rel=1e-6)


class TestContrast:
    def test_values(self):
        assert contrast(5.0, 1.0) == pytest.approx(0.75)
        assert contrast(math.inf, 1.0) == 0.5
        assert contrast(0.0, 1.0) == -0.5
        with pytest.raises(ContrastSingular):
            contrast(1.0, 1.0)

    def test_singular_media(self, op3):
        with pytest.raises(ContrastSingular):
            solve_family(op3.core, op3.shell, [LayeredMedium.isotropic(1.0, 1.0, 2.0)], operator=op3)
        with pytest.raises(ContrastSingular):
            solve_family(op3.core, op3.shell, [LayeredMedium.isotropic(2.0, 1.0, 1.0)], operator=op3)


class TestOperator:
    def test_dense_matches_apply(self):
        op = TransmissionOperator(*pair(1))
        phi = np.random.default_rng(0).normal(size=op.n)
        assert np.allclose(op.dense() @ phi, op.apply(phi), atol=1e-13)
        assert np.allclose(op.apply(phi, op.core_slice), op.dense()[:, op.core_slice] @ phi[op.core_slice], atol=1e-13)

    def test_column_sums(self, op3):
        K = op3.dense()
        a = op3.areas
        for sl in (op3.core_slice, op3.shell_slice):
            sums = a[sl] @ K[sl, sl] / a[sl]
            assert np.allclose(sums, 0.5, atol=1e-12)

    def test_guards(self):
        core, shell = pair(2)
        with pytest.raises(MeshesIntersect):
            TransmissionOperator(mesh_ellipsoid(Ellipsoid.sphere(1.0, (1.5, 0, 0)), 2), shell)
        sliver = TriMesh(core.vertices * np.array([1.0, 1.0, 0.01]), core.triangles)
        with pytest.raises(InvalidMesh):
            TransmissionOperator(sliver, shell)

    def test_anisotropic_rejected(self, op3):
        with pytest.raises(ValueError):
            solve_family(op3.core, op3.shell, [LayeredMedium(5.0, 1.0, (1.0, 2.0, 3.0))], operator=op3)


class TestSolutions:
    def test_dense_and_subspace_agree(self, op3):
        media = [NEUTRAL, LayeredMedium.isotropic(0.3, 1.0, 0.5), LayeredMedium.isotropic(math.inf, 1.0, 2.0)]
        dense = solve_family(op3.core, op3.shell, media, AXES[:1], method="dense", operator=op3)
        sub = solve_family(op3.core, op3.shell, media, AXES[:1], method="subspace", operator=op3)
        for d, s in zip(dense, sub):
            assert s[0].relative_residual <= 1e-9
            assert np.allclose(d[0].density, s[0].density, atol=1e-7 * np.abs(d[0].density).max())

    def test_total_charges_vanish(self, op3):
        sols = solve_family(op3.core, op3.shell, [NEUTRAL, LayeredMedium.isotropic(math.inf, 1.0, 3.0)], AXES, operator=op3)
        for row in sols:
            for s in row:
                assert max(abs(q) for q in s.charges) <= 1e-10

    @pytest.mark.parametrize(
        "medium",
        [
            LayeredMedium.isotropic(5.0, 1.0, 1.5 * 16 / 13),
            LayeredMedium.isotropic(0.0, 1.0, 2.0),
            LayeredMedium.isotropic(math.inf, 1.0, 2.0),
            LayeredMedium.isotropic(0.3, 1.0, 0.5),
        ],
    )
    def test_dipole_matches_analytic(self, op3, medium):
        sol = solve_transmission(op3.core, op3.shell, medium)
        p = sphere_transmission(1.0, 2.0, medium).exterior_dipole
        fit = bem_dipole(sol)
        assert fit.dipole[0] == pytest.approx(p, rel=0.02)
        assert abs(fit.monopole) <= 1e-8
        nd = neutrality_defect(sol)
        assert nd.defect == pytest.approx(abs(p), rel=0.05)

    def test_neutral_defect_decreases(self):
        defects = []
        for s in (2, 3):
            sols = solve_family(*pair(s), [NEUTRAL], AXES)[0]
            defects.append(neutrality_defect(sols).defect)
        assert defects[1] < defects[0]
        assert defects[1] <= 5e-3

    def test_offset_core_loses_neutrality(self, op3):
        concentric = neutrality_defect(solve_family(op3.core, op3.shell, [NEUTRAL], AXES, operator=op3)[0]).defect
        offset = neutrality_defect(solve_family(*pair(3, (0.3, 0, 0)), [NEUTRAL], AXES)[0]).defect
        assert offset >= 10 * concentric

    @pytest.mark.parametrize("eps", [1e-9, 1e-6])
    def test_homogeneous_limit(self, op3, eps):
        m = LayeredMedium.isotropic(1 + eps, 1.0, 1 - eps)
        sols = solve_family(op3.core, op3.shell, [m], AXES, operator=op3)[0]
        assert max(np.abs(s.density).max() for s in sols) <= 10 * eps
        assert neutrality_defect(sols).defect <= 10 * eps
        if eps == 1e-9:
            assert neutrality_defect(sols).defect <= 1e-8

    def test_linearity(self, op3):
        m = LayeredMedium.isotropic(0.3, 1.0, 0.5)
        a, b, ab = solve_family(op3.core, op3.shell, [m], [(1, 0, 0), (0, 1, 0), (1, 1, 0)], operator=op3)[0]
        assert np.allclose(a.density + b.density, ab.density, atol=1e-8 * np.abs(ab.density).max())

    def test_decay(self, op3):
        sol = solve_transmission(op3.core, op3.shell, LayeredMedium.isotropic(0.3, 1.0, 0.5))
        fit = bem_dipole(sol)
        assert fit.max_remainder <= 0.1 * fit.max_dipole_term

    def test_ellipsoidal_geometry_runs(self):
        core = mesh_ellipsoid(Ellipsoid((1.0, 1.2, 0.8)), 2)
        shell = mesh_ellipsoid(Ellipsoid((2.0, 2.2, 1.9)), 2)
        sols = solve_family(core, shell, [NEUTRAL], AXES)[0]
        nd = neutrality_defect(sols)
        assert len(nd.per_direction) == 3 and nd.defect > 0
        assert nd.as_dict()["n_panels"] == core.n_triangles + shell.n_triangles
