import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neutral_inclusion.errors import (
    DegenerateAxes,
    DegenerateCoordinates,
    InvalidMesh,
    NonFiniteInput,
    SubdivisionTooLarge,
)
from neutral_inclusion.geometry import (
    ConfocalPair,
    Ellipsoid,
    Region,
    TriMesh,
    classify,
    confocal_coords,
    confocal_rho,
    confocal_roots,
    cubic_residual,
    icosphere,
    mesh_ellipsoid,
    read_off,
    write_off,
)

axes = st.tuples(*[st.floats(0.2, 5.0)] * 3)
coords = st.tuples(*[st.floats(-6.0, 6.0)] * 3)


def _bisection_rho(x, c):
    # independent oracle: sum x^2/(c^2+rho) = 1 is monotone in rho on (-c_min^2, inf)
    f = lambda r: np.sum(np.asarray(x) ** 2 / (np.asarray(c) ** 2 + r)) - 1.0
    lo, hi = -min(c) ** 2 + 1e-15, float(np.dot(x, x))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) > 0 else (lo, mid)
    return 0.5 * (lo + hi)


class TestConfocalCoords:
    def test_sphere(self):
        assert confocal_coords((2, 0, 0), (1, 1, 1)).rho == pytest.approx(3.0, abs=1e-12)

    def test_on_axis(self):
        assert confocal_coords((1.2, 0, 0), (1, 1.5, 2)).rho == pytest.approx(0.44, abs=1e-12)

    def test_generic_point_matches_bisection_oracle(self):
        rho = confocal_coords((1, 1, 1), (1, 1.5, 2)).rho
        assert rho == pytest.approx(_bisection_rho((1, 1, 1), (1, 1.5, 2)), abs=1e-11)
        assert abs(np.sum(1.0 / (np.array([1, 2.25, 4]) + rho)) - 1.0) <= 1e-12

    def test_ordering_and_brackets(self):
        r = confocal_coords((0.3, -0.7, 1.1), (1, 1.5, 2))
        assert -4 <= r.xi <= -2.25 <= r.mu <= -1 <= r.rho

    def test_errors(self):
        with pytest.raises(NonFiniteInput):
            confocal_coords((np.nan, 0, 0), (1, 1, 1))
        with pytest.raises(NonFiniteInput):
            confocal_coords((np.inf, 0, 0), (1, 1, 1))
        with pytest.raises(DegenerateAxes):
            confocal_coords((1, 0, 0), (1, 0, 1))
        with pytest.raises(DegenerateAxes):
            Ellipsoid((1, -1, 1))

    def test_focal_set_is_degenerate(self):
        # focal ellipse of c=(1,1.5,2) lies in the x1 = 0 plane: x2^2/(c2^2-c1^2) + x3^2/(c3^2-c1^2) = 1
        with pytest.raises(DegenerateCoordinates):
            confocal_coords((0.0, np.sqrt(1.25), 0.0), (1, 1.5, 2))

    @given(axes, coords)
    def test_roots_satisfy_cubic(self, c, x):
        rho, mu, xi = confocal_roots(np.array(x), np.array(c))
        assert xi <= mu <= rho
        for s in (rho, mu, xi):
            p, scale = cubic_residual(s, np.array(x), np.array(c))
            assert p <= 1e-10 * scale

    def test_million_random_roots(self, rng):
        n = 1_000_000
        c = rng.uniform(0.2, 5.0, size=(n, 3))
        x = rng.uniform(-6.0, 6.0, size=(n, 3))
        rho, mu, xi = confocal_roots(x, c)
        assert np.all(xi <= mu) and np.all(mu <= rho)
        worst = 0.0
        for s in (rho, mu, xi):
            p, scale = cubic_residual(s, x, c)
            worst = max(worst, float(np.max(p / scale)))
        assert worst <= 1e-10

    @given(axes, st.floats(0, np.pi), st.floats(0, 2 * np.pi))
    def test_rho_vanishes_on_base_surface(self, c, th, ph):
        u = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        assert abs(float(confocal_rho(np.array(c) * u, np.array(c)))) <= 1e-10 * max(c) ** 2


class TestConfocalPair:
    def test_outer_axes(self):
        pair = ConfocalPair.from_axes((1, 1.5, 2), 1.0)
        assert np.allclose(pair.outer.c**2, pair.inner.c**2 + 1.0, atol=1e-15)

    @given(axes, st.floats(0.01, 10.0))
    def test_foci_shared(self, c, rho0):
        pair = ConfocalPair.from_axes(c, rho0)
        fi, fo = np.diff(np.sort(pair.inner.c**2)), np.diff(np.sort(pair.outer.c**2))
        assert np.allclose(fi, fo, rtol=1e-12, atol=1e-12 * rho0)

    def test_rejects_nonpositive_rho0(self):
        with pytest.raises(ValueError):
            ConfocalPair.from_axes((1, 1, 1), 0.0)


class TestClassify:
    def test_examples(self):
        sp = ConfocalPair.from_axes((1, 1, 1), 3.0)
        assert classify(sp, (0, 0, 0.5)).region is Region.CORE
        assert classify(sp, (1.5, 0, 0)).region is Region.SHELL
        assert classify(sp, (3, 0, 0)).region is Region.EXTERIOR
        el = ConfocalPair.from_axes((1, 1.5, 2), 1.0)
        assert classify(el, (0, 0, 2.1)).region is Region.SHELL

    def test_boundary(self):
        sp = ConfocalPair.from_axes((1, 1, 1), 3.0)
        b = classify(sp, (2.0, 0, 0))
        assert b.region is Region.ON_BOUNDARY and b.which == "outer"
        assert str(classify(sp, (0, 1.0, 0))) == "OnBoundary(inner)"


class TestMesh:
    def test_icosahedron(self):
        m = mesh_ellipsoid(Ellipsoid.sphere(1.0), 0)
        assert (len(m.vertices), m.n_triangles) == (12, 20)
        # regular icosahedron inscribed in the unit sphere: edge a = 4/sqrt(10 + 2 sqrt 5)
        a = 4.0 / np.sqrt(10 + 2 * np.sqrt(5))
        assert m.volume == pytest.approx(5 * (3 + np.sqrt(5)) / 12 * a**3, rel=1e-12)

    @pytest.mark.parametrize("s", range(5))
    def test_vertex_count_and_closure(self, s):
        m = mesh_ellipsoid(Ellipsoid((1, 1.5, 2)), s)
        assert len(m.vertices) == 10 * 4**s + 2
        assert np.linalg.norm((m.normals * m.areas[:, None]).sum(axis=0)) <= 1e-12 * m.total_area
        assert np.all(m.areas > 0) and m.volume > 0

    def test_volume_converges_second_order(self):
        defects = [1 - mesh_ellipsoid(Ellipsoid.sphere(1.0), s).volume / (4 * np.pi / 3) for s in (2, 3, 4, 5)]
        ratios = np.array(defects[:-1]) / np.array(defects[1:])
        assert np.all(ratios > 3.9) and np.all(ratios < 4.1)

    def test_volume_within_quarter_percent_at_s4(self):
        for c in ((1, 1, 1), (1, 1.5, 2)):
            m = mesh_ellipsoid(Ellipsoid(c), 4)
            assert abs(m.volume / (4 * np.pi / 3 * np.prod(c)) - 1) <= 2.5e-3

    @pytest.mark.xfail(strict=True, reason="an inscribed s=4 icosphere misses the ball volume by 0.216 percent")
    def test_volume_within_point_two_percent_at_s4(self):
        m = mesh_ellipsoid(Ellipsoid.sphere(1.0), 4)
        assert abs(m.volume / (4 * np.pi / 3) - 1) <= 2e-3

    def test_gauss_identity(self):
        m = mesh_ellipsoid(Ellipsoid((1, 1.5, 2)), 4)
        assert m.gauss_identity() == pytest.approx(3 * m.volume, rel=1e-3)

    def test_subdivision_guard(self):
        with pytest.raises(SubdivisionTooLarge):
            icosphere(8)

    def test_off_round_trip(self, tmp_path):
        m = mesh_ellipsoid(Ellipsoid((1, 1.5, 2), (0.1, 0, 0)), 2)
        write_off(m, tmp_path / "m.off")
        back = read_off(tmp_path / "m.off")
        assert np.array_equal(back.vertices, m.vertices)
        assert np.array_equal(back.triangles, m.triangles)
        assert (tmp_path / "m.off").read_text() == m.to_off()

    def test_off_rejects_garbage(self, tmp_path):
        (tmp_path / "bad.off").write_text("PLY\n")
        with pytest.raises(InvalidMesh):
            read_off(tmp_path / "bad.off")

    def test_containment(self):
        m = mesh_ellipsoid(Ellipsoid((1, 1.5, 2)), 3)
        inside = m.contains(np.array([[0, 0, 0], [0.9, 0, 0], [0, 0, 1.9]]))
        outside = m.contains(np.array([[1.1, 0, 0], [0, 0, 2.1], [3, 3, 3]]))
        assert inside.all() and not outside.any()

    def test_invalid_mesh(self):
        with pytest.raises(InvalidMesh):
            TriMesh(np.zeros((3, 3)), np.array([[0, 1, 5]]))
