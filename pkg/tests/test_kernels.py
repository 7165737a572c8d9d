import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neutral_inclusion import _kernels
from neutral_inclusion.geometry import Ellipsoid, mesh_ellipsoid

compiled = pytest.importorskip("neutral_inclusion._kernels._ckernels")
python = _kernels.backend_module("python")


def _direct(x, y, nu, w):
    d = x[:, None, :] - y[None, :, :]
    r = np.linalg.norm(d, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sl = np.where(r > 0, -w / (4 * np.pi * r), 0.0).sum(axis=1)
        dl = np.where(r > 0, np.einsum("jk,ijk->ij", nu, -d) * w / (4 * np.pi * r**3), 0.0).sum(axis=1)
    return sl, dl


@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**31))
@settings(max_examples=25)
def test_backends_agree(n, m, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(n, 3)), rng.normal(size=(m, 3))
    nu_x, nu_y = rng.normal(size=(n, 3)), rng.normal(size=(m, 3))
    w = rng.uniform(0.1, 1.0, size=m)
    pairs = [
        (compiled.single_layer(x, y, w, 1), python.single_layer(x, y, w, 1)),
        (compiled.double_layer(x, y, nu_y, w, 1), python.double_layer(x, y, nu_y, w, 1)),
        (
            compiled.adjoint_double_layer(x, nu_x, y, w, 1),
            python.adjoint_double_layer(x, nu_x, y, w, 1),
        ),
    ]
    for a, b in pairs:
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**31))
@settings(max_examples=15)
def test_compiled_matches_direct_sum(n, m, seed):
    rng = np.random.default_rng(seed)
    x, y, nu = rng.normal(size=(n, 3)), rng.normal(size=(m, 3)), rng.normal(size=(m, 3))
    w = rng.uniform(0.1, 1.0, size=m)
    sl, dl = _direct(x, y, nu, w)
    assert np.allclose(compiled.single_layer(x, y, w, 1), sl, rtol=1e-12, atol=1e-14)
    assert np.allclose(compiled.double_layer(x, y, nu, w, 1), dl, rtol=1e-10, atol=1e-12)


def test_coincident_points_skipped():
    x = np.zeros((1, 3))
    for mod in (compiled, python):
        assert mod.single_layer(x, x, np.ones(1), 1)[0] == 0.0
        assert mod.double_layer(x, x, np.ones((1, 3)), np.ones(1), 1)[0] == 0.0


def test_winding_numbers_agree():
    mesh = mesh_ellipsoid(Ellipsoid((1, 1.5, 2)), 2)
    pts = np.random.default_rng(1).uniform(-2.5, 2.5, size=(300, 3))
    tri = np.ascontiguousarray(mesh.corners)
    a = compiled.winding_numbers(pts, tri, 1)
    b = python.winding_numbers(pts, tri, 1)
    assert np.allclose(a, b, atol=1e-12)
    inside = np.sum((pts / [1, 1.5, 2]) ** 2, axis=1) < 0.9
    assert np.allclose(a[inside], 1.0, atol=1e-9)


def test_threads_do_not_change_results(monkeypatch):
    rng = np.random.default_rng(2)
    x, y, w = rng.normal(size=(200, 3)), rng.normal(size=(300, 3)), rng.uniform(size=300)
    one = compiled.single_layer(x, y, w, 1)
    assert np.array_equal(one, compiled.single_layer(x, y, w, 4))


def test_read_only_inputs():
    x = np.random.default_rng(3).normal(size=(10, 3))
    x.setflags(write=False)
    _kernels.single_layer(x, x, np.ones(10))


def test_pure_fallback_selected_at_import():
    env = dict(os.environ, NEUTRAL_INCLUSION_PURE="1")
    out = subprocess.run(
        [sys.executable, "-c", "from neutral_inclusion import _kernels; print(_kernels.BACKEND)"],
        capture_output=True, text=True, env=env, check=True,
    )
    assert out.stdout.strip() == "python"
    assert _kernels.BACKEND == "compiled"


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.backend_module("fortran")
