import numpy as np
import pytest

from hybridheat import _kernels_py as py
from hybridheat import kernels

ck = pytest.importorskip("hybridheat._ckernels")


@pytest.fixture(scope="module")
def tri_data():
    rng = np.random.default_rng(7)
    V = rng.uniform(-1, 1, size=(300, 2))
    T = np.array([rng.choice(300, 3, replace=False) for _ in range(500)], dtype=np.int64)
    return V, T


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_p1_geometry_agrees(tri_data):
    V, T = tri_data
    a1, g1 = py.p1_geometry(V, T)
    a2, g2 = ck.p1_geometry(V, T)
    assert np.allclose(a1, a2, rtol=0, atol=1e-14)
    assert np.allclose(g1, g2, rtol=1e-12, atol=1e-9)


def test_p1_gradients_sum_to_zero(tri_data):
    V, T = tri_data
    _, g = kernels.p1_geometry(V, T)
    assert np.abs(g.sum(axis=1)).max() <= 1e-8 * np.abs(g).max()


def test_erf_source_agrees():
    rng = np.random.default_rng(3)
    T = rng.uniform(-0.5, 1.5, 1000)
    base = np.full(1000, 0.01)
    burned = (rng.uniform(size=1000) < 0.5).astype(np.uint8)
    args = (9.3073, -2.3268, 9.3073, -6.9805, base, burned)
    f1, d1 = py.erf_source(T, *args)
    f2, d2 = ck.erf_source(T, *args)
    assert np.abs(f1 - f2).max() <= 1e-14
    assert np.abs(d1 - d2).max() <= 1e-12


def test_erf_source_derivative_matches_difference():
    T = np.linspace(-0.2, 1.2, 57)
    base = np.full(57, 0.01)
    for flag in (0, 1):
        burned = np.full(57, flag, np.uint8)
        f, d = kernels.erf_source(T, 9.3073, -2.3268, 9.3073, -6.9805, base, burned)
        h = 1e-6
        fp, _ = kernels.erf_source(T + h, 9.3073, -2.3268, 9.3073, -6.9805, base, burned)
        fm, _ = kernels.erf_source(T - h, 9.3073, -2.3268, 9.3073, -6.9805, base, burned)
        assert np.allclose(d, (fp - fm) / (2 * h), atol=1e-6)


def test_clip_agrees_and_is_exact():
    rng = np.random.default_rng(11)
    P = rng.uniform(-1, 1, size=(400, 3, 2))
    box = (-0.3, 0.4, -0.5, 0.2)
    a1, c1 = py.clip_triangles_box(P, box)
    a2, c2 = ck.clip_triangles_box(P, box)
    assert np.allclose(a1, a2, atol=1e-14)
    m = a1 > 1e-12
    assert np.allclose(c1[m], c2[m], atol=1e-10)
    full = np.array([[[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]]])
    a, c = kernels.clip_triangles_box(full, box)
    assert a[0] == pytest.approx(0.005)
    assert c[0] == pytest.approx([0.1 / 3, 0.1 / 3])
    a, _ = kernels.clip_triangles_box(full + 5.0, box)
    assert a[0] == 0.0


def test_clip_half_triangle():
    P = np.array([[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]])
    a, c = kernels.clip_triangles_box(P, (0.0, 1.0, 0.0, 10.0))
    assert a[0] == pytest.approx(1.5)
