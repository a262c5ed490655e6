import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holomotion import proj_geom as pg


def rand_pts(seed, n, k):
    return pg.random_points(np.random.default_rng(seed), n, k)


def test_distance_scale_invariant():
    p, q = rand_pts(0, 50, 2), rand_pts(1, 50, 2)
    c = np.random.default_rng(2).normal(size=(50, 1)) + 1j
    assert np.allclose(pg.distance(p, q), pg.distance(c * p, q), atol=1e-14)


def test_distance_basic():
    assert pg.distance([1, 0], [0, 1]) == pytest.approx(1.0)
    assert pg.distance([1, 1], [2, 2]) == pytest.approx(0.0, abs=1e-15)
    # chordal distance between 0 and 1 on the sphere picture
    assert pg.distance([0, 1], [1, 1]) == pytest.approx(1 / np.sqrt(2))


def test_zero_vector_rejected():
    with pytest.raises(pg.ProjectiveError):
        pg.normalize([0, 0])
    with pytest.raises(pg.ProjectiveError):
        pg.as_points([1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([1, 2]))
def test_triangle_inequality(seed, k):
    p, q, r = rand_pts(seed, 3, k)
    assert pg.distance(p, r) <= pg.distance(p, q) + pg.distance(q, r) + 1e-12


def test_normalize_idempotent():
    p = rand_pts(3, 20, 2)
    n1 = pg.normalize(p)
    assert np.allclose(pg.normalize(n1), n1, atol=1e-15)
    assert np.allclose(np.linalg.norm(n1, axis=-1), 1)


def test_centering_unitary():
    x = rand_pts(4, 10, 2)
    H = pg.centering_unitary(x)
    eye = np.eye(3)
    assert np.allclose(H @ np.conj(np.swapaxes(H, -1, -2)), eye, atol=1e-13)
    assert np.allclose(H, np.conj(np.swapaxes(H, -1, -2)), atol=1e-13)
    assert np.allclose(pg.distance(H[..., :, 0], x), 0, atol=1e-8)


def test_chart_roundtrip_and_radius():
    x = rand_pts(5, 10, 2)
    H = pg.centering_unitary(x)
    z = 0.3 * (np.random.default_rng(6).normal(size=(10, 2)) + 1j)
    y = pg.lift_from_chart(H, z)
    assert np.allclose(pg.chart_coords(H, y), z, atol=1e-13)
    assert np.allclose(pg.distance(x, y), pg.chordal_from_chart(z), atol=1e-13)


def test_chart_error_at_infinity():
    H = pg.centering_unitary(np.array([1, 0], dtype=complex))
    with pytest.raises(pg.ChartError):
        pg.chart_coords(H, np.array([0, 1], dtype=complex))


def test_atlas_ratio_within_band():
    atlas = pg.ChartAtlas(1, tau=0.05, n_pairs=2000)
    lo, hi = atlas.ratio_range
    assert np.exp(-0.025) <= lo and hi <= np.exp(0.025)
    assert atlas.R0 == pytest.approx(np.sqrt(np.exp(0.05 / 4) - 1))


def test_hermitian_embedding_isometry():
    p, q = rand_pts(7, 30, 2), rand_pts(8, 30, 2)
    E1, E2 = pg.hermitian_embedding(p), pg.hermitian_embedding(q)
    assert np.allclose(np.linalg.norm(E1 - E2, axis=-1), np.sqrt(2) * pg.distance(p, q), atol=1e-12)
