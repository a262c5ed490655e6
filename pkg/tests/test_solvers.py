import numpy as np

from holomotion import proj_geom as pg
from holomotion.family import FamilySpec, power_family, product_family, quadratic_family
from holomotion.solvers import preimages


def test_preimages_k1_degrees():
    rng = np.random.default_rng(0)
    for d in (2, 3, 4, 5):
        f = power_family(d).at([0])
        y = pg.random_points(rng, 7, 1)
        x, info = preimages(f, y)
        assert x.shape == (7, d, 2)
        img = pg.normalize(f.lift(x))
        assert np.max(pg.distance(img, y[:, None])) < 1e-13


def test_preimages_quadratic_closed_form():
    f = quadratic_family().at([0.25 - 0.1j])
    x, _ = preimages(f, np.array([[1.0 + 0.5j, 1.0]]))
    roots = np.sort_complex(x[0, :, 0] / x[0, :, 1])
    expect = np.sort_complex(np.array([1, -1]) * np.sqrt(1.0 + 0.5j - (0.25 - 0.1j)))
    assert np.allclose(roots, expect, atol=1e-13)


def test_preimages_k2():
    rng = np.random.default_rng(1)
    comps = [{(2, 0, 0): {(0,): 1}, (0, 1, 1): {(0,): 0.3}},
             {(0, 2, 0): {(0,): 1}, (1, 0, 1): {(0,): -0.2j}},
             {(0, 0, 2): {(0,): 1}}]
    for spec in (product_family(2), FamilySpec(2, 2, 1, comps)):
        f = spec.at([0])
        y = pg.random_points(rng, 20, 2)
        x, info = preimages(f, y, seed=3)
        assert x.shape == (20, 4, 3) and info["n_failed_fibers"] == 0
        img = pg.normalize(f.lift(x))
        assert np.max(pg.distance(img, y[:, None])) < 1e-10
        # the d^2 preimages are distinct for generic targets
        D = pg.distance(x[:, :, None], x[:, None, :]) + np.eye(4)
        assert D.min() > 1e-6
