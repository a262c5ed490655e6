import numpy as np
import pytest

import oracles
from holomotion import proj_geom as pg
from holomotion.family import power_family, product_family, quadratic_family
from holomotion.measures import (MeasureError, PointCloudMeasure, cycle_measure, detect_mode,
                                 integrate, measure_distance, pullback_measure, uniform_measure,
                                 w1_circle, w1_line)


def test_pullback_weights_and_invariance():
    q = quadratic_family()
    m = pullback_measure(q, [0.1j], depth=8, rng_seed=1)
    assert len(m) == 2 ** 8
    assert abs(m.weights.sum() - 1) < 1e-12
    # f_* of the depth-n measure is the depth-(n-1) measure
    img = pg.normalize(q.at([0.1j]).lift(m.atoms))
    m1 = uniform_measure([0.1j], img, {})
    m0 = pullback_measure(q, [0.1j], depth=9, rng_seed=1)
    assert measure_distance(m1, m0, mode="sliced", n_dirs=64) < 0.02


def test_invalid_measure():
    with pytest.raises(MeasureError):
        PointCloudMeasure(np.zeros(1), np.ones((2, 2)), np.array([0.7, 0.7]))
    with pytest.raises(MeasureError):
        PointCloudMeasure(np.zeros(1), np.ones((2, 2)), np.array([0.5]))


def test_circle_measure_arcsine():
    # for z^2 - 2 the measure is the arcsine law on [-2, 2]
    q = quadratic_family()
    m = pullback_measure(q, [-2.0], depth=12, seed=[0.3 + 0.1j, 1])
    x = np.sort((m.atoms[:, 0] / m.atoms[:, 1]).real)
    ecdf = np.arange(1, len(x) + 1) / len(x)
    assert np.max(np.abs(ecdf - oracles.arcsine_cdf(x))) < 0.01


def test_chebyshev_cycle_count():
    # every cycle of z^2 - 2 of period dividing n, besides infinity, is repelling
    q = quadratic_family()
    m = cycle_measure(q, [-2.0], 6)
    assert len(m) == 2 ** 6
    pts = oracles.chebyshev_cycle_points(6)
    got = np.sort((m.atoms[:, 0] / m.atoms[:, 1]).real)
    assert np.allclose(got, np.sort(pts), atol=1e-9)


def test_integrate_moment():
    m = pullback_measure(power_family(2), [0], depth=10, seed=[np.exp(0.4j), 1])
    assert abs(integrate(m, lambda p: np.abs(p[:, 0] / p[:, 1]))) == pytest.approx(1.0, abs=1e-10)


def test_w1_line_circle_basic():
    u = np.array([[0.0, 1.0]])
    assert w1_line(u, np.array([0.5, 0.5]), u + 0.25, np.array([0.5, 0.5]))[0] == pytest.approx(0.25)
    t = np.array([0.1, 6.2])
    assert w1_circle(t, np.array([0.5, 0.5]), t, np.array([0.5, 0.5])) == pytest.approx(0.0, abs=1e-15)


def test_distance_symmetric_and_zero():
    q = quadratic_family()
    a = pullback_measure(q, [0.1j], depth=8, rng_seed=0)
    b = pullback_measure(q, [0.1j], depth=8, rng_seed=5)
    assert measure_distance(a, a) == pytest.approx(0.0, abs=1e-12)
    assert measure_distance(a, b) == pytest.approx(measure_distance(b, a), rel=1e-9, abs=1e-12)


def test_detect_mode():
    z2 = power_family(2)
    a = pullback_measure(z2, [0], depth=6, seed=[np.exp(0.3j), 1])
    assert detect_mode(a, a) == "circle"
    p = pullback_measure(product_family(2), [0], depth=3, rng_seed=0)
    assert detect_mode(p, p) == "sliced"
