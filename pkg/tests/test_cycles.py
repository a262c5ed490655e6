import numpy as np
import pytest

import oracles
from holomotion.cycles import count_audit, find_periodic, julia_membership
from holomotion.family import power_family, product_family, quadratic_family


def affine(c):
    return c.points[:, 0] / c.points[:, 1]


def test_fixed_points_quadratic():
    q = quadratic_family()
    cs = find_periodic(q, [-2.0], 1)
    rep = [c for c in cs if c.repelling and c.in_julia]
    zs = sorted(affine(c)[0].real for c in rep)
    assert np.allclose(zs, [-1, 2], atol=1e-12)
    mult = {round(affine(c)[0].real): np.abs(c.multipliers[0]) for c in rep}
    assert mult[2] == pytest.approx(4) and mult[-1] == pytest.approx(2)


def test_attracting_not_repelling():
    q = quadratic_family()
    cs = find_periodic(q, [-1.0], 2)
    two = [c for c in cs if c.period == 2]
    assert len(two) == 1 and not two[0].repelling
    assert np.allclose(sorted(affine(two[0]).real), [-1, 0], atol=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_count_power_map(n):
    cs = find_periodic(power_family(2), [0], n)
    assert sum(c.period for c in cs if c.repelling and c.in_julia) == 2 ** n - 1


def test_chebyshev_count_is_full():
    rows = count_audit(quadratic_family(), [-2.0], 4)
    assert [r[1] for r in rows] == [2, 4, 8, 16]


def test_cycle_points_invariant():
    q = quadratic_family()
    for c in find_periodic(q, [0.1j], 4):
        img = q.at([0.1j]).lift(c.points)
        nxt = np.roll(c.points, -1, axis=0)
        cross = img[:, 0] * nxt[:, 1] - img[:, 1] * nxt[:, 0]
        assert np.max(np.abs(cross)) < 1e-9 * np.max(np.abs(img))


def test_product_fixed_points():
    cs = find_periodic(product_family(2), [0], 1)
    rep = [c for c in cs if c.repelling]
    # fixed points of (z^2, w^2) off the axes: (1, 1) only, with multipliers 2, 2
    assert len(rep) == 1 and np.allclose(rep[0].moduli, [2, 2])


def test_julia_membership_k2():
    pts = np.array([[1, 1, 1], [0.5, 0.5, 1]], dtype=complex)
    inside, dist, thr = julia_membership(product_family(2), [0], pts, depth=5)
    assert inside[0] and not inside[1]
