import numpy as np
import pytest

from holomotion import proj_geom as pg
from holomotion.family import (FamilySpec, FamilySpecError, constant_family, critical_points,
                               evaluate, iterate_chart_map, jacobian_chart, load_family,
                               orbit_chart_jacobians, power_family, product_chain, product_family,
                               quadratic_family, safe_solve, validate_family)


def test_evaluate_projective_invariance():
    q = quadratic_family()
    p = pg.random_points(np.random.default_rng(0), 20, 1)
    c = 3.7 - 1.2j
    assert np.max(pg.distance(evaluate(q, [0.1j], p), evaluate(q, [0.1j], c * p))) < 1e-12


def test_evaluate_quadratic():
    q = quadratic_family()
    y = evaluate(q, [-2], [2, 1])
    assert pg.distance(y, [2, 1]) < 1e-15


def test_chart_jacobian_finite_difference():
    spec = quadratic_family()
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = pg.random_points(rng, 1, 1)[0]
        lam = np.array([0.3 - 0.2j])
        f = spec.at(lam)
        Hx = pg.centering_unitary(x)
        Hy = pg.centering_unitary(pg.normalize(f.lift(x)))
        D = f.chart_jacobian(x)

        def g(z):
            return pg.chart_coords(Hy, f.lift(pg.lift_from_chart(Hx, np.array([z]))))[0]

        h = 1e-6
        fd = (g(h) - g(-h)) / (2 * h)
        assert abs(fd - D[0, 0]) <= 1e-6 * abs(D[0, 0])


def test_jacobian_values():
    z2 = power_family(2)
    J = jacobian_chart(z2, [0], [1, 1])
    assert abs(J.det) == pytest.approx(2.0)
    P = jacobian_chart(product_family(2), [0], [1, 1, 1])
    assert np.allclose(np.sort(np.abs(np.linalg.eigvals(P.DF))), [2, 2])
    assert abs(P.det) == pytest.approx(4.0)


def test_cocycle_identity():
    spec = quadratic_family()
    f = spec.at([0.1 + 0.2j])
    x = pg.random_points(np.random.default_rng(2), 1, 1)[0]
    m, n = 3, 4
    pts, Ds = orbit_chart_jacobians(f, x, m + n)
    whole = product_chain(list(Ds))
    first = product_chain(list(Ds[:n]))
    second = product_chain(list(Ds[n:]))
    lhs = np.linalg.inv(whole)
    rhs = np.linalg.inv(first) @ np.linalg.inv(second)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-12)


def test_iterate_chart_map_lambda_derivative():
    spec = quadratic_family()
    x = np.array([0.3 + 0.1j, 1.0])
    H = pg.centering_unitary(pg.normalize(x))
    z = np.zeros(1, dtype=complex)
    lam = np.array([0.05 + 0.02j])
    _, _, dl = iterate_chart_map(spec.at(lam), H, H, z, 3, with_lam=True)
    h = 1e-6
    wp, _ = iterate_chart_map(spec.at(lam + h), H, H, z, 3)
    wm, _ = iterate_chart_map(spec.at(lam - h), H, H, z, 3)
    assert np.allclose((wp - wm) / (2 * h), dl[:, 0], rtol=1e-6)


def test_safe_solve_singular_is_nan():
    A = np.array([[[1.0, 0], [0, 1]], [[1.0, 1], [1, 1]]])
    x = safe_solve(A, np.ones((2, 2)))
    assert np.allclose(x[0], 1)
    assert np.isnan(x[1]).all()


def test_yaml_roundtrip():
    q = quadratic_family(center=0.1 - 0.05j, mesh=7)
    q2 = load_family(q.to_yaml())
    assert q2 == q
    assert q2.to_yaml() == q.to_yaml()
    assert q2.spec_hash() == q.spec_hash()


def test_parse_errors():
    with pytest.raises(FamilySpecError):
        load_family("k: 1\nd: 2\n")
    with pytest.raises(FamilySpecError):
        load_family("k: 1\nd: 2\nm: 1\ncomponents: [{'2,0,1': {'0': 1}}, {'0,2': {'0': 1}}]\n")


def test_validate_examples():
    assert validate_family(quadratic_family()).ok
    assert validate_family(product_family(2)).ok
    bad = FamilySpec(1, 2, 1, [{(2, 0): {(0,): 1}}, {(1, 1): {(0,): 1}}])
    rep = validate_family(bad)
    assert not rep.ok and rep.homogeneous
    nonhom = FamilySpec(1, 2, 1, [{(2, 0): {(0,): 1}, (1, 0): {(0,): 1}}, {(0, 2): {(0,): 1}}])
    rep = validate_family(nonhom)
    assert not rep.ok and rep.failing_components == [0]


def test_validate_k2_degenerate():
    # [z^2 : zw : zt] has the common zero line z = 0
    bad = FamilySpec(2, 2, 1, [{(2, 0, 0): {(0,): 1}}, {(1, 1, 0): {(0,): 1}}, {(1, 0, 1): {(0,): 1}}])
    assert not validate_family(bad).ok


def test_constant_family_freezes():
    q = quadratic_family()
    fr = constant_family(q, [0.2j])
    assert not fr.depends_on_lambda
    assert np.allclose(fr.coefficients([0.5]), q.coefficients([0.2j]))


def test_critical_points_quadratic():
    C = critical_points(quadratic_family(), [0.3])
    aff = sorted(np.abs(C[:, 1]))
    # critical points of z^2 + c on P^1: 0 and infinity
    assert aff[0] < 1e-12 and aff[1] == pytest.approx(1.0)
