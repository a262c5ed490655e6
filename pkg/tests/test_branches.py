import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holomotion import branches as br
from holomotion.family import power_family, quadratic_family
from holomotion.mesh import polydisk


def test_u_power_map():
    assert br.u_eval(power_family(2), [1, 1], 5, lam=[0]) == pytest.approx(-5 * np.log(2))
    assert br.u_eval(quadratic_family(), [2, 1], 5, lam=[-2]) == pytest.approx(-5 * np.log(4))


def test_backward_orbit_relation():
    q = quadratic_family()
    o = br.sample_backward_orbit(q, [1, 1], 20, seed=3, lam=[0.1j])
    assert o.depth == 20
    assert o.step_residual(q) < 1e-9


def test_backward_orbit_deterministic():
    q = quadratic_family()
    a = br.sample_backward_orbit(q, [1, 1], 10, seed=7, lam=[0.1j])
    b = br.sample_backward_orbit(q, [1, 1], 10, seed=7, lam=[0.1j])
    assert np.array_equal(a.values, b.values)


def test_tube_spec_validation():
    with pytest.raises(br.BranchError):
        br.TubeSpec(0.0)
    with pytest.raises(br.BranchError):
        br.TubeSpec(1.5)


def test_contraction_power_map():
    z2 = power_family(2)
    o = br.sample_backward_orbit(z2, [1, 1], 25, seed=1, lam=[0])
    r = br.inverse_branch_iterate(z2, o, br.TubeSpec(0.1), 10)
    assert r.verified
    assert r.A == pytest.approx(np.log(2), rel=0.05)


def test_kingman_power_map():
    res = br.kingman_estimate(power_family(2), [1, 1], lam=[0], n_orbits=8, depth=20, n_boot=200)
    assert res.estimate == pytest.approx(-np.log(2), abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=60), st.floats(0.01, 1.0))
def test_temper_property(psi, eps):
    a, b = br.temper_sequence(np.array(psi), eps)
    n = np.arange(1, len(psi) + 1)
    assert a <= 1 <= b
    assert np.all(a * np.exp(-n * eps) <= np.array(psi))
    assert np.all(np.array(psi) <= b * np.exp(n * eps))


def test_key_comparison_constant_motion():
    q = quadratic_family()
    mesh = polydisk([0], 0.1, 5)
    res = br.key_comparison(q, [np.repeat([[1, 1]], len(mesh), 0)], [1, 2], mesh)
    assert res.feasible and 0 < res.alpha <= 1 and res.c >= 1
