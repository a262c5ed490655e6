import numpy as np
import pytest

import oracles
from holomotion.family import constant_family, power_family, quadratic_family
from holomotion.mesh import box
from holomotion.stability import (StabilityError, chi_min, classify_report, grid_columns,
                                  grid_rows, harmonicity_grid, lyap_sum, stencils_from_values)


def test_lyap_power_map():
    r = lyap_sum(power_family(3), [0], depth=8)
    assert r.value == pytest.approx(np.log(3), abs=1e-6)
    assert r.excluded_mass <= 0.01


def test_lyap_outside_locus_matches_green():
    # outside the connectedness locus the value exceeds ln 2 by G_c(c) / 2
    c = 0.5 + 0.5j
    r = lyap_sum(quadratic_family(), [c], depth=12)
    assert r.value == pytest.approx(oracles.lyapunov_quadratic(c), abs=5e-3)


def test_birkhoff_agrees():
    r = lyap_sum(quadratic_family(), [-1.0], method="birkhoff", total=20000, rng_seed=2)
    assert r.value == pytest.approx(np.log(2), abs=0.02)


def test_unknown_method():
    with pytest.raises(ValueError):
        lyap_sum(quadratic_family(), [0], method="magic")


def test_chi_equals_lyap_k1():
    r = chi_min(quadratic_family(), [0.1], n=400, chains=4)
    assert r.value == pytest.approx(np.log(2), abs=0.02)
    assert not r.indeterminate


def test_stencil_linear_is_zero():
    # an affine function of the parameter has zero discrete Laplacian
    h = 0.1
    lam = 0.3 + np.array([0.0, h, -h, 1j * h, -1j * h])
    Lu = 1.0 + 3 * lam.real - 2 * lam.imag
    inv = np.arange(5)[:, None]
    assert abs(stencils_from_values(Lu, inv, h, 1)[0, 0]) < 1e-10
    # ln|lam| is harmonic away from 0, |lam|^2 has Laplacian 4
    far = 2.0 + (lam - 0.3) / 10
    assert abs(stencils_from_values(np.log(np.abs(far)), inv, h / 10, 1)[0, 0]) < 1e-3
    assert stencils_from_values(np.abs(lam) ** 2, inv, h, 1)[0, 0] == pytest.approx(4.0)


def test_small_stable_grid():
    mesh = box((-0.1, 0.1), (-0.1, 0.1), n=5)
    g = harmonicity_grid(quadratic_family(), mesh, depth=10, calib_nodes=1)
    rep = classify_report(g)
    assert rep.stable_fraction == 1.0 and rep.n_components == 1
    rows = grid_rows(g)
    assert len(rows) == 25 and len(rows[0]) == len(grid_columns(1, g.stencil.shape[1]))


def test_constant_family_is_flat():
    q = quadratic_family()
    mesh = box((-0.1, 0.1), (-0.1, 0.1), n=5)
    g = harmonicity_grid(constant_family(q, [0.2j]), mesh, depth=10, calib_nodes=1)
    assert np.all(g.classes == "stable")
