import numpy as np
import pytest

import oracles
from holomotion import motion as mo
from holomotion.cycles import find_periodic
from holomotion.family import quadratic_family
from holomotion.measures import pullback_measure
from holomotion.mesh import polydisk, segment


@pytest.fixture(scope="module")
def q():
    return quadratic_family()


@pytest.fixture(scope="module")
def web3(q):
    return mo.build_web(q, polydisk([0], 0.2, 7), 3)


def test_track_beta(q):
    mesh = polydisk([0], 0.2, 7)
    beta = [c for c in find_periodic(q, [0], 1) if c.repelling and c.in_julia][0]
    m = mo.track_cycle(q, beta, mesh)
    z = m.values[:, 0, 0] / m.values[:, 0, 1]
    assert np.all(m.status == "tracked")
    assert np.max(np.abs(z - oracles.beta_fixed_point(mesh.nodes[:, 0]))) < 1e-10


def test_track_rejects_attracting(q):
    alpha = [c for c in find_periodic(q, [0], 1) if not c.repelling][0]
    with pytest.raises(mo.MotionError):
        mo.track_cycle(q, alpha, polydisk([0], 0.2, 5))


def test_cycle_type():
    assert mo.cycle_type(np.array([1, 0, 2])) == [1, 2]
    assert mo.is_identity(np.arange(4))


def test_web_structure(q, web3):
    assert abs(web3.weights.sum() - 1) < 1e-12
    assert web3.report["bijective"] and web3.report["equivariant"]
    counts, internal = mo.preimage_counts(q, web3)
    assert set(counts) == {2}


def test_web_no_intersections(q, web3):
    found, gmin = mo.graph_intersections(q, web3)
    assert found == [] and gmin > 1e-3


def test_pushforward(q):
    mesh = polydisk([0], 0.2, 5)
    web = mo.build_web(q, mesh, 8)
    ref = pullback_measure(q, mesh.nodes[3], depth=12)
    assert mo.pushforward_check(web, 3, ref) <= 0.05


def test_misiurewicz_segment(q):
    seg = segment(-2.1, -1.9, 11)
    web = mo.build_web(q, seg, 1, max_hole_fraction=1.0)
    cand = mo.misiurewicz_scan(q, seg, web, n_f=3)
    assert len(cand) >= 1
    assert min(abs(c.lam[0] + 2) for c in cand) < 1e-3


def test_web_rows_columns(web3):
    rows = mo.web_rows(web3)
    assert len(rows[0]) == len(mo.motion_columns(1, 1))
