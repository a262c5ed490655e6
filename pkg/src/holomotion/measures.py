"""Point-cloud approximations of the equilibrium measure and their distances.

Two constructions: the pullback tree of a generic seed (all d^(k n)
solutions of f^n(w) = seed, equal weights) and the uniform measure on
repelling J-points of period dividing n.
"""
import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import proj_geom as pg
from .solvers import preimages

DEFAULT_BUDGET = 2 ** 16


class MeasureError(RuntimeError):
    pass


@dataclass
class PointCloudMeasure:
    lam: np.ndarray
    atoms: np.ndarray  # (N, k+1) canonical lifts
    weights: np.ndarray  # (N,)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=complex)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.atoms.shape[0] != self.weights.shape[0]:
            raise MeasureError("atom and weight counts differ")
        if self.atoms.shape[0] == 0:
            raise MeasureError("empty measure")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise MeasureError("weights must be non-negative and sum to 1")

    @property
    def k(self):
        return self.atoms.shape[1] - 1

    def __len__(self):
        return self.atoms.shape[0]

    def moment(self, i=0, j=-1):
        """First moment of the affine coordinate x_i / x_j."""
        z = self.atoms[:, i] / self.atoms[:, j]
        return complex(np.sum(self.weights * z))


def uniform_measure(lam, atoms, provenance):
    atoms = pg.normalize(atoms)
    n = atoms.shape[0]
    return PointCloudMeasure(np.atleast_1d(lam), atoms, np.full(n, 1.0 / n), provenance)


def depth_for_budget(k, d, budget=DEFAULT_BUDGET):
    return int(np.floor(np.log(budget) / (k * np.log(d)) + 1e-9))


def seed_point(rng, k, n=1):
    return pg.random_points(rng, n, k)


def pullback_tree(fmap, seeds, depth, solver_seed=0):
    """All depth-fold preimages of seeds under a (batched) fiber map.

    seeds has shape (B, k+1) aligned with the batch of fmap (or a single
    map with B = 1).  Returns atoms (B, d^(k depth), k+1) ordered so that
    the children of atom i at level n-1 are the block i*d^k .. i*d^k+d^k-1
    at level n, plus a bool mask of atoms lost to solver failures.
    """
    x = np.asarray(seeds, dtype=complex)[:, None, :]
    f = fmap if fmap.coef.ndim == 2 else fmap.expand(1)
    lost = np.zeros(x.shape[:2], dtype=bool)
    for lev in range(depth):
        pre, info = preimages(f, x, seed=solver_seed + lev, allow_fail=True)
        B, M, nd, k1 = pre.shape
        bad = ~np.isfinite(pre).all(axis=-1)
        lost = np.repeat(lost, nd, axis=1) | bad.reshape(B, M * nd)
        x = np.where(bad[..., None], 0.0, pre).reshape(B, M * nd, k1)
    return x, lost


def pullback_measure(spec, lam, depth=None, seed=None, rng_seed=0, budget=DEFAULT_BUDGET,
                     max_loss=0.01, retries=3):
    """Pullback measure d^(-k depth) sum of point masses at f^(-depth)(seed).

    seed may be an explicit point of P^k; otherwise it is drawn from a
    generator seeded with rng_seed.  Solver failures drop subtrees and the
    mass is renormalized; a mass loss above max_loss is an error, as is a
    seed whose first preimages collide (exceptional set) after retries.
    """
    k, d = spec.k, spec.d
    cap = depth_for_budget(k, d, budget)
    depth = cap if depth is None else int(depth)
    if depth > cap:
        raise MeasureError(f"depth {depth} exceeds the atom budget {budget} (max depth {cap})")
    rng = np.random.default_rng(rng_seed)
    fmap = spec.at(lam)
    explicit = seed is not None
    for attempt in range(retries + 1):
        s = pg.normalize(seed)[None, :] if explicit else seed_point(rng, k)
        if not explicit and depth > 0:
            first, _ = preimages(fmap, s, allow_fail=True)
            first = first[0]
            if not np.isfinite(first).all():
                continue
            dd = pg.distance(first[:, None, :], first[None, :, :]) + np.eye(first.shape[0])
            if dd.min() < 1e-6:
                continue
        atoms, lost = pullback_tree(fmap, s, depth, solver_seed=rng_seed)
        atoms, lost = atoms[0], lost[0]
        loss = float(lost.mean())
        if loss <= max_loss:
            break
        if explicit:
            break
    else:
        raise MeasureError("could not find a non-exceptional seed")
    if loss > max_loss:
        raise MeasureError(f"pullback mass loss {loss:.3g} exceeds budget {max_loss}")
    keep = ~lost
    w = np.full(int(keep.sum()), 1.0 / keep.sum())
    prov = {"kind": "pullback", "depth": depth, "seed": s[0].tolist(), "rng_seed": rng_seed,
            "mass_loss": loss}
    return PointCloudMeasure(np.atleast_1d(lam), pg.normalize(atoms[keep]), w, prov)


def cycle_measure(spec, lam, n, **kw):
    """Uniform measure on the repelling J-points of period dividing n."""
    from .cycles import find_periodic

    cycles = find_periodic(spec, lam, n, **kw)
    pts = [c.points for c in cycles if c.repelling and c.in_julia and n % c.period == 0]
    if not pts:
        raise MeasureError(f"no repelling J-cycles of period dividing {n}")
    atoms = np.concatenate(pts)
    return uniform_measure(lam, atoms, {"kind": "cycles", "n": n, "count": atoms.shape[0]})


def integrate(measure, observable):
    """Weighted sum of a (vectorized) observable over the atoms."""
    vals = observable(measure.atoms)
    vals = np.asarray(vals, dtype=float)
    if vals.shape != (len(measure),):
        vals = np.array([float(observable(a)) for a in measure.atoms])
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise MeasureError(f"observable is not finite on atoms {bad[:10].tolist()}"
                           + (" ..." if bad.size > 10 else ""))
    return float(np.sum(measure.weights * vals))


# ---------------------------------------------------------------- distances


def w1_line(u, a, v, b):
    """Exact W1 between weighted samples on the real line (batched rows)."""
    u, v = np.atleast_2d(u), np.atleast_2d(v)
    a = np.broadcast_to(a, u.shape)
    b = np.broadcast_to(b, v.shape)
    allv = np.concatenate([u, v], axis=1)
    w = np.concatenate([a, -b], axis=1)
    order = np.argsort(allv, axis=1, kind="stable")
    s = np.take_along_axis(allv, order, axis=1)
    cw = np.cumsum(np.take_along_axis(w, order, axis=1), axis=1)
    return np.sum(np.abs(cw[:, :-1]) * np.diff(s, axis=1), axis=1)


def w1_circle(t1, a, t2, b):
    """Exact W1 for arc length between weighted angle samples on the unit circle."""
    t1 = np.mod(t1, 2 * np.pi)
    t2 = np.mod(t2, 2 * np.pi)
    allv = np.concatenate([t1, t2])
    w = np.concatenate([a, -b])
    order = np.argsort(allv, kind="stable")
    s = np.concatenate([allv[order], [2 * np.pi]])
    # D is the CDF difference on [s_i, s_{i+1}); it is 0 on [0, s_0)
    D = np.concatenate([[0.0], np.cumsum(w[order])])
    gaps = np.concatenate([[s[0]], np.diff(s)])
    # the rotation-optimal shift is a gap-weighted median of D
    o = np.argsort(D, kind="stable")
    cg = np.cumsum(gaps[o])
    c = D[o][min(np.searchsorted(cg, 0.5 * cg[-1]), len(D) - 1)]
    return float(np.sum(np.abs(D - c) * gaps))


def _affine_k1(atoms):
    z0, z1 = atoms[:, 0], atoms[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        return z0 / z1


def detect_mode(m1, m2, circle_tol=1e-3, line_tol=1e-9):
    if m1.k != 1:
        return "sliced"
    z = np.concatenate([_affine_k1(m1.atoms), _affine_k1(m2.atoms)])
    if not np.all(np.isfinite(z)):
        return "sliced"
    if np.max(np.abs(np.log(np.abs(z)))) <= circle_tol:
        return "circle"
    if np.max(np.abs(z.imag) / (1 + np.abs(z))) <= line_tol:
        return "line"
    return "sliced"


def sliced_w1(m1, m2, n_dirs, seed=0):
    """Mean 1-D W1 over random directions of the Hermitian embedding (chordal units)."""
    e1 = pg.hermitian_embedding(m1.atoms)
    e2 = pg.hermitian_embedding(m2.atoms)
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n_dirs, e1.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    w = w1_line(dirs @ e1.T, m1.weights, dirs @ e2.T, m2.weights)
    return float(np.mean(w) / np.sqrt(2.0))


def measure_distance(m1, m2, mode="auto", n_dirs=None, seed=0, assignment_budget=4_000_000):
    """Wasserstein-type distance between two point-cloud measures.

    modes: circle (arc-length W1 of angles, for clouds on |z| = 1),
    line (W1 of real coordinates), assignment (exact chordal W1 for equal
    uniform clouds), sliced (random 1-D projections of the Hermitian
    embedding; 64 directions for k = 1 and 128 for k = 2).
    """
    if m1.k != m2.k:
        raise MeasureError("measures live on different projective spaces")
    if mode == "auto":
        mode = detect_mode(m1, m2)
    if n_dirs is None:
        n_dirs = 64 if m1.k == 1 else 128
    if mode == "circle":
        t1 = np.angle(_affine_k1(m1.atoms))
        t2 = np.angle(_affine_k1(m2.atoms))
        return w1_circle(t1, m1.weights, t2, m2.weights)
    if mode == "line":
        u = _affine_k1(m1.atoms).real
        v = _affine_k1(m2.atoms).real
        return float(w1_line(u, m1.weights, v, m2.weights)[0])
    if mode == "assignment":
        n1, n2 = len(m1), len(m2)
        uniform = np.allclose(m1.weights, 1.0 / n1) and np.allclose(m2.weights, 1.0 / n2)
        if n1 == n2 and uniform and n1 * n2 <= assignment_budget:
            C = pg.pairwise_distance(m1.atoms, m2.atoms)
            r, c = linear_sum_assignment(C)
            return float(C[r, c].mean())
        warnings.warn("assignment budget exceeded or clouds not comparable; using sliced mode")
        mode = "sliced"
    if mode == "sliced":
        return sliced_w1(m1, m2, n_dirs, seed)
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------- io


def measure_to_rows(measure):
    rows = []
    for a, w in zip(measure.atoms, measure.weights):
        row = []
        for c in a:
            row += [repr(float(c.real)), repr(float(c.imag))]
        rows.append(row + [repr(float(w))])
    return rows


def measure_columns(k):
    cols = []
    for i in range(k + 1):
        cols += [f"x{i}_re", f"x{i}_im"]
    return cols + ["weight"]


def load_measure_csv(path, lam=0.0):
    with open(path) as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    head, body = rows[0], np.array(rows[1:], dtype=float)
    k1 = (len(head) - 1) // 2
    atoms = body[:, 0:2 * k1:2] + 1j * body[:, 1:2 * k1:2]
    w = body[:, -1]
    return PointCloudMeasure(np.atleast_1d(lam), atoms, w / w.sum(), {"kind": "file", "path": str(path)})
