"""Periodic points of f_lam^n, multipliers, and repelling-cycle census.

k = 1: the d^n + 1 fixed points of f^n are the roots of the binary form
x ^ F^n(x).  Its coefficients span a dynamic range of order
exp(d^n * osc(G)) (G the homogeneous Green function), so only small
degrees (d^n + 1 <= 64) start from companion eigenvalues; larger ones
start from depth-n pullback atoms.  All roots are then refined
simultaneously by Aberth iterations whose Newton ratios p/p' come from
the normalized iterated lift, which is scale free.

k = 2: Newton on f^n(x) = x in moving unitary charts, seeded by pullback
atoms and a coarse grid, then deduplicated.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import proj_geom as pg
from .family import product_chain, iterate_chart_map, safe_solve

DELTA_REP = 1e-3
DEDUP = 1e-8
EPS_J = 1e-2
RESIDUAL_TOL = 1e-10


class CycleError(RuntimeError):
    pass


@dataclass
class Cycle:
    period: int
    points: np.ndarray  # (period, k+1)
    multipliers: np.ndarray  # (k,) eigenvalues of D f^period at points[0]
    lam: np.ndarray = None
    repelling: bool = False
    indeterminate: bool = False
    in_julia: bool = None
    confidence: float = 0.0
    residual: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def k(self):
        return self.points.shape[1] - 1

    @property
    def moduli(self):
        return np.sort(np.abs(self.multipliers))


def _divisors(n):
    return [m for m in range(1, n + 1) if n % m == 0]


# ---------------------------------------------------------------- k = 1


def _fixed_form_ratio(fmap, U, z, n):
    """Newton ratio p/p' for p(z) = x ^ F^n(x), x = U (z, 1)."""
    x = np.stack([z, np.ones_like(z)], axis=-1) @ U.T
    dx = np.broadcast_to(U[:, 0], x.shape)
    s0 = np.linalg.norm(x, axis=-1, keepdims=True)
    y, dy = x / s0, dx / s0
    for _ in range(n):
        Y, J = fmap.lift_and_jac(y)
        dy = np.einsum("...ij,...j->...i", J, dy)
        s = np.linalg.norm(Y, axis=-1, keepdims=True)
        y, dy = Y / s, dy / s
    xs, dxs = x / s0, dx / s0
    p = xs[..., 0] * y[..., 1] - xs[..., 1] * y[..., 0]
    dp = dxs[..., 0] * y[..., 1] + xs[..., 0] * dy[..., 1] - dxs[..., 1] * y[..., 0] - xs[..., 1] * dy[..., 0]
    # p and dp carry the same (frozen) scale factors, so p/dp is the exact ratio
    with np.errstate(all="ignore"):
        return p / dp


def _companion_guess(fmap, U, n, N):
    """Initial roots from DFT coefficients (small degrees only)."""
    M = N + 1
    t = 1.3 * np.exp(2j * np.pi * (np.arange(M) + 0.5) / M)
    x = np.stack([t, np.ones_like(t)], axis=-1) @ U.T
    # p(t) = |F^n(x)| (x ^ y) with log |F^n(x)| accumulated in lg
    lg = np.zeros(M)
    y = x.copy()
    for _ in range(n):
        Y = fmap.lift(y)
        s = np.linalg.norm(Y, axis=-1)
        lg = fmap.d * lg + np.log(s)
        y = Y / s[:, None]
    vals = (x[:, 0] * y[:, 1] - x[:, 1] * y[:, 0]) * np.exp(lg - lg.max())
    c = np.fft.fft(vals) / M / (1.3 ** np.arange(M))
    c = c[:N + 1]
    roots = np.roots(c[::-1])
    if len(roots) < N:
        return None
    return roots


def _pullback_guess(fmap, U, n, rng_seed):
    """Initial roots from depth-n pullback atoms (distributed like the roots)."""
    from .measures import pullback_tree, seed_point

    s = seed_point(np.random.default_rng(rng_seed), 1)
    atoms, lost = pullback_tree(fmap, s, n, solver_seed=rng_seed)
    x = atoms[0] @ U.conj()
    with np.errstate(all="ignore"):
        z = x[:, 0] / x[:, 1]
    z = np.where(np.isfinite(z) & ~lost[0], z, 2.0 + 0.5j)
    # one extra guess for the (d^n + 1)-th root; jitter breaks exact ties
    z = np.concatenate([z, [3.7 + 1.1j]])
    z = z + 1e-9 * np.exp(2j * np.pi * np.arange(z.size) / 7.3)
    return z


def aberth_roots(fmap, U, n, max_iter=800, tol=1e-14, rng_seed=0):
    N = fmap.d ** n + 1
    z = None
    if N > 64:
        z = _pullback_guess(fmap, U, n, rng_seed)
    else:
        try:
            z = _companion_guess(fmap, U, n, N)
        except np.linalg.LinAlgError:
            z = None
        if z is not None and not np.all(np.isfinite(z)):
            z = None
    if z is None:
        z = 1.3 * np.exp(2j * np.pi * (np.arange(N) + 0.25) / N)
    conv = np.zeros(N, dtype=bool)
    it, best, since = 0, 0, 0
    for it in range(max_iter):
        r = _fixed_form_ratio(fmap, U, z, n)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        s = (1.0 / diff).sum(axis=1) - 1.0
        with np.errstate(all="ignore"):
            w = r / (1.0 - r * s)
        w = np.where(np.isfinite(w), w, 0)
        w[conv] = 0
        z = z - w
        conv |= np.abs(w) <= tol * (1 + np.abs(z))
        if conv.all():
            break
        # clustered roots (parabolic parameters) stall; stop when no progress
        nc = int(conv.sum())
        best, since = (nc, 0) if nc > best else (best, since + 1)
        if since > 150:
            break
    for _ in range(2):
        r = _fixed_form_ratio(fmap, U, z, n)
        z = z - np.where(np.isfinite(r) & (np.abs(r) < 1e-3 * (1 + np.abs(z))), r, 0)
    x = np.stack([z, np.ones_like(z)], axis=-1) @ U.T
    return pg.normalize(x), {"iterations": it + 1, "converged": int(conv.sum()), "expected": N}


# ---------------------------------------------------------------- k >= 2


def newton_periodic(fmap, x, n, iters=40, tol=1e-13):
    """Newton on f^n(x) = x in unitary charts re-centered at each iterate."""
    x = pg.normalize(x)
    k = fmap.k
    eye = np.eye(k)
    active = np.ones(x.shape[0], dtype=bool)
    for _ in range(iters):
        if not active.any():
            break
        xa = x[active]
        H = pg.centering_unitary(xa)
        z0 = np.zeros(xa.shape[:-1] + (k,), dtype=complex)
        with np.errstate(all="ignore"):
            w, dw = iterate_chart_map(fmap, H, H, z0, n)
            step = -safe_solve(dw - eye, w)
        ok = np.isfinite(step).all(axis=-1) & (np.linalg.norm(step, axis=-1) < 1.0)
        step = np.where(ok[:, None], step, 0)
        xn = pg.normalize(pg.lift_from_chart(H, step))
        idx = np.flatnonzero(active)
        x[idx] = xn
        small = np.linalg.norm(step, axis=-1) < tol
        active[idx[small | ~ok]] = False
    return x


def _periodic_seeds(spec, lam, n, fmap, n_trees, grid, rng_seed):
    from .measures import pullback_tree, seed_point, depth_for_budget

    rng = np.random.default_rng(rng_seed)
    k = spec.k
    depth = min(n, depth_for_budget(k, spec.d, 2 ** 14))
    seeds = []
    for _ in range(n_trees):
        s = seed_point(rng, k)
        atoms, lost = pullback_tree(fmap, s, depth, solver_seed=rng_seed)
        seeds.append(atoms[0][~lost[0]])
    g = np.linspace(-1.5, 1.5, grid)
    G = np.stack(np.meshgrid(*([g] * k), indexing="ij"), axis=-1).reshape(-1, k)
    G = G[:, :] + 0.37j * G[:, ::-1]
    for i in range(k + 1):
        x = np.insert(G, i, 1.0, axis=1)
        seeds.append(x)
    return pg.normalize(np.concatenate(seeds))


# ---------------------------------------------------------------- assembly


def periodic_residual(fmap, x, n):
    return pg.distance(fmap.iterate(x, n), x)


def exact_period(fmap, x, n, tol=DEDUP):
    """Minimal divisor m of n with f^m(x) = x (per point)."""
    per = np.full(x.shape[0], n)
    y = x.copy()
    for m in range(1, n):
        y = fmap.step(y)
        if n % m == 0:
            hit = (pg.distance(y, x) < tol) & (per == n)
            per[hit] = m
    return per


def classify(cycle, spec, lam, delta_rep=DELTA_REP):
    """Fill multipliers and flags from the Jacobian product over one period."""
    fmap = spec.at(lam)
    pts = cycle.points
    Ds = fmap.chart_jacobian(pts)
    n = cycle.period
    M0 = product_chain([Ds[j % n] for j in range(n)])
    ev = np.linalg.eigvals(M0)
    conf = 1.0
    if n > 1:
        M1 = product_chain([Ds[(j + 1) % n] for j in range(n)])
        ev1 = np.linalg.eigvals(M1)
        gap = np.max(np.abs(np.sort_complex(ev) - np.sort_complex(ev1))) / (1 + np.max(np.abs(ev)))
        if gap > 1e-6:
            conf = 0.5
            cycle.notes.append(f"multiplier spectra differ across base points by {gap:.2e}")
    if np.linalg.cond(np.linalg.eig(M0)[1]) > 1e8:
        conf = min(conf, 0.5)
        cycle.notes.append("ill-conditioned eigenproblem")
    mod = np.abs(ev)
    cycle.multipliers = ev
    cycle.indeterminate = bool(np.any(np.abs(mod - 1.0) <= delta_rep))
    cycle.repelling = bool(np.all(mod > 1.0 + delta_rep))
    cycle.confidence = conf
    cycle.lam = np.atleast_1d(lam)
    if spec.k == 1:
        if cycle.repelling:
            cycle.in_julia, cycle.confidence = True, conf
        elif cycle.indeterminate:
            cycle.in_julia, cycle.confidence = True, 0.5 * conf
        else:
            cycle.in_julia = False
    return cycle


def julia_membership(spec, lam, points, eps_j=EPS_J, depth=None, rng_seed=0):
    """Distance test against the pullback-measure support (k >= 2 surrogate).

    The threshold is max(eps_j, 2 * median nearest-neighbour spacing of the
    atoms): a finite cloud cannot resolve the support below its spacing.
    """
    from .measures import pullback_measure, depth_for_budget

    if depth is None:
        depth = depth_for_budget(spec.k, spec.d, 2 ** 14)
    m = pullback_measure(spec, lam, depth, rng_seed=rng_seed)
    E = pg.hermitian_embedding(m.atoms)
    tree = cKDTree(E)
    dd, _ = tree.query(E, k=2)
    spacing = float(np.median(dd[:, 1])) / np.sqrt(2)
    thr = max(eps_j, 2 * spacing)
    dist, _ = tree.query(pg.hermitian_embedding(points))
    dist = dist / np.sqrt(2)
    return dist <= thr, dist, thr


def _canonical_key(p):
    p = pg.normalize(p)
    return tuple(np.round(np.concatenate([p.real, p.imag]), 9))


def find_periodic(spec, lam, n, rng_seed=0, n_trees=3, grid=7, delta_rep=DELTA_REP):
    """All cycles of exact period m | n of f_lam, classified.

    Roots the solver failed to converge are reported in the first cycle's
    notes list via the returned attribute ``find_periodic.last_report``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("period must be >= 1")
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    fmap = spec.at(lam)
    report = {"n": n}
    if spec.k == 1:
        from .family import fixed_rotation

        U = fixed_rotation(2, 3)
        x, info = aberth_roots(fmap, U, n, rng_seed=rng_seed)
        report.update(info)
    else:
        seeds = _periodic_seeds(spec, lam, n, fmap, n_trees, grid, rng_seed)
        x = newton_periodic(fmap, seeds, n)
    res = periodic_residual(fmap, x, n)
    good = res < 1e-8
    report["nonconverged"] = int((~good).sum())
    x, res = x[good], res[good]
    # deduplicate (clusters at parabolic parameters, repeated Newton limits)
    keep = []
    if len(x):
        E = pg.hermitian_embedding(x)
        tree = cKDTree(E)
        taken = np.zeros(len(x), dtype=bool)
        for i in np.argsort(res):
            if taken[i]:
                continue
            nb = tree.query_ball_point(E[i], DEDUP * np.sqrt(2))
            taken[nb] = True
            keep.append(i)
    report["duplicates"] = int(len(x) - len(keep))
    x, res = x[keep], res[keep]
    per = exact_period(fmap, x, n)
    E = pg.hermitian_embedding(x) if len(x) else np.zeros((0, 1))
    tree = cKDTree(E) if len(x) else None
    used = np.zeros(len(x), dtype=bool)
    cycles = []
    for i in range(len(x)):
        if used[i]:
            continue
        p = int(per[i])
        orbit = [x[i]]
        used[i] = True
        y = x[i]
        for _ in range(p - 1):
            y = pg.normalize(fmap.lift(y))
            dist, j = tree.query(pg.hermitian_embedding(y))
            if dist / np.sqrt(2) < 1e-6 and not used[j]:
                used[j] = True
                orbit.append(x[j])
            else:
                orbit.append(y)
        pts = np.array(orbit)
        # canonical base point
        keys = [_canonical_key(q) for q in pts]
        b = min(range(p), key=lambda j: keys[j])
        pts = np.roll(pts, -b, axis=0)
        cyc = Cycle(p, pts, np.zeros(spec.k, dtype=complex), residual=float(np.max(periodic_residual(fmap, pts, p))))
        cycles.append(classify(cyc, spec, lam, delta_rep))
    if spec.k >= 2 and cycles:
        allpts = np.concatenate([c.points for c in cycles])
        inj, dist, thr = julia_membership(spec, lam, allpts, rng_seed=rng_seed)
        o = 0
        for c in cycles:
            sl = slice(o, o + c.period)
            o += c.period
            c.in_julia = bool(np.all(inj[sl]))
            c.confidence *= float(np.clip(1 - np.max(dist[sl]) / (2 * thr), 0, 1)) if c.in_julia else 1.0
    cycles.sort(key=lambda c: (c.period, _canonical_key(c.points[0])))
    find_periodic.last_report = report
    return cycles


def repelling_points(cycles, n=None):
    pts = [c.points for c in cycles if c.repelling and c.in_julia and (n is None or n % c.period == 0)]
    return np.concatenate(pts) if pts else np.zeros((0, 2), dtype=complex)


def count_audit(spec, lam, n_max, **kw):
    """Rows (n, N(n), N(n) / d^(k n)) for repelling J-points of period dividing n."""
    rows = []
    for n in range(1, n_max + 1):
        cyc = find_periodic(spec, lam, n, **kw)
        N = int(sum(c.period for c in cyc if c.repelling and c.in_julia))
        rows.append((n, N, N / spec.d ** (spec.k * n)))
    return rows


def cycles_to_rows(cycles):
    rows = []
    for ci, c in enumerate(cycles):
        lam = np.atleast_1d(c.lam)
        for j, p in enumerate(c.points):
            row = []
            for l in lam:
                row += [repr(float(l.real)), repr(float(l.imag))]
            row += [str(ci), str(c.period), str(j)]
            for v in p:
                row += [repr(float(v.real)), repr(float(v.imag))]
            row += [repr(float(m)) for m in c.moduli]
            row += [str(int(c.repelling)), str(int(c.indeterminate)), str(int(bool(c.in_julia))),
                    repr(float(c.confidence))]
            rows.append(row)
    return rows


def cycle_columns(k, m):
    cols = []
    for a in range(m):
        cols += [f"lam{a}_re", f"lam{a}_im"]
    cols += ["cycle", "period", "index"]
    for i in range(k + 1):
        cols += [f"x{i}_re", f"x{i}_im"]
    cols += [f"mult{i}_abs" for i in range(k)]
    return cols + ["repelling", "indeterminate", "in_julia", "confidence"]
