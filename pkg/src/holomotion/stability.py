"""Lyapunov sum L(lam), smallest exponent, and the harmonicity test of L.

L(lam) is the integral of ln|det Df_lam| against the equilibrium measure.
With chart (spherical) Jacobians the integrand is the same function up to
a coboundary, so the integral is unchanged.

The grid test evaluates L at every node (and at ghost nodes one step
outside), forms 5-point Laplacians in each complex parameter direction,
and compares them with a threshold calibrated from the Monte Carlo noise
of constant families.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import proj_geom as pg
from .family import constant_family, critical_points, safe_solve, smallest_singular
from .measures import pullback_tree, seed_point, depth_for_budget, MeasureError
from .solvers import preimages

EPS_CRIT = 1e-6
MAX_EXCLUDED = 0.01


class StabilityError(RuntimeError):
    pass


@dataclass
class LyapResult:
    value: float
    stderr: float
    excluded_mass: float
    method: str
    replicates: np.ndarray = None

    def __float__(self):
        return self.value


def _crit_distance(spec, fmap_batch, lams, atoms):
    """Chordal distance of atoms (B, N, k+1) to the critical set, per node."""
    B = atoms.shape[0]
    if spec.k == 1:
        out = np.empty(atoms.shape[:2])
        for b in range(B):
            c = critical_points(spec, lams[b])
            out[b] = pg.distance(atoms[b][:, None, :], c[None, :, :]).min(axis=1)
        return out
    # first-order estimate |q| / |grad q| of the homogeneous determinant in a chart
    f = fmap_batch
    H = pg.centering_unitary(atoms)
    z0 = np.zeros(atoms.shape[:-1] + (spec.k,), dtype=complex)
    q0 = f.hom_det(pg.lift_from_chart(H, z0))
    h = 1e-6
    grad = []
    for i in range(spec.k):
        e = np.zeros(spec.k)
        e[i] = h
        qp = f.hom_det(pg.lift_from_chart(H, z0 + e))
        qm = f.hom_det(pg.lift_from_chart(H, z0 - e))
        grad.append((qp - qm) / (2 * h))
    g = np.sqrt(sum(np.abs(v) ** 2 for v in grad))
    with np.errstate(all="ignore"):
        return np.where(g > 0, np.abs(q0) / g, np.where(q0 == 0, 0.0, np.inf))


def log_jac_means(spec, lams, seeds, depth, eps_crit=EPS_CRIT, solver_seed=0, chunk=None):
    """Pullback estimates of L at a batch of parameters.

    lams (B, m); seeds (B, k+1) (repeat one seed for common random numbers).
    Returns (L, excluded_mass), both of shape (B,).
    """
    lams = np.asarray(lams, dtype=complex).reshape(-1, spec.m)
    seeds = np.asarray(seeds, dtype=complex).reshape(lams.shape[0], -1)
    B = lams.shape[0]
    n_atoms = spec.d ** (spec.k * depth)
    if chunk is None:
        chunk = max(1, int(2 ** 20 // n_atoms))
    L = np.empty(B)
    excl = np.empty(B)
    for s in range(0, B, chunk):
        sl = slice(s, min(B, s + chunk))
        f = spec.at(lams[sl])
        atoms, lost = pullback_tree(f, seeds[sl], depth, solver_seed=solver_seed)
        fa = f.expand(1)
        with np.errstate(all="ignore"):
            D = fa.chart_jacobian(np.where(lost[..., None], 1.0, atoms))
            lj = np.log(np.abs(np.linalg.det(D)))
        near = _crit_distance(spec, fa, lams[sl], atoms) < eps_crit
        drop = near | lost | ~np.isfinite(lj)
        w = (~drop).astype(float)
        cnt = w.sum(axis=1)
        with np.errstate(all="ignore"):
            L[sl] = np.where(cnt > 0, np.sum(np.where(drop, 0.0, lj), axis=1) / cnt, np.nan)
        excl[sl] = drop.mean(axis=1)
    return L, excl


def lyap_sum(spec, lam, method="pullback", depth=None, replicates=4, rng_seed=0,
             eps_crit=EPS_CRIT, max_excluded=MAX_EXCLUDED, chains=64, burn_in=100,
             total=100_000):
    """L(lam) with a standard error from independent replicates/chains."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    rng = np.random.default_rng(rng_seed)
    if method == "pullback":
        if depth is None:
            depth = min(12, depth_for_budget(spec.k, spec.d))
        seeds = seed_point(rng, spec.k, replicates)
        vals, excl = log_jac_means(spec, np.repeat(lam[None, :], replicates, 0), seeds, depth,
                                   eps_crit, solver_seed=rng_seed)
        ex = float(excl.mean())
        if ex > max_excluded:
            raise StabilityError(f"excluded mass {ex:.3g} near the critical set exceeds {max_excluded}")
        se = float(vals.std(ddof=1) / np.sqrt(replicates)) if replicates > 1 else float("nan")
        return LyapResult(float(vals.mean()), se, ex, "pullback", vals)
    if method == "birkhoff":
        means, ex = _birkhoff(spec, lam, rng, chains, burn_in, total, eps_crit)
        if ex > max_excluded:
            raise StabilityError(f"excluded mass {ex:.3g} near the critical set exceeds {max_excluded}")
        return LyapResult(float(means.mean()), float(means.std(ddof=1) / np.sqrt(len(means))), ex,
                          "birkhoff", means)
    raise ValueError(f"unknown method {method!r}")


def backward_chain(fmap, x, rng):
    """One uniformly random preimage for each row of x (n, k+1)."""
    pre, info = preimages(fmap, x, seed=int(rng.integers(1 << 30)), allow_fail=True)
    idx = rng.integers(pre.shape[1], size=pre.shape[0])
    y = pre[np.arange(pre.shape[0]), idx]
    bad = ~np.isfinite(y).all(axis=-1)
    return y, bad


def _start_points(spec, fmap, rng, n):
    """mu-distributed starting points: random leaves of a shallow pullback tree."""
    depth = min(6, depth_for_budget(spec.k, spec.d, 4096))
    atoms, lost = pullback_tree(fmap, seed_point(rng, spec.k), depth)
    ok = np.flatnonzero(~lost[0])
    return atoms[0][rng.choice(ok, size=n)]


def _birkhoff(spec, lam, rng, chains, burn_in, total, eps_crit):
    """Averages of ln|det DF| along random backward orbits.

    Forward orbits leave the repeller exponentially fast in floating point,
    while the uniform random backward walk is attracted to it and has the
    equilibrium measure as its stationary law.
    """
    fmap = spec.at(lam)
    x = _start_points(spec, fmap, rng, chains)
    for _ in range(burn_in):
        x, bad = backward_chain(fmap, x, rng)
        x[bad] = _start_points(spec, fmap, rng, int(bad.sum()))[: int(bad.sum())] if bad.any() else x[bad]
    steps = int(np.ceil(total / chains))
    acc = np.zeros(chains)
    cnt = np.zeros(chains)
    n_ex = 0
    crit = critical_points(spec, lam) if spec.k == 1 else None
    for _ in range(steps):
        x, bad = backward_chain(fmap, x, rng)
        if bad.any():
            x[bad] = _start_points(spec, fmap, rng, int(bad.sum()))
        with np.errstate(all="ignore"):
            lj = np.log(np.abs(np.linalg.det(fmap.chart_jacobian(x))))
        if crit is not None:
            near = pg.distance(x[:, None, :], crit[None]).min(axis=1) < eps_crit
        else:
            near = _crit_distance(spec, fmap.expand(1), lam[None], x[None])[0] < eps_crit
        use = ~near & np.isfinite(lj)
        n_ex += int((~use).sum())
        acc[use] += lj[use]
        cnt[use] += 1
    return acc / np.maximum(cnt, 1), n_ex / (steps * chains)


@dataclass
class ChiResult:
    value: float
    stderr: float
    near_critical: float
    indeterminate: bool
    exponents: np.ndarray = None


def chi_min(spec, lam, n=2000, chains=8, rng_seed=0, eps_crit=EPS_CRIT, batches=20):
    """Smallest Lyapunov exponent from products of inverse chart Jacobians.

    Along a backward orbit x_0, x_{-1}, ... the inverse derivative of
    f^n at x_{-n} is A_n ... A_1 with A_j = DF(x_{-j})^{-1}; its
    exponents are minus those of f.  The product is re-orthonormalized by
    QR at every step.  Each chain gives one estimate; the standard error
    combines chain spread and batch means.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    rng = np.random.default_rng(rng_seed)
    fmap = spec.at(lam)
    k = spec.k
    x = _start_points(spec, fmap, rng, chains)
    for _ in range(50):
        x, bad = backward_chain(fmap, x, rng)
        if bad.any():
            x[bad] = _start_points(spec, fmap, rng, int(bad.sum()))
    Q = np.broadcast_to(np.eye(k, dtype=complex), (chains, k, k)).copy()
    logs = np.zeros((n, chains, k))
    near_count = 0
    crit = critical_points(spec, lam) if k == 1 else None
    for j in range(n):
        x, bad = backward_chain(fmap, x, rng)
        if bad.any():
            x[bad] = _start_points(spec, fmap, rng, int(bad.sum()))
        D = fmap.chart_jacobian(x)
        if crit is not None:
            near = pg.distance(x[:, None, :], crit[None]).min(axis=1) < eps_crit
        else:
            near = smallest_singular(D) < eps_crit
        near_count += int(near.sum())
        A = safe_solve(D, np.broadcast_to(np.eye(k), D.shape))
        M = np.einsum("cij,cjk->cik", A, Q)
        M = np.where(np.isfinite(M), M, 0)
        Q, R = np.linalg.qr(M)
        dg = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
        logs[j] = np.log(np.maximum(dg, 1e-300))
    # exponents of the inverse cocycle; the largest is -chi_1
    inv_exp = logs.mean(axis=0)  # (chains, k)
    per_chain = -inv_exp.max(axis=1)
    top = np.argmax(inv_exp.mean(axis=0))
    series = -logs[:, :, top].mean(axis=1)
    bm = np.array([b.mean() for b in np.array_split(series, batches)])
    se_batch = bm.std(ddof=1) / np.sqrt(batches)
    se_chain = per_chain.std(ddof=1) / np.sqrt(chains) if chains > 1 else 0.0
    frac = near_count / (n * chains)
    exps = -np.sort(inv_exp.mean(axis=0))[::-1]
    return ChiResult(float(per_chain.mean()), float(max(se_batch, se_chain)), frac, frac > 0.05, exps)


# ---------------------------------------------------------------- grids


@dataclass
class StabilityGrid:
    mesh: object
    L: np.ndarray
    chi: np.ndarray
    stencil: np.ndarray  # (N, n_probe) signed Laplacians
    classes: np.ndarray  # (N,) of str
    theta: float
    h: float
    noise_floor: float
    excluded: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def stencil_max(self):
        with np.errstate(invalid="ignore"):
            return np.max(np.abs(self.stencil), axis=1)


def _probe_dirs(m, probes, rng):
    dirs = [np.eye(m, dtype=complex)[a] for a in range(m)]
    if m >= 2:
        for _ in range(probes):
            v = rng.normal(size=m) + 1j * rng.normal(size=m)
            dirs.append(v / np.linalg.norm(v))
    return dirs


def _stencil_points(mesh, h, dirs):
    """Evaluation points: for each node and direction, the four neighbours."""
    N = len(mesh)
    pts = [mesh.nodes]
    for v in dirs:
        for s in (h, -h, 1j * h, -1j * h):
            pts.append(mesh.nodes + s * v[None, :])
    allp = np.concatenate(pts)  # ((1 + 4 P) N, m)
    key = np.round(np.concatenate([allp.real, allp.imag], axis=1) / (h * 1e-6)).astype(np.int64)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    first = np.full(len(uniq), -1)
    first[inv[::-1]] = np.arange(len(inv))[::-1]
    return allp[first], inv.reshape(1 + 4 * len(dirs), N)


def stencils_from_values(Lu, inv, h, n_dirs):
    c = Lu[inv[0]]
    out = []
    for p in range(n_dirs):
        nb = Lu[inv[1 + 4 * p: 5 + 4 * p]]
        out.append((nb.sum(axis=0) - 4 * c) / (h * h))
    return np.stack(out, axis=1)


def noise_floor(spec, lams, h, depth, rng_seed=0, size=5, eps_crit=EPS_CRIT):
    """Max |stencil| for constant families frozen at lams, independent seeds.

    For each parameter the frozen family is evaluated on a size x size
    grid with an independent seed per node; its L is constant, so every
    stencil is pure Monte Carlo noise.
    """
    rng = np.random.default_rng(rng_seed)
    floors = []
    for lam in np.atleast_2d(lams):
        frozen = constant_family(spec, lam)
        seeds = seed_point(rng, spec.k, size * size)
        L, _ = log_jac_means(frozen, np.repeat(lam[None, :], size * size, 0), seeds, depth,
                             eps_crit, solver_seed=rng_seed)
        L = L.reshape(size, size)
        st = (L[1:-1, 2:] + L[1:-1, :-2] + L[2:, 1:-1] + L[:-2, 1:-1] - 4 * L[1:-1, 1:-1]) / h ** 2
        floors.append(float(np.nanmax(np.abs(st))))
    return max(floors), floors


def harmonicity_grid(spec, mesh, depth=None, theta=None, rng_seed=0, probes=2,
                     eps_crit=EPS_CRIT, calib_nodes=4, with_chi=None, chi_steps=500):
    """Discrete dd^c test of L over a grid mesh.

    theta defaults to 5x the noise floor of constant families frozen at the
    mesh base node and at calib_nodes further seeded nodes (max over them).
    """
    if len(mesh) == 0:
        raise StabilityError("empty mesh")
    if mesh.m not in (1, 2):
        raise StabilityError("harmonicity grids support m in {1, 2}")
    h = mesh.step
    if h is None or h <= 0:
        raise StabilityError("mesh has no grid step")
    if depth is None:
        depth = min(14, depth_for_budget(spec.k, spec.d))
    rng = np.random.default_rng(rng_seed)
    dirs = _probe_dirs(spec.m, probes, rng)
    pts, inv = _stencil_points(mesh, h, dirs)
    seed = seed_point(rng, spec.k)
    Lu, exu = log_jac_means(spec, pts, np.repeat(seed, len(pts), 0), depth, eps_crit,
                            solver_seed=rng_seed)
    bad_u = ~np.isfinite(Lu) | (exu > MAX_EXCLUDED)
    Lu = np.where(bad_u, np.nan, Lu)
    st = stencils_from_values(Lu, inv, h, len(dirs))
    L = Lu[inv[0]]
    excl = exu[inv[0]]
    floor, floors = float("nan"), []
    if theta is None:
        cal = [mesh.nodes[mesh.base]]
        if calib_nodes:
            cal += list(mesh.nodes[rng.choice(len(mesh), size=min(calib_nodes, len(mesh)), replace=False)])
        floor, floors = noise_floor(spec, np.array(cal), h, depth, rng_seed + 1, eps_crit=eps_crit)
        theta = 5.0 * floor
        if not theta > 0:
            theta = 1e-12
    smax = np.max(np.abs(st), axis=1)
    classes = np.where(smax <= theta, "stable", np.where(smax >= 10 * theta, "bifurcation", "indeterminate"))
    classes = np.where(np.isnan(st).any(axis=1), "indeterminate", classes).astype(object)
    if with_chi is None:
        with_chi = spec.k == 1
    if spec.k == 1:
        chi = L.copy()  # one exponent: chi_1 = L
    elif with_chi:
        chi = np.array([chi_min(spec, lam, n=chi_steps, chains=4, rng_seed=rng_seed).value
                        for lam in mesh.nodes])
    else:
        chi = np.full(len(mesh), np.nan)
    tol = 0.02
    meta = {
        "depth": depth,
        "floors": floors,
        "lower_bound_L": bool(np.all(L[np.isfinite(L)] >= spec.k * np.log(spec.d) / 2 - tol)),
        "chi_le_L_over_k": bool(np.all((chi <= L / spec.k + tol) | ~np.isfinite(chi))),
        "directions": len(dirs),
    }
    return StabilityGrid(mesh, L, chi, st, classes, float(theta), float(h), floor, excl, meta)


@dataclass
class ClassReport:
    mask: np.ndarray
    labels: np.ndarray
    n_components: int
    max_stencil_stable: float
    stable_fraction: float
    counts: dict

    def summary(self):
        out = {"stable_components": self.n_components,
               "max_stencil_stable": self.max_stencil_stable,
               "stable_fraction": self.stable_fraction}
        out.update({f"count_{k}": v for k, v in self.counts.items()})
        return out


def classify_report(grid):
    """Bifurcation mask and connected stable components over the mesh graph."""
    N = len(grid.classes)
    if N == 0:
        raise StabilityError("empty grid")
    stable = grid.classes == "stable"
    e = grid.mesh.edges
    keep = stable[e[:, 0]] & stable[e[:, 1]] if len(e) else np.zeros(0, bool)
    A = coo_matrix((np.ones(int(keep.sum())), (e[keep, 0], e[keep, 1])), shape=(N, N))
    _, lab = connected_components(A, directed=False)
    labels = np.full(N, -1)
    uniq = np.unique(lab[stable])
    for i, u in enumerate(uniq):
        labels[stable & (lab == u)] = i
    smax = grid.stencil_max
    mx = float(np.nanmax(smax[stable])) if stable.any() else float("nan")
    counts = {c: int(np.sum(grid.classes == c)) for c in ("stable", "bifurcation", "indeterminate")}
    return ClassReport(grid.classes == "bifurcation", labels, len(uniq), mx, float(stable.mean()), counts)


def grid_columns(m, n_dirs):
    cols = []
    for a in range(m):
        cols += [f"lam{a}_re", f"lam{a}_im"]
    cols += ["L", "chi1"] + [f"stencil{p}" for p in range(n_dirs)] + ["stencil_max", "class"]
    return cols


def grid_rows(grid):
    rows = []
    for i in range(len(grid.mesh)):
        row = []
        for l in grid.mesh.nodes[i]:
            row += [repr(float(l.real)), repr(float(l.imag))]
        row += [repr(float(grid.L[i])), repr(float(grid.chi[i]))]
        row += [repr(float(s)) for s in grid.stencil[i]]
        row += [repr(float(grid.stencil_max[i])), str(grid.classes[i])]
        rows.append(row)
    return rows
