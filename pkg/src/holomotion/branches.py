"""Backward orbits, inverse-derivative norms u_n and inverse-branch contraction.

A backward orbit stores gamma_0, gamma_{-1}, ..., gamma_{-N} with
f(gamma_{-j}) = gamma_{-j+1}, either at one parameter or node-wise over a
parameter mesh (a motion).  u_n(gamma, lam) is the log of the norm of the
inverse of the n-step chart derivative, i.e. minus the log of its smallest
singular value.
"""
from dataclasses import dataclass, field

import numpy as np

from . import proj_geom as pg
from .family import product_chain, safe_solve
from .mesh import single
from .solvers import preimages


class BranchError(RuntimeError):
    pass


SING_TOL = 1e-12


@dataclass
class BackwardOrbit:
    values: np.ndarray  # (N+1, nodes, k+1); values[j] = gamma_{-j}
    lams: np.ndarray  # (nodes, m)
    choices: np.ndarray  # (N, nodes) preimage index used at each step
    seed: int
    mesh: object = None

    @property
    def depth(self):
        return self.values.shape[0] - 1

    @property
    def k(self):
        return self.values.shape[-1] - 1

    def step_residual(self, spec):
        """Max chordal distance between f(gamma_{-j}) and gamma_{-j+1}."""
        if self.depth == 0:
            return 0.0
        f = spec.at(self.lams)
        img = pg.normalize(f.lift(self.values[1:]))
        return float(pg.distance(img, self.values[:-1]).max())


@dataclass
class TubeSpec:
    radius: float
    center: np.ndarray = None  # (nodes, k+1); defaults to the orbit base
    window: np.ndarray = None  # indices of mesh nodes used

    def __post_init__(self):
        if not 0 < self.radius <= 1:
            raise BranchError("tube radius must lie in (0, 1]")


def _as_motion(spec, base, lam, mesh):
    if mesh is None:
        lam = np.atleast_1d(np.asarray(spec.domain.center if lam is None else lam, dtype=complex))
        mesh = single(lam)
    vals = pg.as_points(base).reshape(-1, spec.k + 1)
    if vals.shape[0] == 1 and len(mesh) > 1:
        vals = np.repeat(vals, len(mesh), 0)
    if vals.shape[0] != len(mesh):
        raise BranchError("base motion must have one point per mesh node")
    return pg.normalize(vals), mesh


def sample_backward_orbit(spec, base, depth=50, seed=0, lam=None, mesh=None,
                          policy="uniform", retries=3):
    """Backward orbit of a point (at lam) or of a motion over mesh.

    policy: "uniform" draws each preimage uniformly among the d^k (with
    multiplicity), "nearest" keeps the preimage closest to the current
    point (gives the constant orbit at a fixed point), an int always takes
    that index.  Over a mesh the choice is made at the base node and
    continued to the other nodes by nearest matching along the BFS tree.
    """
    vals, mesh = _as_motion(spec, base, lam, mesh)
    f = spec.at(mesh.nodes)
    rng = np.random.default_rng(seed)
    order = mesh.bfs_order()
    if len(order) != len(mesh):
        raise BranchError("mesh is disconnected")
    out = [vals]
    choices = []
    cur = vals
    for j in range(depth):
        for attempt in range(retries + 1):
            pre, info = preimages(f, cur, seed=int(rng.integers(1 << 30)), allow_fail=True)
            if np.isfinite(pre).all():
                break
        else:
            raise BranchError(f"preimage solver failed at step {j + 1}")
        pre = pg.normalize(pre)  # (nodes, d^k, k+1)
        nd = pre.shape[1]
        idx = np.empty(len(mesh), dtype=int)
        b = mesh.base
        if policy == "uniform":
            idx[b] = rng.integers(nd)
        elif policy == "nearest":
            idx[b] = int(np.argmin(pg.distance(pre[b], cur[b][None])))
        else:
            idx[b] = int(policy) % nd
        for v, par in order[1:]:
            target = pre[par, idx[par]]
            idx[v] = int(np.argmin(pg.distance(pre[v], target[None])))
        cur = pre[np.arange(len(mesh)), idx]
        out.append(cur)
        choices.append(idx)
    orb = BackwardOrbit(np.stack(out), mesh.nodes, np.array(choices, dtype=int).reshape(depth, len(mesh)),
                        seed, mesh)
    res = orb.step_residual(spec)
    if res > 1e-9:
        raise BranchError(f"backward orbit step relation violated ({res:.2e})")
    return orb


def _step_jacobians(spec, pts, lams):
    """Chart Jacobians at stacked points pts (n, nodes, k+1)."""
    f = spec.at(lams)
    D = f.chart_jacobian(pts)
    sv = np.linalg.svd(D, compute_uv=False)
    bad = ~(sv[..., -1] > SING_TOL * np.maximum(1.0, sv[..., 0]))
    if bad.any():
        step = int(np.argwhere(bad)[0][0])
        raise BranchError(f"Jacobian singular within tolerance at step {step}: "
                          "the graph meets the critical set")
    return D


def orbit_points(spec, gamma, n, lam=None, j=None):
    """Points x, f(x), ..., f^{n-1}(x) per node and the node parameters.

    For a BackwardOrbit the stored points gamma_{-j}, ..., gamma_{-j+n-1}
    are used (default j = n); otherwise gamma is iterated forward.
    """
    if isinstance(gamma, BackwardOrbit):
        j = n if j is None else int(j)
        if j > gamma.depth or j < n:
            raise BranchError(f"need n <= j <= depth (n={n}, j={j}, depth={gamma.depth})")
        pts = gamma.values[j - n + 1: j + 1][::-1]
        return pts, gamma.lams
    lams = np.atleast_2d(np.asarray(spec.domain.center if lam is None else lam, dtype=complex))
    if lams.shape[1] != spec.m:
        lams = lams.reshape(-1, spec.m)
    x = pg.as_points(gamma).reshape(-1, spec.k + 1)
    if x.shape[0] == 1 and lams.shape[0] > 1:
        x = np.repeat(x, lams.shape[0], 0)
    f = spec.at(lams)
    orb = f.orbit(x, n)
    return orb[:n], lams


def derivative(spec, gamma, n, lam=None, j=None):
    """n-step chart derivative D(f^n) per node, built as the cocycle product."""
    pts, lams = orbit_points(spec, gamma, n, lam, j)
    if n == 0:
        return np.broadcast_to(np.eye(spec.k, dtype=complex), (pts.shape[1], spec.k, spec.k))
    return product_chain(_step_jacobians(spec, pts, lams))


def u_eval(spec, gamma, n, lam=None, j=None):
    """u_n = ln ||(D f^n)^{-1}|| = -ln(smallest singular value), per node."""
    D = derivative(spec, gamma, n, lam, j)
    sv = np.linalg.svd(D, compute_uv=False)
    u = -np.log(sv[..., -1])
    return float(u[0]) if u.shape[0] == 1 else u


def u_hat(spec, gamma, n, lam=None, j=None):
    """Sup over the mesh nodes of u_n."""
    return float(np.max(u_eval(spec, gamma, n, lam, j)))


def r_p_eval(spec, gamma, p, lam=None, j=None):
    """r_p = exp(-2 sup u_p)."""
    return float(np.exp(-2.0 * u_hat(spec, gamma, p, lam, j)))


# ---------------------------------------------------------------- tubes


@dataclass
class ContractionReport:
    n: np.ndarray
    u_hat: np.ndarray
    radii: np.ndarray
    lipschitz: np.ndarray
    A: float
    A_err: float
    intercept: float
    verified: bool
    r_p: float
    guard: float
    eta: float
    constants: dict = field(default_factory=dict)

    def rows(self):
        return [[int(n), repr(float(u)), repr(float(r)), repr(float(l))]
                for n, u, r, l in zip(self.n, self.u_hat, self.radii, self.lipschitz)]

    def summary(self):
        out = {"A": self.A, "A_err": self.A_err, "verified": self.verified, "r_p": self.r_p,
               "guard": self.guard, "eta": self.eta}
        out.update(self.constants)
        return out


def tube_samples(center, eta, n_points=64, seed=0):
    """Deterministic sample of the chordal eta-ball around each center point.

    The center itself, a boundary ring of half the points, and random
    interior points.  Returns (n_points, nodes, k+1).
    """
    center = pg.as_points(center)
    nodes, k1 = center.shape
    k = k1 - 1
    rng = np.random.default_rng(seed)
    r = eta / np.sqrt(1.0 - eta ** 2) if eta < 1 else 1e6  # chart radius of chordal eta
    n_ring = n_points // 2
    if k == 1:
        ring = np.exp(2j * np.pi * np.arange(n_ring) / n_ring)[:, None]
    else:
        ring = rng.normal(size=(n_ring, k)) + 1j * rng.normal(size=(n_ring, k))
        ring /= np.linalg.norm(ring, axis=1, keepdims=True)
    m = n_points - n_ring - 1
    inner = rng.normal(size=(m, k)) + 1j * rng.normal(size=(m, k))
    inner /= np.linalg.norm(inner, axis=1, keepdims=True)
    inner *= rng.uniform(size=(m, 1)) ** (1.0 / (2 * k))
    z = np.concatenate([np.zeros((1, k)), ring, inner]) * r
    H = pg.centering_unitary(center)  # (nodes, k+1, k+1)
    pts = pg.lift_from_chart(H[None], np.broadcast_to(z[:, None, :], (n_points, nodes, k)))
    return pg.normalize(pts)


def inverse_step(spec, lams, w, x_guess, target, guard, iters=30, tol=1e-14):
    """Local inverse of f near x_guess: solve f(x) = w by Newton in charts.

    w, x_guess: (S, nodes, k+1); target (nodes, k+1) is gamma_{-j}, the
    image must stay within guard of it.
    """
    f = spec.at(lams)
    Hin = pg.centering_unitary(np.broadcast_to(target, w.shape))
    Hout = pg.centering_unitary(pg.normalize(f.lift(target)))
    Hout = np.broadcast_to(Hout, w.shape + (w.shape[-1],))
    t = pg.chart_coords(Hout, w, strict=False)
    z = pg.chart_coords(Hin, x_guess, strict=False)
    for _ in range(iters):
        g, dg = f.chart_step(Hin, Hout, z)
        dz = safe_solve(dg, t - g)
        z = z + dz
        if np.nanmax(np.abs(dz)) < tol:
            break
    x = pg.normalize(pg.lift_from_chart(Hin, z))
    bad = ~np.isfinite(x).all(axis=-1)
    far = pg.distance(x, np.broadcast_to(target, x.shape)) > guard
    return x, bad | far


def inverse_branch_iterate(spec, orbit, tube, n_max=20, p=1, n_points=64, seed=0, eps=0.05, tau=0.05):
    """Push a tube around gamma_0 through the inverse branches along orbit.

    Records per n the image radius sup d(image, gamma_{-n}), the empirical
    Lipschitz ratio of the single step, and fits ln radius = a - n A.
    """
    if orbit.depth < n_max:
        raise BranchError(f"orbit depth {orbit.depth} < n_max {n_max}")
    center = orbit.values[0] if tube.center is None else pg.as_points(tube.center)
    rp = r_p_eval(spec, orbit, 1, j=1)
    guard = np.sqrt(rp) / 4.0
    if tube.radius > guard:
        raise BranchError(f"tube radius {tube.radius} exceeds the r_p guard {guard:.4g}")
    pts = tube_samples(center, tube.radius, n_points, seed)
    radii = [float(pg.distance(pts, orbit.values[0][None]).max())]
    lips = [np.nan]
    uh = [0.0]
    cur = pts
    for n in range(1, n_max + 1):
        tgt = orbit.values[n]
        x, bad = inverse_step(spec, orbit.lams, cur, np.broadcast_to(tgt, cur.shape), tgt, guard)
        if bad.any():
            raise BranchError(f"inverse step {n} left the guard radius (branch jump)")
        d_new = pg.distance(x[1:], x[:1])
        d_old = pg.distance(cur[1:], cur[:1])
        with np.errstate(all="ignore"):
            lips.append(float(np.nanmax(np.where(d_old > 0, d_new / d_old, np.nan))))
        radii.append(float(pg.distance(x, tgt[None]).max()))
        uh.append(u_hat(spec, orbit, n, j=n))
        cur = x
    radii = np.array(radii)
    ns = np.arange(n_max + 1)
    good = radii > 0
    X = np.c_[np.ones(good.sum()), -ns[good]]
    coef, res, *_ = np.linalg.lstsq(X, np.log(radii[good]), rcond=None)
    a, A = coef
    resid = np.log(radii[good]) - X @ coef
    dof = max(1, good.sum() - 2)
    cov = np.linalg.inv(X.T @ X) * (resid @ resid) / dof
    A_err = float(np.sqrt(cov[1, 1]))
    bound = 1.1 * tube.radius * np.exp(-ns * A)
    monotone = bool(np.all(np.diff(radii) <= 0))
    verified = bool(monotone and np.all(radii <= bound) and A > 0)
    consts = {"tau": tau, "eps": eps, "p": p, "L_prime": -A - tau - eps / 2,
              "A_theory": A, "R_p": rp}
    return ContractionReport(ns, np.array(uh), radii, np.array(lips), float(A), A_err, float(a),
                             verified, rp, float(guard), float(tube.radius), consts)


def calibrate_tube(spec, orbit, n=5, radii=(0.5, 0.25, 0.1, 0.05, 0.02, 0.01), n_points=32, seed=0):
    """Largest tube radius whose n-fold inversion succeeds, halved (C_p r_p analogue)."""
    for r in sorted(radii, reverse=True):
        try:
            inverse_branch_iterate(spec, orbit, TubeSpec(r), n, n_points=n_points, seed=seed)
        except BranchError:
            continue
        return r / 2
    return 0.0


# ---------------------------------------------------------------- Kingman


@dataclass
class KingmanResult:
    estimate: float
    ci: tuple
    per_orbit: np.ndarray
    p: int
    violation: bool
    bound: float


def birkhoff_u(spec, orbit, p):
    """(1/N') sum_j u_hat_p(gamma_{-j}) / p over j = p..N."""
    N = orbit.depth
    js = np.arange(p, N + 1)
    vals = np.empty(len(js))
    # stacked evaluation: all windows at once
    pts = np.stack([orbit.values[j - p + 1: j + 1][::-1] for j in js], axis=1)  # (p, J, nodes, k+1)
    D = _step_jacobians(spec, pts, orbit.lams)
    M = product_chain(D)  # (J, nodes, k, k)
    sv = np.linalg.svd(M, compute_uv=False)
    vals = (-np.log(sv[..., -1])).max(axis=-1)
    return float(vals.mean() / p)


def kingman_estimate(spec, bases, p=1, n_orbits=32, depth=50, lam=None, mesh=None, seed=0,
                     n_boot=1000, level=0.95, tol=0.05):
    """Average over sampled backward orbits of the Birkhoff sum of u_hat_p / p.

    bases: one point (k+1,), several points (B, k+1), one motion
    (nodes, k+1) when a mesh is given, or several motions (B, nodes, k+1);
    orbits are distributed over the bases round-robin.  Returns the
    estimate with a bootstrap interval.
    """
    arr = np.asarray(bases, dtype=complex)
    if arr.ndim == 1 or (arr.ndim == 2 and mesh is not None and len(mesh) > 1):
        arr = arr[None]
    bases = list(arr)
    ss = np.random.SeedSequence(seed)
    child = ss.spawn(n_orbits + 1)
    per = np.empty(n_orbits)
    for i in range(n_orbits):
        s = int(child[i].generate_state(1)[0])
        orb = sample_backward_orbit(spec, bases[i % len(bases)], depth, s, lam=lam, mesh=mesh)
        per[i] = birkhoff_u(spec, orb, p)
    rng = np.random.default_rng(child[-1])
    boot = rng.choice(per, size=(n_boot, n_orbits), replace=True).mean(axis=1)
    lo, hi = np.quantile(boot, [(1 - level) / 2, (1 + level) / 2])
    est = float(per.mean())
    bound = -np.log(spec.d) / 2
    return KingmanResult(est, (float(lo), float(hi)), per, p, bool(est > bound + tol), float(bound))


def choose_p(spec, orbits, L_hat, eps=0.05, p_max=8):
    """Smallest p with mean u_hat_p / p <= L_hat + eps (capped at p_max)."""
    for p in range(1, p_max + 1):
        if np.mean([birkhoff_u(spec, o, p) for o in orbits]) <= L_hat + eps:
            return p
    return p_max


# ---------------------------------------------------------------- tempering


def _temper_ok(psi, eps, a, b):
    n = np.arange(1, len(psi) + 1)
    lo = a * np.exp(-n * eps)
    hi = b * np.exp(n * eps)
    return bool(np.all(lo <= psi) and np.all(psi <= hi)
                and np.all(a <= psi * np.exp(n * eps)) and np.all(psi * np.exp(-n * eps) <= b))


def temper_sequence(psi, eps):
    """(alpha, beta) with alpha e^{-n eps} <= psi_n <= beta e^{n eps}, alpha <= 1 <= beta.

    The bounds are nudged outward by whole ulps until both inequalities hold
    in floating point for either way of writing them.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 1 or psi.size == 0:
        raise ValueError("psi must be a non-empty sequence")
    if not np.all(np.isfinite(psi)) or np.any(psi <= 0):
        raise ValueError("psi must be positive and finite")
    if not eps > 0:
        raise ValueError("eps must be positive")
    n = np.arange(1, len(psi) + 1)
    a = min(1.0, float(np.min(psi * np.exp(n * eps))))
    b = max(1.0, float(np.max(psi * np.exp(-n * eps))))
    for _ in range(64):
        if _temper_ok(psi, eps, a, b):
            return a, b
        a = np.nextafter(a, 0.0)
        b = np.nextafter(b, np.inf)
    raise ValueError("could not temper the sequence in floating point")


# ---------------------------------------------------------------- key comparison


@dataclass
class KeyComparison:
    alpha: float
    c: float
    violations: list
    feasible: bool
    samples: int


def key_comparison(spec, motions, ns, mesh, alphas=None, tol=1e-12):
    """Fit (alpha, c) so that u_n(lam)/n <= (k/alpha) u_n(lam')/n + ln c over all samples.

    motions: list of arrays (nodes, k+1), one point per mesh node.  For each
    alpha on the grid the least ln c >= 0 is computed; the pair with the
    smallest ln c is kept (ties go to the larger alpha).
    """
    if alphas is None:
        alphas = np.linspace(1.0, 0.05, 96)
    k = spec.k
    U = []  # (samples, nodes) of u_n / n
    for g in motions:
        g = pg.as_points(g).reshape(len(mesh), spec.k + 1)
        for n in ns:
            U.append(np.atleast_1d(u_eval(spec, g, n, lam=mesh.nodes)) / n)
    U = np.array(U)
    lhs = U[:, :, None]
    rhs = U[:, None, :]
    best = None
    for a in alphas:
        need = float(np.max(lhs - (k / a) * rhs))
        lnc = max(0.0, need)
        if best is None or lnc < best[1] - 1e-15:
            best = (float(a), lnc)
    a, lnc = best
    viol = np.argwhere(lhs > (k / a) * rhs + lnc + tol)
    v = [(int(s), int(i), int(j)) for s, i, j in viol[:100]]
    return KeyComparison(a, float(np.exp(lnc)), v, len(v) == 0, U.shape[0])
