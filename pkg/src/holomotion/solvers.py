"""Batched one-step preimage solvers: all x with f(x) = y in P^k.

k = 1 reduces to the roots of the binary form y_1 F_0(x) - y_0 F_1(x);
d = 2 uses the homogeneous quadratic formula, larger d uses companion
eigenvalues after a fixed unitary change of variables, then Newton.

k = 2 uses a total-degree homotopy in a random affine patch, started
from the preimages of the product map [x_0^d : x_1^d : x_2^d] and
tracked with an adaptive Euler predictor / Newton corrector.  Paths that
fail are retracked with a fresh gamma constant.
"""
import numpy as np

from . import proj_geom as pg
from .family import fixed_rotation, safe_solve


class SolverError(RuntimeError):
    pass


def _normalize_rows(x):
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return x / n


# ---------------------------------------------------------------- k = 1


def _binary_target(fmap, y):
    """Coefficients b_a of z^a w^(d-a) in y_1 F_0 - y_0 F_1 (batched)."""
    d = fmap.d
    onehot = np.zeros((fmap.E.shape[0], d + 1))
    onehot[np.arange(fmap.E.shape[0]), fmap.E[:, 0]] = 1.0
    g = y[..., 1, None] * fmap.coef[..., 0, :] - y[..., 0, None] * fmap.coef[..., 1, :]
    return g @ onehot


def preimages_k1(fmap, y, polish=2):
    """(..., d, 2) preimages of y (..., 2); NaN rows if the fiber degenerates."""
    y = np.asarray(y, dtype=complex)
    d = fmap.d
    b = _binary_target(fmap, y)
    if d == 2:
        a2, a1, a0 = b[..., 2], b[..., 1], b[..., 0]
        disc = np.sqrt(a1 * a1 - 4 * a2 * a0)
        s = np.where((a1.conj() * disc).real >= 0, 1.0, -1.0)
        q = -0.5 * (a1 + s * disc)
        r1 = np.stack([q, a2], axis=-1)
        r2 = np.stack([a0, q], axis=-1)
        n1 = np.linalg.norm(r1, axis=-1, keepdims=True)
        n2 = np.linalg.norm(r2, axis=-1, keepdims=True)
        r1 = np.where(n1 > 0, r1, r2)
        r2 = np.where(n2 > 0, r2, r1)
        x = np.stack([r1, r2], axis=-2)
    else:
        R = fixed_rotation(2, 2)
        n = d + 1
        t = np.exp(2j * np.pi * np.arange(n) / n)
        pts = np.stack([t, np.ones_like(t)], axis=-1) @ R.T  # (n, 2)
        # evaluate the binary form at the rotated sample points
        vals = np.zeros(b.shape[:-1] + (n,), dtype=complex)
        for a in range(d + 1):
            vals = vals + b[..., a, None] * pts[:, 0] ** a * pts[:, 1] ** (d - a)
        c = np.fft.fft(vals, axis=-1) / n  # low -> high in t
        lead = c[..., -1]
        bad = np.abs(lead) <= 1e-14 * np.max(np.abs(c), axis=-1)
        lead = np.where(bad, 1.0, lead)
        comp = np.zeros(c.shape[:-1] + (d, d), dtype=complex)
        comp[..., 0, :] = -c[..., -2::-1] / lead[..., None]
        if d > 1:
            comp[..., np.arange(1, d), np.arange(d - 1)] = 1.0
        roots = np.linalg.eigvals(comp)
        x = np.stack([roots, np.ones_like(roots)], axis=-1) @ R.T
        x = np.where(bad[..., None, None], np.nan, x)
    x = _normalize_rows(x)
    for _ in range(polish):
        x = _newton_k1(b, x)
    return x


def _newton_k1(b, x):
    """Newton step on the binary form in the affine chart of the larger coordinate."""
    d = b.shape[-1] - 1
    z, w = x[..., 0], x[..., 1]
    bb = b[..., None, :]
    use_z = np.abs(w) >= np.abs(z)
    u = np.where(use_z, z / np.where(use_z, w, 1), w / np.where(use_z, 1, z))
    a = np.arange(d + 1)
    # p(u) = sum b_a u^a (u = z/w) or sum b_a u^(d-a) (u = w/z)
    ex = np.where(use_z[..., None], a, d - a)
    upow = u[..., None] ** ex
    p = np.sum(bb * upow, axis=-1)
    dex = np.maximum(ex - 1, 0)
    dp = np.sum(bb * ex * u[..., None] ** dex, axis=-1)
    ok = np.isfinite(p) & (np.abs(dp) > 0)
    step = np.where(ok, p / np.where(ok, dp, 1), 0)
    step = np.where(np.abs(step) < 0.1 * (1 + np.abs(u)), step, 0)
    u = u - step
    x_new = np.where(use_z[..., None], np.stack([u, np.ones_like(u)], -1), np.stack([np.ones_like(u), u], -1))
    return _normalize_rows(x_new)


# ---------------------------------------------------------------- k = 2


def _start_system(d, k=2):
    w = np.exp(2j * np.pi * np.arange(d) / d)
    grids = np.meshgrid(*([w] * k), indexing="ij")
    starts = np.stack([np.ones(d ** k, dtype=complex)] + [g.ravel() for g in grids], axis=-1)
    return starts  # (d^k, k+1)


def _g0(x, d):
    return x[..., 1:] ** d - x[..., :1] ** d


def _jg0(x, d):
    k = x.shape[-1] - 1
    J = np.zeros(x.shape[:-1] + (k, k + 1), dtype=complex)
    J[..., :, 0] = -d * x[..., :1] ** (d - 1)
    for i in range(k):
        J[..., i, i + 1] = d * x[..., i + 1] ** (d - 1)
    return J


def _track(fmap, B, x, patch, gamma, max_iter=4000):
    """Track paths from t=0 to t=1; returns endpoints and success mask.

    fmap, B (target complement basis, (P, k+1, k)) and x (P, k+1) are
    aligned along the first axis.
    """
    d = fmap.d
    P, k1 = x.shape
    t = np.zeros(P)
    h = np.full(P, 0.02)
    ok = np.ones(P, dtype=bool)
    done = np.zeros(P, dtype=bool)
    Bh = np.conj(np.swapaxes(B, -1, -2))  # (P, k, k+1)

    def system(xx, tt, idx):
        F, J = fmap.take(idx).lift_and_jac(xx)
        G1 = np.einsum("pij,pj->pi", Bh[idx], F)
        J1 = np.einsum("pij,pjk->pik", Bh[idx], J)
        G0 = _g0(xx, d)
        J0 = _jg0(xx, d)
        s = tt[:, None]
        Hval = (1 - s) * gamma * G0 + s * G1
        Hx = (1 - s)[..., None] * gamma * J0 + s[..., None] * J1
        Ht = G1 - gamma * G0
        pv = xx @ patch - 1.0
        Hx = np.concatenate([Hx, np.broadcast_to(patch, (len(idx), 1, k1))], axis=1)
        return np.concatenate([Hval, pv[:, None]], axis=1), Hx, Ht

    for _ in range(max_iter):
        act = np.flatnonzero(~done & ok)
        if act.size == 0:
            break
        xa, ta, ha = x[act], t[act], np.minimum(h[act], 1.0 - t[act])
        _, Hx, Ht = system(xa, ta, act)
        rhs = np.concatenate([-Ht, np.zeros((act.size, 1))], axis=1)
        with np.errstate(all="ignore"):
            dx = safe_solve(Hx, rhs)
        dx = np.where(np.isfinite(dx), dx, 0)
        xp = xa + ha[:, None] * dx
        tn = ta + ha
        good = np.ones(act.size, dtype=bool)
        last = np.full(act.size, np.inf)
        for it in range(3):
            Hv, Hx, _ = system(xp, tn, act)
            with np.errstate(all="ignore"):
                stp = safe_solve(Hx, Hv)
            stp = np.where(np.isfinite(stp), stp, np.inf)
            xp = xp - stp
            nrm = np.linalg.norm(stp, axis=-1) / (1 + np.linalg.norm(xp, axis=-1))
            if it == 1:
                good &= nrm < 0.1 * np.maximum(last, 1e-300) + 1e-12
            last = nrm
        good &= np.isfinite(last) & (last < 1e-7)
        x[act[good]] = xp[good]
        t[act[good]] = tn[good]
        h[act[good]] = np.minimum(ha[good] * 1.6, 0.1)
        h[act[~good]] = ha[~good] * 0.5
        ok[act[~good & (h[act] < 1e-9)]] = False
        done[act] = t[act] >= 1.0 - 1e-15
    ok &= done
    return x, ok


def _polish_target(fmap, B, x, iters=6):
    """Newton at t = 1 in the unitary chart centered at each endpoint."""
    Bh = np.conj(np.swapaxes(B, -1, -2))
    for _ in range(iters):
        x = _normalize_rows(x)
        Hc = pg.centering_unitary(x)
        base = Hc[..., :, 0]
        F, J = fmap.lift_and_jac(base)
        G = np.einsum("pij,pj->pi", Bh, F)
        JG = np.einsum("pij,pjk,pkb->pib", Bh, J, Hc[..., :, 1:])
        with np.errstate(all="ignore"):
            dz = safe_solve(JG, G)
        dz = np.where(np.isfinite(dz), dz, 0)
        x = pg.lift_from_chart(Hc, -dz)
    return _normalize_rows(x)


def preimages_k2(fmap, y, seed=0, retries=3, tol=1e-9):
    """(..., d^2, 3) preimages of y (..., 3) under a batched P^2 map."""
    y = np.asarray(y, dtype=complex)
    batch = y.shape[:-1]
    d, k1 = fmap.d, y.shape[-1]
    nd = d ** (k1 - 1)
    yf = y.reshape(-1, k1)
    nb = yf.shape[0]
    coef = np.broadcast_to(fmap.coef, batch + fmap.coef.shape[-2:]).reshape(nb, k1, -1)
    H = pg.centering_unitary(yf)
    B = H[..., :, 1:]
    out = np.full((nb, nd, k1), np.nan + 0j)
    todo = np.arange(nb)
    rng = np.random.default_rng(seed)
    starts = _start_system(d, k1 - 1)
    from .family import FiberMap
    for attempt in range(retries + 1):
        if todo.size == 0:
            break
        patch = rng.normal(size=k1) + 1j * rng.normal(size=k1)
        gamma = np.exp(2j * np.pi * rng.uniform())
        s = starts / (starts @ patch)[:, None]
        P = todo.size * nd
        x0 = np.tile(s, (todo.size, 1))
        owner = np.repeat(todo, nd)
        fm = FiberMap(coef[owner], fmap.E)
        x, okp = _track(fm, B[owner], x0.copy(), patch, gamma)
        x = _polish_target(fm, B[owner], np.where(okp[:, None], x, x0))
        res = np.linalg.norm(np.einsum("pij,pj->pi", np.conj(np.swapaxes(B[owner], -1, -2)),
                                       fm.step(x)), axis=-1)
        okp &= res < tol
        okf = okp.reshape(todo.size, nd).all(axis=1)
        xs = x.reshape(todo.size, nd, k1)
        # path jumping shows up as coincident endpoints
        if nd > 1:
            D = pg.distance(xs[:, :, None, :], xs[:, None, :, :]) + np.eye(nd)
            okf &= D.min(axis=(1, 2)) > 1e-7
        out[todo[okf]] = xs[okf]
        if attempt == retries:
            out[todo[~okf]] = xs[~okf]  # keep best effort; caller checks residuals
        todo = todo[~okf]
    info = {"n_failed_fibers": int(todo.size)}
    out = _normalize_rows(out)
    return out.reshape(batch + (nd, k1)), info


def preimages(fmap, y, seed=0, allow_fail=False):
    """All d^k preimages of y (batched over leading axes), with info."""
    y = np.asarray(y, dtype=complex)
    if fmap.k == 1:
        x = preimages_k1(fmap, y)
        bad = ~np.isfinite(x).all(axis=(-1, -2))
        info = {"n_failed_fibers": int(bad.sum())}
    elif fmap.k == 2:
        x, info = preimages_k2(fmap, y, seed=seed)
    else:
        raise SolverError("preimage solver supports k <= 2")
    if info["n_failed_fibers"] and not allow_fail:
        raise SolverError(f"preimage solver failed on {info['n_failed_fibers']} fiber(s)")
    return x, info
