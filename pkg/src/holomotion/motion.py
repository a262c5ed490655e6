"""Continuation of repelling cycles over a parameter mesh, and the finite webs.

A motion stores, per mesh node, the points of one cycle ordered along the
orbit (point i+1 = f(point i)).  Continuation is predictor-corrector: the
predictor is the implicit-function tangent of f^n(x) = x with exact
parameter derivatives, the corrector is Newton in a chart centered at the
predicted point.  Steps that need a large correction are halved.
"""
from dataclasses import dataclass, field

import numpy as np

from . import proj_geom as pg
from .cycles import (DELTA_REP, Cycle, classify, find_periodic, newton_periodic, periodic_residual,
                     _divisors)
from .family import critical_points, iterate_chart_map, product_chain, safe_solve
from .measures import measure_distance, uniform_measure
from .mesh import Mesh
from .solvers import preimages

THETA_INT = 1e-4
THETA_CRIT = 1e-3
COLLAPSE_TOL = 1e-6
NEWTON_TOL = 1e-10
MAX_HALVINGS = 6


class MotionError(RuntimeError):
    pass


@dataclass
class CycleMotion:
    period: int
    mesh: Mesh
    values: np.ndarray  # (nodes, n, k+1)
    multipliers: np.ndarray  # (nodes, k)
    status: np.ndarray  # (nodes,) of str: tracked | collided | indeterminate | unreached
    seed: Cycle = None

    @property
    def tracked(self):
        return self.status == "tracked"

    def point(self, i=0):
        return self.values[:, i % self.period]


# ---------------------------------------------------------------- continuation


def _tangent(spec, lam, x, n):
    """Chart frame at x and dz/dlam of the period-n point (B, k, m)."""
    f = spec.at(lam)
    H = pg.centering_unitary(x)
    z0 = np.zeros(x.shape[:-1] + (spec.k,), dtype=complex)
    _, dw, dwl = iterate_chart_map(f, H, H, z0, n, with_lam=True)
    eye = np.eye(spec.k)
    return H, -safe_solve(dw - eye, dwl)


def _corrector(spec, lam, x, n):
    f = spec.at(lam)
    y = newton_periodic(f, x.copy(), n)
    res = periodic_residual(f, y, n)
    return y, res


def continue_points(spec, x, lam_a, lam_b, n, halvings=MAX_HALVINGS, ratio=0.25):
    """Continue period-n points x (B, k+1) from lam_a to lam_b.

    Returns (y, ok): ok is False where no substep subdivision gave a
    converged Newton correction small compared with the predicted move;
    y then holds the unrefined Newton result (or NaN if Newton diverged).
    """
    lam_a = np.atleast_1d(np.asarray(lam_a, dtype=complex))
    lam_b = np.atleast_1d(np.asarray(lam_b, dtype=complex))
    x = pg.normalize(np.asarray(x, dtype=complex).reshape(-1, spec.k + 1))
    out = np.full_like(x, np.nan)
    ok = np.zeros(x.shape[0], dtype=bool)
    raw = np.full_like(x, np.nan)
    for level in range(halvings + 1):
        todo = np.flatnonzero(~ok)
        if todo.size == 0:
            break
        steps = 2 ** level
        cur = x[todo].copy()
        good = np.ones(todo.size, dtype=bool)
        for s in range(steps):
            la = lam_a + (lam_b - lam_a) * s / steps
            lb = lam_a + (lam_b - lam_a) * (s + 1) / steps
            with np.errstate(all="ignore"):
                H, dz = _tangent(spec, la, cur, n)
                step = np.einsum("...km,m->...k", dz, lb - la)
                bad_t = ~np.isfinite(step).all(axis=-1)
                step = np.where(bad_t[:, None], 0, step)
                pred = pg.normalize(pg.lift_from_chart(H, step))
                y, res = _corrector(spec, lb, pred, n)
            move = pg.distance(pred, cur)
            corr = pg.distance(y, pred)
            conv = np.isfinite(res) & (res < NEWTON_TOL)
            if level == 0 and s == 0 and steps == 1:
                raw[todo] = np.where(conv[:, None], y, np.nan)
            good &= conv & ~bad_t & (corr <= ratio * move + 1e-9)
            cur = np.where(conv[:, None], y, cur)
        out[todo[good]] = cur[good]
        ok[todo[good]] = True
    fallback = ~ok
    out[fallback] = raw[fallback]
    return out, ok


def _orbit_values(spec, lam, x, n):
    f = spec.at(lam)
    return np.stack([pg.normalize(v) for v in f.orbit(x, n - 1)], axis=-2) if n > 1 else x[..., None, :]


def _node_status(spec, lam, x, n, delta_rep):
    """Classify continued points at one node: status and multipliers."""
    f = spec.at(lam)
    B = x.shape[0]
    status = np.full(B, "tracked", dtype=object)
    mult = np.full((B, spec.k), np.nan, dtype=complex)
    fin = np.isfinite(x).all(axis=-1)
    status[~fin] = "indeterminate"
    if not fin.any():
        return status, mult
    xf = x[fin]
    idx = np.flatnonzero(fin)
    y = xf.copy()
    collapsed = np.zeros(len(xf), dtype=bool)
    for m in range(1, n):
        y = f.step(y)
        if n % m == 0:
            collapsed |= pg.distance(y, xf) < COLLAPSE_TOL
    orb = f.orbit(xf, n - 1) if n > 1 else xf[None]
    Ds = f.chart_jacobian(orb)
    M = product_chain(list(Ds)) if n > 1 else Ds[0]
    ev = np.linalg.eigvals(M)
    mod = np.abs(ev)
    mult[idx] = ev
    rep = np.all(mod > 1 + delta_rep, axis=-1)
    st = np.where(collapsed, "collided", np.where(rep, "tracked", "indeterminate"))
    status[idx] = st
    return status, mult


def track_many(spec, x0, lam0, mesh, n, delta_rep=DELTA_REP):
    """Continue a batch of period-n points over the mesh by BFS.

    x0 (B, k+1) are period-n points at lam0.  Returns values (nodes, B, n,
    k+1), multipliers (nodes, B, k) and status (nodes, B).  Non-tracked
    nodes keep their value when Newton converged but are not extended.
    """
    x0 = pg.normalize(np.asarray(x0, dtype=complex).reshape(-1, spec.k + 1))
    lam0 = np.atleast_1d(np.asarray(lam0, dtype=complex))
    B, N, k1 = x0.shape[0], len(mesh), spec.k + 1
    vals = np.full((N, B, n, k1), np.nan, dtype=complex)
    mult = np.full((N, B, spec.k), np.nan, dtype=complex)
    status = np.full((N, B), "unreached", dtype=object)
    b = mesh.base
    # move from lam0 to the base node if needed
    y, ok = continue_points(spec, x0, lam0, mesh.nodes[b], n)
    st, mu = _node_status(spec, mesh.nodes[b], y, n, delta_rep)
    st = np.where(ok, st, np.where(st == "collided", "collided", "indeterminate"))
    vals[b] = _orbit_values(spec, mesh.nodes[b], np.nan_to_num(y), n)
    vals[b][~np.isfinite(y).all(axis=-1)] = np.nan
    mult[b], status[b] = mu, st
    adj = mesh.adjacency

    def visit(v, cand):
        src = np.full(B, -1)
        for u in adj[v]:
            take = (src < 0) & cand & (status[u] == "tracked")
            src[take] = u
        have = np.flatnonzero(src >= 0)
        for u in np.unique(src[have]):
            sel = have[src[have] == u]
            y, ok = continue_points(spec, vals[u, sel, 0], mesh.nodes[u], mesh.nodes[v], n)
            st, mu = _node_status(spec, mesh.nodes[v], y, n, delta_rep)
            st = np.where(ok, st, np.where(st == "collided", "collided", "indeterminate"))
            ov = _orbit_values(spec, mesh.nodes[v], np.nan_to_num(y), n)
            ov[~np.isfinite(y).all(axis=-1)] = np.nan
            vals[v, sel] = ov
            mult[v, sel] = mu
            status[v, sel] = st
        return have.size > 0

    for v, _ in mesh.bfs_order()[1:]:
        visit(v, np.ones(B, dtype=bool))
    # motions that reach a node only around a flagged region
    for _ in range(4):
        changed = False
        for v in range(N):
            cand = status[v] == "unreached"
            if cand.any() and visit(v, cand):
                changed = True
        if not changed:
            break
    return vals, mult, status


def track_cycle(spec, cycle, mesh, delta_rep=DELTA_REP):
    """CycleMotion of one repelling cycle over a connected mesh."""
    if not mesh.is_connected():
        raise MotionError("mesh is disconnected from the base node")
    if cycle.lam is None:
        raise MotionError("cycle has no parameter attached")
    mod = np.abs(cycle.multipliers)
    if not np.all(mod > 1 + delta_rep):
        raise MotionError("seed cycle is not repelling with margin delta_rep")
    n = cycle.period
    vals, mult, status = track_many(spec, cycle.points[:1], cycle.lam, mesh, n, delta_rep)
    return CycleMotion(n, mesh, vals[:, 0], mult[:, 0], status[:, 0].astype(str), cycle)


def track_cycles(spec, cycles, mesh, delta_rep=DELTA_REP):
    """Track several cycles at once (batched per period)."""
    out = [None] * len(cycles)
    by_n = {}
    for i, c in enumerate(cycles):
        by_n.setdefault(c.period, []).append(i)
    for n, idx in by_n.items():
        lam0 = cycles[idx[0]].lam
        same = [i for i in idx if np.allclose(cycles[i].lam, lam0)]
        x0 = np.stack([cycles[i].points[0] for i in same])
        vals, mult, status = track_many(spec, x0, lam0, mesh, n, delta_rep)
        for j, i in enumerate(same):
            out[i] = CycleMotion(n, mesh, vals[:, j], mult[:, j], status[:, j].astype(str), cycles[i])
        for i in idx:
            if out[i] is None:
                out[i] = track_cycle(spec, cycles[i], mesh, delta_rep)
    return out


# ---------------------------------------------------------------- monodromy


def _loop_points(loop, h_max):
    loop = [np.atleast_1d(np.asarray(l, dtype=complex)) for l in loop]
    if len(loop) == 0:
        raise MotionError("empty loop")
    if len(loop) > 1 and not np.allclose(loop[0], loop[-1]):
        loop.append(loop[0])
    pts = [loop[0]]
    for a, b in zip(loop[:-1], loop[1:]):
        L = np.linalg.norm(b - a)
        s = max(1, int(np.ceil(L / h_max)))
        for t in range(1, s + 1):
            pts.append(a + (b - a) * t / s)
    return pts


def circle_loop(center, radius, n=64):
    c = np.atleast_1d(np.asarray(center, dtype=complex))
    return [c + radius * np.exp(2j * np.pi * t / n) * np.eye(len(c))[0] for t in range(n)]


def monodromy(spec, cycles, loop, h_max=0.01):
    """Permutation of the cycles' points induced by continuation around loop.

    cycles: a Cycle or a list of Cycles, carried along a straight segment
    to the loop's first vertex if computed elsewhere.  Only
    non-degeneracy (no multiplier equal to 1) is needed along the loop, not
    repulsion.  Returns perm with point i ending at the position of point
    perm[i].
    """
    if isinstance(cycles, Cycle):
        cycles = [cycles]
    pts = _loop_points(loop, h_max)
    items = []
    for c in cycles:
        for p in c.points:
            items.append((c.period, p))
    start = np.stack([p for _, p in items])
    periods = np.array([n for n, _ in items])
    lam_c = cycles[0].lam
    if lam_c is not None and not np.allclose(lam_c, pts[0]):
        # carry the points to the loop's first vertex
        for n in np.unique(periods):
            sel = np.flatnonzero(periods == n)
            y, ok = continue_points(spec, start[sel], lam_c, pts[0], int(n))
            if not ok.all():
                raise MotionError("could not carry the cycles to the start of the loop")
            start[sel] = y
    cur = start.copy()
    for a, b in zip(pts[:-1], pts[1:]):
        for n in np.unique(periods):
            sel = np.flatnonzero(periods == n)
            y, ok = continue_points(spec, cur[sel], a, b, int(n))
            if not ok.all():
                raise MotionError(f"loop passes within collision tolerance near lam = {b}")
            cur[sel] = y
    D = pg.pairwise_distance(cur, start)
    perm = np.argmin(D, axis=1)
    if len(np.unique(perm)) != len(perm):
        raise MotionError("continued points do not match the starting set")
    return perm


def is_identity(perm):
    return bool(np.all(np.asarray(perm) == np.arange(len(perm))))


def cycle_type(perm):
    """Sorted cycle lengths of a permutation."""
    perm = np.asarray(perm)
    seen = np.zeros(len(perm), dtype=bool)
    out = []
    for i in range(len(perm)):
        if not seen[i]:
            j, L = i, 0
            while not seen[j]:
                seen[j] = True
                j = perm[j]
                L += 1
            out.append(L)
    return sorted(out)


# ---------------------------------------------------------------- webs


@dataclass
class WebApprox:
    level: object
    mesh: Mesh
    motions: list
    atoms: list  # (motion index, point index)
    values: np.ndarray  # (N, nodes, k+1)
    status: np.ndarray  # (N, nodes)
    weights: np.ndarray
    F_action: np.ndarray
    holes: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.atoms)

    @property
    def k(self):
        return self.values.shape[-1] - 1

    def cloud(self, node):
        """Atom values at a node (only nodes where the atom is tracked)."""
        ok = self.status[:, node] == "tracked"
        return self.values[ok, node]


def _web_cycles(spec, lam0, periods, rng_seed):
    cyc = {}
    for n in sorted(set(periods), reverse=True):
        if any(p % n == 0 for p in cyc.get("_done", [])):
            continue
        for c in find_periodic(spec, lam0, n, rng_seed=rng_seed):
            if c.period in periods and c.repelling and c.in_julia:
                key = (c.period, tuple(np.round(pg.normalize(c.points[0]), 8)))
                cyc.setdefault(c.period, {})
                if not any(pg.distance(c.points, q.points[:1]).min() < 1e-8 for q in cyc[c.period].values()):
                    cyc[c.period][key] = c
        cyc.setdefault("_done", []).append(n)
    out = []
    for p in sorted(k for k in cyc if k != "_done"):
        out.extend(cyc[p].values())
    return out


def build_web(spec, mesh, n=None, periods=None, rng_seed=0, max_hole_fraction=0.01,
              delta_rep=DELTA_REP, equiv_tol=1e-9):
    """Motions of all repelling J-cycles of period dividing n (or in periods).

    F_action is matched at the base node and verified at every node where
    both the atom and its image are tracked.
    """
    if periods is None:
        if n is None:
            raise ValueError("give n or periods")
        periods = _divisors(int(n))
    periods = sorted(set(int(p) for p in periods))
    lam0 = mesh.nodes[mesh.base]
    cycles = _web_cycles(spec, lam0, periods, rng_seed)
    if not cycles:
        raise MotionError("no repelling J-cycles to track")
    motions = track_cycles(spec, cycles, mesh, delta_rep)
    atoms, vals, stat = [], [], []
    for mi, mo in enumerate(motions):
        for i in range(mo.period):
            atoms.append((mi, i))
            vals.append(mo.values[:, i])
            stat.append(mo.status)
    vals = np.stack(vals)
    stat = np.stack(stat)
    N = len(atoms)
    b = mesh.base
    f0 = spec.at(lam0)
    img = pg.normalize(f0.lift(vals[:, b]))
    D = pg.pairwise_distance(img, vals[:, b])
    F = np.argmin(D, axis=1)
    bij = len(np.unique(F)) == N
    # equivariance on the mesh
    f = spec.at(mesh.nodes)
    both = (stat == "tracked") & (stat[F] == "tracked")
    with np.errstate(all="ignore"):
        fv = pg.normalize(np.where(both[..., None], f.lift(np.nan_to_num(vals)), 1.0))
    err = np.where(both, pg.distance(fv, np.where(both[..., None], vals[F], 1.0)), 0.0)
    equiv = float(err.max()) if both.any() else 0.0
    holes = stat != "tracked"
    hole_frac = float(holes.mean())
    report = {
        "atoms": N, "nodes": len(mesh), "periods": periods, "bijective": bool(bij),
        "equivariance_error": equiv, "equivariant": bool(equiv <= equiv_tol),
        "hole_fraction": hole_frac,
        "expected_atoms": int(sum(c.period for c in cycles)),
    }
    web = WebApprox(periods if n is None else int(n), mesh, motions, atoms, vals, stat,
                    np.full(N, 1.0 / N), F, {"mask": holes, "fraction": hole_frac}, report)
    if hole_frac > max_hole_fraction:
        raise MotionError(f"{hole_frac:.3%} of atom-node pairs untrackable (limit {max_hole_fraction:.1%})")
    return web


def preimage_graphs(spec, web, atom):
    """All d^k preimage graphs of one atom, continued node-wise over the mesh.

    Returns (d^k, nodes, k+1) values (NaN where the atom is not tracked) and
    the number of distinct graphs, i.e. the F-preimage count.
    """
    mesh = web.mesh
    f = spec.at(mesh.nodes)
    tgt = web.values[atom]
    ok = web.status[atom] == "tracked"
    pre, _ = preimages(f, np.where(ok[:, None], tgt, 1.0), allow_fail=True)
    pre = pg.normalize(np.where(np.isfinite(pre), pre, 1.0))  # (nodes, d^k, k+1)
    nd = pre.shape[1]
    out = np.full((nd, len(mesh), spec.k + 1), np.nan, dtype=complex)
    b = mesh.base
    if not ok[b]:
        return out, 0
    out[:, b] = pre[b]
    for v, par in mesh.bfs_order()[1:]:
        if not ok[v] or not np.isfinite(out[0, par]).all():
            continue
        Dm = pg.pairwise_distance(out[:, par], pre[v])
        out[:, v] = pre[v][np.argmin(Dm, axis=1)]
    img = pg.normalize(f.lift(np.nan_to_num(out)))
    good = np.isfinite(out).all(axis=-1)
    err = np.where(good, pg.distance(img, np.broadcast_to(tgt, img.shape)), 0.0)
    if err.max() > 1e-8:
        return out, 0
    # distinct as graphs: separated at some node
    sep = np.nanmax(np.where(good[:, None] & good[None, :],
                             pg.distance(out[:, None], out[None, :]), np.nan), axis=-1)
    distinct = nd
    for i in range(nd):
        for j in range(i):
            if sep[i, j] < 1e-10:
                distinct -= 1
                break
    return out, distinct


def preimage_counts(spec, web):
    """Per-atom number of F-preimage graphs (d^k expected) and web-internal preimages."""
    counts = np.array([preimage_graphs(spec, web, a)[1] for a in range(len(web))])
    internal = np.bincount(web.F_action, minlength=len(web))
    return counts, internal


def pushforward_check(web, node, reference, mode="auto", seed=0):
    """measure_distance between the web's atoms at a node and a reference measure."""
    if not isinstance(node, (int, np.integer)):
        node = web.mesh.nearest(node)
    cloud = web.cloud(node)
    if cloud.shape[0] == 0:
        raise MotionError("no tracked atoms at this node")
    m = uniform_measure(web.mesh.nodes[node], cloud, {"kind": "web", "node": int(node)})
    return measure_distance(m, reference, mode=mode, seed=seed)


def equicontinuity(web):
    """Max over atoms and tracked mesh edges of chordal distance / parameter step."""
    e = web.mesh.edges
    if len(e) == 0:
        return 0.0
    a, b = e[:, 0], e[:, 1]
    dl = np.linalg.norm(web.mesh.nodes[a] - web.mesh.nodes[b], axis=1)
    ok = (web.status[:, a] == "tracked") & (web.status[:, b] == "tracked")
    d = pg.distance(web.values[:, a], web.values[:, b])
    return float(np.max(np.where(ok, d / dl[None], 0.0)))


# ---------------------------------------------------------------- intersections


@dataclass
class Intersection:
    pair: tuple
    lam: np.ndarray
    point: np.ndarray
    separation: float


def _atom_at(spec, web, a, lam, node):
    """Re-polish atom a at parameter lam starting from its value at node."""
    mo = web.motions[web.atoms[a][0]]
    n = mo.period
    x = web.values[a, node][None]
    y, ok = continue_points(spec, x, web.mesh.nodes[node], lam, n)
    return y[0] if ok[0] else np.full(x.shape[-1], np.nan)


def graph_intersections(spec, web, theta_int=THETA_INT, levels=2):
    """Pairwise minimum separations of the web's graphs over the mesh.

    Values are compared where both atoms have a (possibly flagged) value.
    Pairs whose minimum falls below theta_int are re-examined on two levels
    of local refinement around the minimizing node before being reported.
    """
    V = web.values
    N, nodes = V.shape[:2]
    have = np.isfinite(V).all(axis=-1)
    mins = np.full((N, N), np.inf)
    where = np.zeros((N, N), dtype=int)
    for v in range(nodes):
        idx = np.flatnonzero(have[:, v])
        if idx.size < 2:
            continue
        D = pg.pairwise_distance(V[idx, v], V[idx, v])
        D[np.diag_indices(len(idx))] = np.inf
        sub = mins[np.ix_(idx, idx)]
        better = D < sub
        sub[better] = D[better]
        mins[np.ix_(idx, idx)] = sub
        w = where[np.ix_(idx, idx)]
        w[better] = v
        where[np.ix_(idx, idx)] = w
    iu = np.triu_indices(N, 1)
    gmin = float(np.min(mins[iu])) if N > 1 else float("inf")
    found = []
    h = web.mesh.step or 0.01
    for i, j in zip(*iu):
        if mins[i, j] >= theta_int:
            continue
        node = where[i, j]
        best_lam = web.mesh.nodes[node]
        best = mins[i, j]
        best_pt = V[i, node]
        for lev in range(1, levels + 1):
            r = h / 2 ** lev
            cand = [best_lam + r * np.array([dx + 1j * dy] + [0] * (web.mesh.m - 1))
                    for dx in (-1, 0, 1) for dy in (-1, 0, 1)]
            for lam in cand:
                xi = _atom_at(spec, web, i, lam, node)
                xj = _atom_at(spec, web, j, lam, node)
                if not (np.isfinite(xi).all() and np.isfinite(xj).all()):
                    continue
                s = float(pg.distance(xi, xj))
                if s < best:
                    best, best_lam, best_pt = s, lam, xi
        if best < theta_int:
            found.append(Intersection((int(i), int(j)), np.atleast_1d(best_lam), best_pt, best))
    return found, gmin


# ---------------------------------------------------------------- critical orbit


def _critical_sets(spec, mesh, n_samples=1000, seed=0):
    """Critical points per node, labelled consistently along the BFS tree (k = 1)."""
    C = [critical_points(spec, lam, n_samples=n_samples, seed=seed) for lam in mesh.nodes]
    if spec.k != 1:
        return C
    out = [None] * len(mesh)
    out[mesh.base] = C[mesh.base]
    for v, par in mesh.bfs_order()[1:]:
        D = pg.pairwise_distance(out[par], C[v])
        out[v] = C[v][np.argmin(D, axis=1)]
    return out


def forward_critical_orbit(spec, mesh, n_f, n_samples=1000, seed=0):
    """List over nodes of arrays (n_f + 1, c, k+1) with f^j(C) for j = 0..n_f."""
    C = _critical_sets(spec, mesh, n_samples, seed)
    out = []
    for v, lam in enumerate(mesh.nodes):
        f = spec.at(lam)
        out.append(f.orbit(pg.normalize(C[v]), n_f))
    return out


@dataclass
class GrandOrbitProbe:
    n_f: int
    n_b: int
    distances: np.ndarray  # per atom, min over mesh
    per_node: np.ndarray  # (atoms, nodes)
    suspects: np.ndarray  # atoms with distance < theta_crit


def grand_orbit_proximity(web, spec, n_f=3, n_b=2, theta_crit=THETA_CRIT, n_samples=1000, seed=0):
    """Distance of each graph to the truncated grand critical orbit."""
    mesh = web.mesh
    fwd = forward_critical_orbit(spec, mesh, n_f, n_samples, seed)
    per = np.full((len(web), len(mesh)), np.inf)
    for v, lam in enumerate(mesh.nodes):
        f = spec.at(lam)
        S = fwd[v].reshape(-1, spec.k + 1)
        S = S[np.isfinite(S).all(axis=-1)]
        layers = [S]
        cur = S
        for _ in range(n_b):
            pre, _ = preimages(f, cur, seed=seed, allow_fail=True)
            cur = pre.reshape(-1, spec.k + 1)
            cur = cur[np.isfinite(cur).all(axis=-1)]
            layers.append(cur)
        allp = pg.normalize(np.concatenate(layers))
        ok = np.isfinite(web.values[:, v]).all(axis=-1) & (web.status[:, v] == "tracked")
        if ok.any():
            per[ok, v] = pg.pairwise_distance(web.values[ok, v], allp).min(axis=1)
    dist = per.min(axis=1)
    return GrandOrbitProbe(n_f, n_b, dist, per, np.flatnonzero(dist < theta_crit))


# ---------------------------------------------------------------- Misiurewicz


@dataclass
class MisiurewiczCandidate:
    lam: np.ndarray
    residual: float
    atom: int
    critical: int
    iterate: int


def _diff(spec, lam, crit, j, x_motion, aff):
    """Affine-chart difference between f^j(critical point) and the motion point."""
    f = spec.at(lam)
    y = f.iterate(crit, j)
    if np.any(np.abs(y[..., aff]) < 1e-8):
        return np.nan  # image at infinity of this chart
    y = y / y[..., aff:aff + 1]
    x = x_motion / x_motion[..., aff:aff + 1]
    return np.delete(y - x, aff, axis=-1)[..., 0]


def _motion_at(spec, x_from, lam_from, lam, n):
    y, ok = continue_points(spec, x_from[None], lam_from, lam, n)
    return y[0]


def _crit_at(spec, c_from, lam):
    C = critical_points(spec, lam)
    return C[np.argmin(pg.distance(C, c_from[None]))]


def misiurewicz_scan(spec, mesh, web, n_f=4, tol=1e-10, persist_tol=1e-8, theta_k2=THETA_CRIT):
    """Parameters where a forward critical image lands on a motion graph.

    k = 1: per mesh cell a sign change test (segment cells: Newton from the
    midpoint must land on the segment; square cells: winding number of the
    difference along the cell boundary), then Newton polish in the
    parameter with a central-difference derivative.  Pairs whose difference
    vanishes at every node are persistent and skipped.  k = 2: nodes where
    the distance falls below theta_k2 (no polish).
    """
    if spec.m != 1:
        raise MotionError("misiurewicz_scan runs on one-dimensional parameter slices")
    motions = web
    if isinstance(web, WebApprox):
        V, S = web.values, web.status
        periods = [web.motions[mi].period for mi, _ in web.atoms]
    else:
        V = np.concatenate([mo.values.transpose(1, 0, 2) for mo in motions])
        S = np.concatenate([np.repeat(mo.status[None], mo.period, 0) for mo in motions])
        periods = [mo.period for mo in motions for _ in range(mo.period)]
    if not spec.depends_on_lambda:
        return []
    fwd = forward_critical_orbit(spec, mesh, n_f)
    nodes = mesh.nodes
    found = []
    if spec.k != 1:
        for a in range(V.shape[0]):
            for v in range(len(mesh)):
                if S[a, v] != "tracked":
                    continue
                P = fwd[v][1:].reshape(-1, spec.k + 1)
                dd = pg.distance(P, V[a, v][None])
                if dd.min() < theta_k2:
                    found.append(MisiurewiczCandidate(nodes[v], float(dd.min()), a, -1, -1))
        return found
    nc = fwd[0].shape[1]
    for a in range(V.shape[0]):
        n = periods[a]
        ok = S[a] == "tracked"
        if not ok.any():
            continue
        aff = int(np.argmax(np.abs(V[a, np.flatnonzero(ok)[0]])))
        for ci in range(nc):
            for j in range(1, n_f + 1):
                g = np.full(len(mesh), np.nan, dtype=complex)
                for v in np.flatnonzero(ok):
                    with np.errstate(all="ignore"):
                        g[v] = _diff(spec, nodes[v], fwd[v][0, ci], j, V[a, v], aff)
                fin = np.isfinite(g)
                if not fin.any():
                    continue
                if np.all(np.abs(g[fin]) < persist_tol) and fin.sum() > 1:
                    continue  # persistent containment
                for cell in mesh.cells:
                    cell = list(cell)
                    if not all(ok[c] and fin[c] for c in cell):
                        continue
                    lam = _cell_candidate(spec, mesh, cell, g, a, ci, j, V, fwd, n, aff, tol)
                    if lam is not None:
                        found.append(MisiurewiczCandidate(*lam, a, ci, j))
    return _dedup(found)


def _cell_candidate(spec, mesh, cell, g, a, ci, j, V, fwd, n, aff, tol):
    nodes = mesh.nodes[:, 0]
    v0 = cell[0]
    x0, c0, l0 = V[a, v0], fwd[v0][0, ci], mesh.nodes[v0]

    def G(lam):
        lam = np.atleast_1d(lam)
        with np.errstate(all="ignore"):
            xm = _motion_at(spec, x0, l0, lam, n)
            cr = _crit_at(spec, c0, lam)
            return complex(_diff(spec, lam, cr, j, xm, aff))

    if len(cell) == 2:
        A, B = nodes[cell[0]], nodes[cell[1]]
        lam = 0.5 * (A + B)
        seg = abs(B - A)
        if min(abs(g[cell[0]]), abs(g[cell[1]])) > 4 * seg * max(abs(g[cell[0]] - g[cell[1]]) / seg, 1.0):
            return None
    else:
        w = np.angle(np.r_[g[cell], g[cell[0]]])
        turn = np.sum(np.angle(np.exp(1j * np.diff(w))))
        if abs(turn) < np.pi:
            return None
        lam = nodes[cell].mean()
    h = 1e-7
    val = G(lam)
    for _ in range(30):
        der = (G(lam + h) - G(lam - h)) / (2 * h)
        if not np.isfinite(der) or der == 0:
            return None
        step = val / der
        lam = lam - step
        val = G(lam)
        if not np.isfinite(val):
            return None
        if abs(step) < 1e-14 * max(1, abs(lam)) or abs(val) < 1e-14:
            break
    if abs(val) > max(tol, 1e-9):
        return None
    if len(cell) == 2:
        A, B = nodes[cell[0]], nodes[cell[1]]
        t = ((lam - A) * np.conj(B - A)).real / abs(B - A) ** 2
        off = abs((lam - A) - t * (B - A))
        if not (-1e-9 <= t <= 1 + 1e-9) or off > 1e-6 * abs(B - A):
            return None
    else:
        pts = nodes[cell]
        if not (pts.real.min() - 1e-12 <= lam.real <= pts.real.max() + 1e-12
                and pts.imag.min() - 1e-12 <= lam.imag <= pts.imag.max() + 1e-12):
            return None
    return np.atleast_1d(lam), float(abs(val))


def _dedup(found, tol=1e-6):
    out = []
    for c in sorted(found, key=lambda c: (c.residual)):
        if not any(np.linalg.norm(c.lam - o.lam) < tol and c.atom == o.atom for o in out):
            out.append(c)
    out.sort(key=lambda c: (c.lam[0].real, c.lam[0].imag, c.atom))
    return out


# ---------------------------------------------------------------- export


def motion_columns(k, m):
    cols = []
    for a in range(m):
        cols += [f"lam{a}_re", f"lam{a}_im"]
    cols += ["atom", "motion", "period", "index"]
    for i in range(k + 1):
        cols += [f"x{i}_re", f"x{i}_im"]
    return cols + ["status", "image_atom"]


def web_rows(web):
    rows = []
    for a, (mi, i) in enumerate(web.atoms):
        per = web.motions[mi].period
        for v, lam in enumerate(web.mesh.nodes):
            row = []
            for l in lam:
                row += [repr(float(l.real)), repr(float(l.imag))]
            row += [str(a), str(mi), str(per), str(i)]
            for c in web.values[a, v]:
                row += [repr(float(c.real)), repr(float(c.imag))]
            row += [str(web.status[a, v]), str(int(web.F_action[a]))]
            rows.append(row)
    return rows
