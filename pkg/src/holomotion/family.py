"""Holomorphic families f(lam, z) = (lam, f_lam(z)) of endomorphisms of P^k.

A family is stored as a coefficient tensor: every component is a
homogeneous polynomial in the fiber variables x_0..x_k whose coefficients
are polynomials in lam in C^m.  With fiber monomials E (T, k+1) and
parameter monomials P (Q, m), component j is

    F_j(lam, x) = sum_{t, q} C[j, t, q] lam^P[q] x^E[t].

FiberMap is the same data with lam already substituted (possibly for a
batch of parameters); it evaluates lifts, homogeneous Jacobians and chart
Jacobians with full broadcasting.
"""
import hashlib
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import proj_geom as pg
from .mesh import polydisk


class FamilySpecError(ValueError):
    """Malformed family data."""


# ---------------------------------------------------------------- FiberMap


class FiberMap:
    """f_lam for one parameter or a batch (coef has shape (..., k+1, T))."""

    def __init__(self, coef, E, dcoef=None):
        self.coef = np.asarray(coef, dtype=complex)
        self.E = np.asarray(E, dtype=int)
        self.dcoef = dcoef  # (..., m, k+1, T) or None
        self.k = self.E.shape[1] - 1
        self.d = int(self.E.sum(axis=1).max())

    @property
    def batch_shape(self):
        return self.coef.shape[:-2]

    def take(self, idx):
        """Sub-batch of a batched map."""
        dc = None if self.dcoef is None else self.dcoef[idx]
        return FiberMap(self.coef[idx], self.E, dc)

    def expand(self, n):
        """Insert a broadcast axis so the map applies to (..., n, k+1) points."""
        dc = None if self.dcoef is None else self.dcoef[..., None, :, :, :]
        return FiberMap(self.coef[..., None, :, :], self.E, dc)

    def _powers(self, x):
        return [np.stack([x[..., i] ** j for j in range(self.d + 1)], axis=-1)
                for i in range(self.k + 1)]

    def monomials(self, x):
        pw = self._powers(x)
        mono = pw[0][..., self.E[:, 0]]
        for i in range(1, self.k + 1):
            mono = mono * pw[i][..., self.E[:, i]]
        return mono

    def lift(self, x):
        """Homogeneous evaluation F(x) (no normalization)."""
        x = np.asarray(x, dtype=complex)
        return np.einsum("...jt,...t->...j", self.coef, self.monomials(x))

    __call__ = lift

    def jac(self, x):
        """Homogeneous Jacobian dF_j/dx_i, shape (..., k+1, k+1)."""
        x = np.asarray(x, dtype=complex)
        pw = self._powers(x)
        cols = []
        for i in range(self.k + 1):
            e = self.E[:, i]
            m = e * pw[i][..., np.maximum(e - 1, 0)]
            for l in range(self.k + 1):
                if l != i:
                    m = m * pw[l][..., self.E[:, l]]
            cols.append(np.einsum("...jt,...t->...j", self.coef, m))
        return np.stack(cols, axis=-1)

    def lift_and_jac(self, x):
        return self.lift(x), self.jac(x)

    def dlam(self, x):
        """dF/dlam_a at fixed x, shape (..., m, k+1)."""
        if self.dcoef is None:
            raise ValueError("map built without parameter derivatives")
        return np.einsum("...ajt,...t->...aj", self.dcoef, self.monomials(np.asarray(x, dtype=complex)))

    def hom_det(self, x):
        return np.linalg.det(self.jac(x))

    def step(self, x):
        """Normalized image of (already normalized or not) lifts."""
        y = self.lift(x)
        n = np.linalg.norm(y, axis=-1, keepdims=True)
        if np.any(n == 0):
            raise FamilySpecError("image is the zero vector: not an endomorphism here")
        return y / n

    def iterate(self, x, n):
        for _ in range(int(n)):
            x = self.step(x)
        return x

    def orbit(self, x, n):
        """Normalized orbit x, f(x), ..., f^n(x), stacked on axis 0."""
        out = [pg.normalize(x)]
        for _ in range(int(n)):
            out.append(pg.normalize(self.lift(out[-1])))
        return np.stack(out)

    # ---- chart calculus

    def chart_jacobian(self, x):
        """D(psi_{f(x)}^{-1} o f o psi_x)(0) in centered unitary charts."""
        Hx = pg.centering_unitary(x)
        xt = Hx[..., :, 0]
        y, J = self.lift_and_jac(xt)
        Hy = pg.centering_unitary(y)
        yt = Hy[..., :, 0]
        s = np.einsum("...i,...i->...", yt.conj(), y)
        D = np.einsum("...ai,...ij,...jb->...ab", Hy[..., 1:, :], J, Hx[..., :, 1:])
        return D / s[..., None, None]

    def chart_step(self, Hin, Hout, z, with_lam=False):
        """w = chart_out(f(chart_in^{-1}(z))) with dw/dz (and dw/dlam)."""
        x = pg.lift_from_chart(Hin, z)
        y, J = self.lift_and_jac(x)
        v = np.einsum("...ij,...j->...i", Hout, y)
        v0 = v[..., :1]
        w = v[..., 1:] / v0
        dv = np.einsum("...ij,...jk,...kb->...ib", Hout, J, Hin[..., :, 1:])
        dw = (dv[..., 1:, :] - w[..., :, None] * dv[..., :1, :]) / v0[..., None]
        if not with_lam:
            return w, dw
        dl = np.einsum("...ij,...aj->...ia", Hout, self.dlam(x))
        dwl = (dl[..., 1:, :] - w[..., :, None] * dl[..., :1, :]) / v0[..., None]
        return w, dw, dwl


def safe_solve(A, b):
    """Batched solve A x = b; singular or non-finite systems give NaN rows."""
    A = np.asarray(A)
    b = np.asarray(b)
    vec = b.ndim == A.ndim - 1
    bb = b[..., None] if vec else b
    finite = np.isfinite(A).all(axis=(-1, -2)) & np.isfinite(bb).all(axis=(-1, -2))
    A2 = np.where(finite[..., None, None], A, np.eye(A.shape[-1]))
    bb = np.where(finite[..., None, None], bb, 0)
    try:
        x = np.linalg.solve(A2, bb)
    except np.linalg.LinAlgError:
        with np.errstate(all="ignore"):
            s = np.linalg.svd(A2, compute_uv=False)
        sing = ~(s[..., -1] > 1e-300 + 1e-15 * s[..., 0])
        A2 = np.where(sing[..., None, None], np.eye(A.shape[-1]), A2)
        x = np.linalg.solve(A2, bb)
        finite = finite & ~sing
    x = np.where(finite[..., None, None], x, np.nan)
    return x[..., 0] if vec else x


def orbit_chart_jacobians(fmap, x, n):
    """Normalized orbit and the n step chart Jacobians along it."""
    pts = fmap.orbit(x, n)
    Ds = fmap.chart_jacobian(pts[:-1]) if n > 0 else np.zeros((0,))
    return pts, Ds


def product_chain(Ds):
    """Ordered product D_{n-1} ... D_0 of stacked step matrices."""
    M = Ds[0]
    for D in Ds[1:]:
        M = np.einsum("...ij,...jk->...ik", D, M)
    return M


def iterate_chart_map(fmap, Hin, Hout, z, n, with_lam=False):
    """f^n in the charts (Hin -> Hout), with exact derivatives.

    Tangent vectors are pushed through homogeneous Jacobians and rescaled
    together with the lift; radial components drop out in the final chart
    quotient, so no intermediate chart is needed.
    """
    if n == 1:
        return fmap.chart_step(Hin, Hout, z, with_lam)
    k = fmap.k
    x = pg.lift_from_chart(Hin, z)
    xh = x / np.linalg.norm(x, axis=-1, keepdims=True)
    dx = Hin[..., :, 1:] / np.linalg.norm(x, axis=-1)[..., None, None]
    # tangent vectors carried in homogeneous coordinates, rescaled with the lift
    T = dx
    L = None
    if with_lam:
        L = np.zeros(x.shape + (fmap.dcoef.shape[-3],), dtype=complex)
    y = xh
    for _ in range(int(n)):
        Y, J = fmap.lift_and_jac(y)
        Tn = np.einsum("...ij,...jb->...ib", J, T)
        if with_lam:
            Ln = np.einsum("...ij,...ja->...ia", J, L) + np.swapaxes(fmap.dlam(y), -1, -2)
        s = np.linalg.norm(Y, axis=-1)
        y = Y / s[..., None]
        T = Tn / s[..., None, None]
        if with_lam:
            L = Ln / s[..., None, None]
    v = np.einsum("...ij,...j->...i", Hout, y)
    v0 = v[..., :1]
    w = v[..., 1:] / v0
    dv = np.einsum("...ij,...jb->...ib", Hout, T)
    dw = (dv[..., 1:, :] - w[..., :, None] * dv[..., :1, :]) / v0[..., None]
    if not with_lam:
        return w, dw
    dl = np.einsum("...ij,...ja->...ia", Hout, L)
    dwl = (dl[..., 1:, :] - w[..., :, None] * dl[..., :1, :]) / v0[..., None]
    return w, dw, dwl


# ---------------------------------------------------------------- specs


@dataclass(frozen=True)
class DomainSpec:
    center: tuple
    radii: tuple = (0.2, 0.3, 0.4)
    mesh: int = 9

    def __post_init__(self):
        rU, rV, rW = self.radii
        if not (0 < rU < rV < rW):
            raise FamilySpecError("domain radii must satisfy 0 < r_U < r_V < r_W")
        if int(self.mesh) < 1:
            raise FamilySpecError("mesh resolution must be positive")

    @property
    def m(self):
        return len(self.center)

    def mesh_U(self, n=None):
        return polydisk(np.array(self.center, dtype=complex), self.radii[0], n or self.mesh)

    def mesh_V(self, n=None):
        return polydisk(np.array(self.center, dtype=complex), self.radii[1], n or self.mesh)

    def mesh_W(self, n=None):
        return polydisk(np.array(self.center, dtype=complex), self.radii[2], n or self.mesh)


def _parse_exponents(key, length, what):
    if isinstance(key, int) and length == 1:
        key = str(key)
    if not isinstance(key, str):
        raise FamilySpecError(f"{what} key {key!r} is not a string")
    parts = [p.strip() for p in key.split(",")] if key.strip() else []
    if len(parts) != length:
        raise FamilySpecError(f"{what} key {key!r} needs {length} exponents")
    try:
        e = tuple(int(p) for p in parts)
    except ValueError:
        raise FamilySpecError(f"{what} key {key!r} has non-integer exponents") from None
    if any(v < 0 for v in e):
        raise FamilySpecError(f"{what} key {key!r} has negative exponents")
    return e


def _parse_complex(v):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(float(v), 0.0)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(
            isinstance(a, (int, float)) and not isinstance(a, bool) for a in v):
        return complex(float(v[0]), float(v[1]))
    raise FamilySpecError(f"coefficient {v!r} is not a number or [re, im] pair")


class FamilySpec:
    """A degree-d family on P^k with parameters in C^m (immutable)."""

    def __init__(self, k, d, m, components, domain=None, name=""):
        self.k, self.d, self.m = int(k), int(d), int(m)
        if self.k < 1 or self.d < 1 or self.m < 1:
            raise FamilySpecError("k, d and m must be positive integers")
        if len(components) != self.k + 1:
            raise FamilySpecError(f"expected {self.k + 1} components, got {len(components)}")
        comps = []
        for j, comp in enumerate(components):
            if not isinstance(comp, dict):
                raise FamilySpecError(f"component {j} is not a monomial table")
            c = {}
            for e, poly in comp.items():
                e = tuple(int(v) for v in e)
                if len(e) != self.k + 1 or min(e) < 0:
                    raise FamilySpecError(f"component {j}: bad fiber exponent {e}")
                if not isinstance(poly, dict):
                    raise FamilySpecError(f"component {j}: coefficient table for {e} is not a map")
                p = {}
                for q, a in poly.items():
                    q = tuple(int(v) for v in q)
                    if len(q) != self.m or min(q) < 0:
                        raise FamilySpecError(f"component {j}: bad parameter exponent {q}")
                    p[q] = complex(a)
                c[e] = p
            comps.append(c)
        self.components = tuple(comps)
        self.domain = domain if domain is not None else DomainSpec(tuple([0j] * self.m))
        if self.domain.m != self.m:
            raise FamilySpecError("domain center dimension does not match m")
        self.name = name
        self._build_tensors()

    def _build_tensors(self):
        fib = sorted({e for c in self.components for e in c})
        par = sorted({q for c in self.components for p in c.values() for q in p}) or [(0,) * self.m]
        self.E = np.array(fib, dtype=int).reshape(-1, self.k + 1)
        self.P = np.array(par, dtype=int).reshape(-1, self.m)
        C = np.zeros((self.k + 1, len(fib), len(par)), dtype=complex)
        fi = {e: i for i, e in enumerate(fib)}
        pi = {q: i for i, q in enumerate(par)}
        for j, c in enumerate(self.components):
            for e, p in c.items():
                for q, a in p.items():
                    C[j, fi[e], pi[q]] += a
        self.C = C

    # ---- coefficient evaluation

    def _lam(self, lam):
        lam = np.asarray(lam, dtype=complex)
        if lam.ndim == 0:
            lam = lam[None]
        if lam.shape[-1] != self.m:
            if self.m == 1:
                lam = lam[..., None]
            else:
                raise ValueError(f"parameter must have {self.m} coordinates")
        return lam

    def coefficients(self, lam):
        lam = self._lam(lam)
        mono = np.prod(lam[..., None, :] ** self.P, axis=-1)  # (..., Q)
        return np.einsum("jtq,...q->...jt", self.C, mono)

    def coefficient_derivatives(self, lam):
        lam = self._lam(lam)
        out = []
        for a in range(self.m):
            Pa = self.P.copy()
            fac = Pa[:, a].astype(float)
            Pa[:, a] = np.maximum(Pa[:, a] - 1, 0)
            mono = fac * np.prod(lam[..., None, :] ** Pa, axis=-1)
            out.append(np.einsum("jtq,...q->...jt", self.C, mono))
        return np.stack(out, axis=-3)

    def at(self, lam):
        """FiberMap for a parameter (m,) or a batch (..., m)."""
        return FiberMap(self.coefficients(lam), self.E, self.coefficient_derivatives(lam))

    @property
    def depends_on_lambda(self):
        nz = np.abs(self.C).sum(axis=(0, 1)) > 0
        return bool(np.any(nz & (self.P.sum(axis=1) > 0)))

    # ---- serialization

    def to_dict(self):
        comps = []
        for c in self.components:
            comps.append({",".join(map(str, e)): {",".join(map(str, q)): [a.real, a.imag]
                                                 for q, a in p.items()} for e, p in c.items()})
        return {
            "name": self.name,
            "k": self.k,
            "d": self.d,
            "m": self.m,
            "components": comps,
            "domain": {
                "center": [[complex(c).real, complex(c).imag] for c in self.domain.center],
                "radii": [float(r) for r in self.domain.radii],
                "mesh": int(self.domain.mesh),
            },
        }

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def spec_hash(self):
        return hashlib.sha256(self.to_yaml().encode()).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, FamilySpec) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"FamilySpec(name={self.name!r}, k={self.k}, d={self.d}, m={self.m})"


def family_from_dict(data):
    if not isinstance(data, dict):
        raise FamilySpecError("family file must be a key-value map")
    for key in ("k", "d", "m", "components"):
        if key not in data:
            raise FamilySpecError(f"missing field {key!r}")
    try:
        k, d, m = int(data["k"]), int(data["d"]), int(data["m"])
    except (TypeError, ValueError):
        raise FamilySpecError("k, d, m must be integers") from None
    raw = data["components"]
    if not isinstance(raw, list):
        raise FamilySpecError("components must be a list")
    comps = []
    for j, comp in enumerate(raw):
        if not isinstance(comp, dict):
            raise FamilySpecError(f"component {j} must be a monomial table")
        c = {}
        for ek, poly in comp.items():
            e = _parse_exponents(ek, k + 1, f"component {j} monomial")
            if not isinstance(poly, dict):
                raise FamilySpecError(f"component {j}: coefficients of {ek!r} must be a map")
            c[e] = {_parse_exponents(qk, m, f"component {j} parameter"): _parse_complex(v)
                    for qk, v in poly.items()}
        comps.append(c)
    dom = data.get("domain")
    domain = None
    if dom is not None:
        try:
            center = tuple(_parse_complex(v) for v in dom["center"])
            radii = tuple(float(r) for r in dom.get("radii", (0.2, 0.3, 0.4)))
            mesh = int(dom.get("mesh", 9))
        except (KeyError, TypeError) as exc:
            raise FamilySpecError(f"malformed domain block: {exc}") from None
        domain = DomainSpec(center, radii, mesh)
    return FamilySpec(k, d, m, comps, domain, str(data.get("name", "")))


def load_family(text_or_path):
    """Parse a family file (YAML) from a path or a text string."""
    text = text_or_path
    if "\n" not in str(text_or_path) and not str(text_or_path).lstrip().startswith("{"):
        with open(text_or_path) as fh:
            text = fh.read()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise FamilySpecError(f"unparsable family file: {exc}") from None
    return family_from_dict(data)


def save_family(spec, path):
    with open(path, "w") as fh:
        fh.write(spec.to_yaml())


# ---------------------------------------------------------------- builders


def quadratic_family(center=0.0, radii=(0.2, 0.3, 0.4), mesh=9):
    """z^2 + c lifted as [z^2 + c w^2 : w^2]."""
    comps = [{(2, 0): {(0,): 1.0}, (0, 2): {(1,): 1.0}}, {(0, 2): {(0,): 1.0}}]
    return FamilySpec(1, 2, 1, comps, DomainSpec((complex(center),), radii, mesh), "quadratic")


def power_family(d, radii=(0.2, 0.3, 0.4), mesh=5):
    """Constant family z^d (coefficients independent of the parameter)."""
    comps = [{(d, 0): {(0,): 1.0}}, {(0, d): {(0,): 1.0}}]
    return FamilySpec(1, d, 1, comps, DomainSpec((0j,), radii, mesh), f"power{d}")


def product_family(d=2, radii=(0.2, 0.3, 0.4), mesh=5):
    """[z^d : w^d : t^d] on P^2 (constant in the parameter)."""
    comps = [{(d, 0, 0): {(0,): 1.0}}, {(0, d, 0): {(0,): 1.0}}, {(0, 0, d): {(0,): 1.0}}]
    return FamilySpec(2, d, 1, comps, DomainSpec((0j,), radii, mesh), f"product{d}")


def constant_family(spec_or_coeffs, lam=None):
    """Freeze a family at lam: same map at every parameter."""
    spec = spec_or_coeffs
    lam = spec.domain.center if lam is None else np.atleast_1d(lam)
    coef = spec.coefficients(np.asarray(lam, dtype=complex))
    comps = []
    for j in range(spec.k + 1):
        comps.append({tuple(e): {(0,) * spec.m: complex(coef[j, t])}
                      for t, e in enumerate(spec.E) if coef[j, t] != 0})
    return FamilySpec(spec.k, spec.d, spec.m, comps, spec.domain, spec.name + "-frozen")


# ---------------------------------------------------------------- operations


def evaluate(spec, lam, p):
    """Normalized image f_lam(p)."""
    y = spec.at(lam).lift(pg.as_points(p))
    if np.any(np.linalg.norm(y, axis=-1) == 0):
        raise FamilySpecError("image is all-zero: parameter outside the endomorphism locus")
    return pg.normalize(y)


@dataclass
class JacobianSample:
    point: np.ndarray
    lam: np.ndarray
    DF: np.ndarray
    det: complex
    delta: float
    extra: dict = field(default_factory=dict)


def smallest_singular(D):
    return np.linalg.svd(D, compute_uv=False)[..., -1]


def jacobian_chart(spec, lam, p, atlas=None):
    """Chart Jacobian of f_lam at p (charts centered at p and f_lam(p))."""
    p = pg.normalize(p)
    D = spec.at(lam).chart_jacobian(p)
    return JacobianSample(p, np.atleast_1d(lam), D, complex(np.linalg.det(D)), float(smallest_singular(D)))


def critical_det(spec, lam, p, homogeneous=False):
    """det of the chart Jacobian, or of the homogeneous Jacobian."""
    f = spec.at(lam)
    p = pg.as_points(p)
    if homogeneous:
        return f.hom_det(p)
    return np.linalg.det(f.chart_jacobian(p))


_ROT_CACHE = {}


def fixed_rotation(k1, tag=0):
    """A fixed 'random' unitary used to move special points off infinity."""
    key = (k1, tag)
    if key not in _ROT_CACHE:
        rng = np.random.default_rng(20240611 + 7 * tag + k1)
        Q, R = np.linalg.qr(rng.normal(size=(k1, k1)) + 1j * rng.normal(size=(k1, k1)))
        _ROT_CACHE[key] = Q * (np.diag(R) / np.abs(np.diag(R)))
    return _ROT_CACHE[key]


def binary_form_coeffs(func, degree, rot, batch_shape=()):
    """Coefficients (low to high in t) of t -> func(rot (t, 1)) via the DFT."""
    n = degree + 1
    t = np.exp(2j * np.pi * np.arange(n) / n)
    x = np.stack([t, np.ones_like(t)], axis=-1) @ rot.T
    x = np.broadcast_to(x, batch_shape + x.shape)
    vals = func(x)
    return np.fft.fft(vals, axis=-1) / n


def critical_points(spec, lam, n_samples=1000, seed=0):
    """Sample of the critical set of f_lam.

    k = 1: the 2(d-1) roots (with multiplicity) of the homogeneous
    Jacobian determinant.  k = 2: points of the critical curve on random
    projective lines, about n_samples in total.
    """
    f = spec.at(lam)
    D = (spec.k + 1) * (spec.d - 1)
    if spec.k == 1:
        R = fixed_rotation(2, 1)
        c = binary_form_coeffs(f.hom_det, D, R)
        if np.max(np.abs(c)) == 0:
            raise FamilySpecError("Jacobian determinant vanishes identically")
        roots = np.roots(c[::-1])
        x = np.stack([roots, np.ones_like(roots)], axis=-1) @ R.T
        return pg.normalize(x)
    rng = np.random.default_rng(seed)
    n_lines = int(np.ceil(n_samples / D))
    out = []
    for _ in range(n_lines):
        a, b = pg.random_points(rng, 2, spec.k)
        t = np.exp(2j * np.pi * np.arange(D + 1) / (D + 1))
        pts = a[None, :] * t[:, None] + b[None, :]
        c = np.fft.fft(f.hom_det(pts)) / (D + 1)
        if np.max(np.abs(c)) == 0:
            continue
        r = np.roots(c[::-1])
        out.append(a[None, :] * r[:, None] + b[None, :])
    if not out:
        raise FamilySpecError("critical-set sampling failed")
    return pg.normalize(np.concatenate(out))


# ---------------------------------------------------------------- validation


@dataclass
class ValidationReport:
    ok: bool
    homogeneous: bool
    failing_components: list
    failing_lambdas: list
    messages: list
    failure_probability: float = 0.0

    def summary(self):
        return {
            "valid": self.ok,
            "homogeneous": self.homogeneous,
            "failing_components": ";".join(str(c) for c in self.failing_components) or "none",
            "failing_lambdas": len(self.failing_lambdas),
            "messages": " | ".join(self.messages) or "none",
        }


def sylvester_resultant(a, b):
    """Normalized resultant of two binary forms (coefficients low to high)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    da, db = len(a) - 1, len(b) - 1
    n = da + db
    S = np.zeros((n, n), dtype=complex)
    for i in range(db):
        S[i, i:i + da + 1] = a[::-1]
    for i in range(da):
        S[db + i, i:i + db + 1] = b[::-1]
    sa = np.linalg.norm(a)
    sb = np.linalg.norm(b)
    if sa == 0 or sb == 0:
        return 0.0
    # row scaling makes the value scale-free
    S[:db] /= sa
    S[db:] /= sb
    return abs(np.linalg.det(S))


def _binary_coeffs(spec, coef_j):
    out = np.zeros(spec.d + 1, dtype=complex)
    for t, e in enumerate(spec.E):
        out[e[0]] += coef_j[t]
    return out  # coefficient of z^a w^(d-a) at index a


def validate_family(spec, params=None, tol=1e-9, seed=0):
    """Homogeneity per component and a common-zero probe at parameters.

    The probe is exact for k = 1 (normalized Sylvester resultant).  For
    k = 2 it solves F(x) in span(y) for two random targets y; a common
    zero of the components attracts some of the d^2 homotopy paths, so the
    probe misses a degeneracy only if both random targets avoid it.
    """
    msgs, bad_comp = [], []
    for j, comp in enumerate(spec.components):
        degs = sorted({sum(e) for e, p in comp.items() if any(a != 0 for a in p.values())})
        if not degs:
            bad_comp.append(j)
            msgs.append(f"component {j} is identically zero")
        elif degs != [spec.d]:
            bad_comp.append(j)
            msgs.append(f"component {j} is not homogeneous of degree {spec.d} (degrees {degs})")
    if bad_comp:
        return ValidationReport(False, False, bad_comp, [], msgs)
    if params is None:
        params = spec.domain.mesh_W(min(spec.domain.mesh, 9)).nodes
    params = np.asarray(params, dtype=complex).reshape(-1, spec.m)
    failing = []
    if spec.k == 1:
        for lam in params:
            coef = spec.coefficients(lam)
            r = sylvester_resultant(_binary_coeffs(spec, coef[0]), _binary_coeffs(spec, coef[1]))
            if not r > tol:
                failing.append(lam)
        prob = 0.0
    else:
        from .solvers import preimages
        rng = np.random.default_rng(seed)
        for lam in params:
            f = spec.at(lam)
            scale = np.linalg.norm(f.coef)
            worst = np.inf
            for y in pg.random_points(rng, 2, spec.k):
                try:
                    x, info = preimages(f, y[None, :], allow_fail=True)
                except Exception:
                    worst = 0.0
                    break
                x = x.reshape(-1, spec.k + 1)
                fx = np.linalg.norm(f.lift(pg.normalize(x)), axis=-1) / scale
                worst = min(worst, float(np.min(fx)))
            if not worst > 1e-6:
                failing.append(lam)
        prob = 1e-6
    if failing:
        msgs.append(f"components share a common zero at {len(failing)} parameter(s)")
    return ValidationReport(not failing, True, [], [tuple(l) for l in failing], msgs, prob)
