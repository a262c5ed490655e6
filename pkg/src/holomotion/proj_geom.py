"""Numerical geometry of complex projective space.

Points are stored as homogeneous lifts: complex arrays whose last axis has
length k+1.  All functions broadcast over leading axes.

The metric is the chordal one, |p ^ q| / (|p| |q|).  Charts are the
standard affine patch {v_0 != 0} composed with a unitary (Householder)
change of coordinates sending e_0 to the chart center, so a single formula
covers every point of P^k.
"""
import numpy as np

NORM_EPS = 1e-12  # relative threshold for "nonzero" coordinates


class ProjectiveError(ValueError):
    pass


class ChartError(ProjectiveError):
    pass


def as_points(p):
    p = np.asarray(p, dtype=complex)
    if p.ndim == 0 or p.shape[-1] < 2:
        raise ProjectiveError("a point of P^k needs at least two coordinates")
    return p


def normalize(p):
    """Canonical lift: unit norm, first significant coordinate real > 0."""
    p = as_points(p)
    nrm = np.linalg.norm(p, axis=-1, keepdims=True)
    if np.any(nrm == 0) or not np.all(np.isfinite(nrm)):
        raise ProjectiveError("all-zero or non-finite homogeneous coordinates")
    q = p / nrm
    mag = np.abs(q)
    first = np.argmax(mag > NORM_EPS, axis=-1)[..., None]
    lead = np.take_along_axis(q, first, axis=-1)
    q = q * (np.abs(lead) / lead)
    # renormalize once more so the result is a fixed point of normalize
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return q


def wedge_norm2(p, q):
    """|p ^ q|^2 = sum_{i<j} |p_i q_j - p_j q_i|^2."""
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    w = p[..., :, None] * q[..., None, :]
    w = w - np.swapaxes(w, -1, -2)
    return 0.5 * np.sum(np.abs(w) ** 2, axis=(-1, -2))


def distance(p, q):
    """Chordal distance on P^k (values in [0, 1])."""
    p = as_points(p)
    q = as_points(q)
    num = np.sqrt(wedge_norm2(p, q))
    den = np.linalg.norm(p, axis=-1) * np.linalg.norm(q, axis=-1)
    if np.any(den == 0):
        raise ProjectiveError("all-zero homogeneous coordinates")
    return np.minimum(num / den, 1.0)


def pairwise_distance(P, Q):
    """Distance matrix between point sets P (a, k+1) and Q (b, k+1)."""
    P = normalize(P)
    Q = normalize(Q)
    return distance(P[:, None, :], Q[None, :, :])


def centering_unitary(x):
    """Hermitian unitary H with H e_0 proportional to x (batched).

    H is a Householder reflection, so H = H^H = H^{-1}.
    """
    x = np.asarray(x, dtype=complex)
    x = x / np.linalg.norm(x, axis=-1, keepdims=True)
    x0 = x[..., 0]
    ph = np.where(np.abs(x0) > 0, np.abs(x0) / np.where(x0 == 0, 1, x0), 1.0)
    x = x * ph[..., None]
    rest = np.sum(np.abs(x[..., 1:]) ** 2, axis=-1)
    v = -x.copy()
    v[..., 0] = rest / (1.0 + x[..., 0].real)  # 1 - |x_0| without cancellation
    vv = np.sum(np.abs(v) ** 2, axis=-1)
    k1 = x.shape[-1]
    eye = np.broadcast_to(np.eye(k1, dtype=complex), x.shape + (k1,)).copy()
    small = vv < 1e-300
    scale = np.where(small, 0.0, 2.0 / np.where(small, 1.0, vv))
    H = eye - scale[..., None, None] * v[..., :, None] * v[..., None, :].conj()
    return H


def lift_from_chart(H, z):
    """Homogeneous lift H (1, z) of chart coordinates z (batched)."""
    z = np.asarray(z, dtype=complex)
    one = np.ones(z.shape[:-1] + (1,), dtype=complex)
    v = np.concatenate([one, z], axis=-1)
    return np.einsum("...ij,...j->...i", H, v)


def chart_coords(H, y, strict=True):
    """Chart coordinates of y in the chart with unitary H (batched)."""
    v = np.einsum("...ij,...j->...i", H, np.asarray(y, dtype=complex))
    v0 = v[..., :1]
    if strict:
        scale = np.linalg.norm(v, axis=-1, keepdims=True)
        if np.any(np.abs(v0) <= 1e-14 * scale):
            raise ChartError("point lies on the hyperplane at infinity of the chart")
    return v[..., 1:] / v0


def chordal_from_chart(z):
    """d(center, psi(z)) = |z| / sqrt(1 + |z|^2), accurate for small z."""
    r = np.linalg.norm(np.asarray(z, dtype=complex), axis=-1)
    return r / np.sqrt(1.0 + r * r)


class Chart:
    """psi_x: C^k -> P^k with psi_x(0) = x, plus its inverse."""

    def __init__(self, center, radius=None):
        self.center = normalize(center)
        if self.center.ndim != 1:
            raise ProjectiveError("chart center must be a single point")
        self.H = centering_unitary(self.center)
        self.patch = int(np.argmax(np.abs(self.center)))
        self.radius = radius

    @property
    def k(self):
        return self.center.shape[0] - 1

    def to_chart(self, y):
        return chart_coords(self.H, y)

    def from_chart(self, z):
        return normalize(lift_from_chart(self.H, z))


class ChartAtlas:
    """Atlas of unitary-centered affine charts with measured distortion.

    In a centered chart, d(psi(z), psi(z'))/|z - z'| lies in
    [1/(1+R^2), sqrt(1+R^2)] for |z|, |z'| <= R, so the radius
    R0 = sqrt(exp(tau/4) - 1) keeps the distortion inside exp(+-tau/4),
    half of the published budget exp(+-tau/2).  The sweep confirms it.
    """

    def __init__(self, k, tau=0.05, n_pairs=10_000, seed=0):
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.k = int(k)
        self.tau = float(tau)
        self.R0 = float(np.sqrt(np.expm1(tau / 4.0)))
        self.n_patches = self.k + 1
        self.ratio_range = self._sweep(n_pairs, seed)
        lo, hi = self.ratio_range
        if lo < np.exp(-tau / 2) or hi > np.exp(tau / 2):
            raise ChartError("chart distortion sweep exceeded the tau budget")

    def _sweep(self, n_pairs, seed):
        rng = np.random.default_rng(seed)
        k = self.k
        x = rng.normal(size=(n_pairs, k + 1)) + 1j * rng.normal(size=(n_pairs, k + 1))
        H = centering_unitary(x)

        def ball(n):
            g = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            return g * self.R0 * rng.uniform(size=(n, 1)) ** (1.0 / (2 * k))

        z1, z2 = ball(n_pairs), ball(n_pairs)
        d = distance(lift_from_chart(H, z1), lift_from_chart(H, z2))
        r = d / np.linalg.norm(z1 - z2, axis=1)
        return float(r.min()), float(r.max())

    def chart_at(self, x):
        return Chart(x, radius=self.R0)

    def patch_index(self, x):
        return int(np.argmax(np.abs(np.asarray(x))))


def random_points(rng, n, k):
    """n points of P^k drawn from the unitarily invariant distribution."""
    g = rng.normal(size=(n, k + 1)) + 1j * rng.normal(size=(n, k + 1))
    return normalize(g)


def affine(p, i=-1):
    """Affine coordinates p / p_i (default: last coordinate)."""
    p = np.asarray(p, dtype=complex)
    idx = [j for j in range(p.shape[-1]) if j != (i % p.shape[-1])]
    with np.errstate(divide="ignore", invalid="ignore"):
        return p[..., idx] / p[..., i % p.shape[-1], None]


def from_affine(z):
    """Lift affine coordinates z (..., k) to [z : 1]."""
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0 or z.shape[-1:] == ():
        z = z[..., None]
    one = np.ones(z.shape[:-1] + (1,), dtype=complex)
    return np.concatenate([z, one], axis=-1)


def hermitian_embedding(p):
    """Real embedding with |E(p) - E(q)| = sqrt(2) * d(p, q).

    E(p) = p p^H for unit p, flattened into real coordinates; used for
    sliced transport and nearest-neighbour queries in the chordal metric.
    """
    p = normalize(p)
    M = p[..., :, None] * p[..., None, :].conj()
    k1 = p.shape[-1]
    iu = np.triu_indices(k1, 1)
    diag = M[..., np.arange(k1), np.arange(k1)].real
    off = M[..., iu[0], iu[1]] * np.sqrt(2.0)
    return np.concatenate([diag, off.real, off.imag], axis=-1)
