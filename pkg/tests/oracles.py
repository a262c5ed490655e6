"""Independent reference computations used by the tests.

Nothing here imports the package: these are closed forms and classical
escape-time algorithms written directly in numpy.
"""
import numpy as np


def escapes(c, max_iter=2000, radius=1e3):
    """Escape-time test for z^2 + c from the critical point 0."""
    c = np.asarray(c, dtype=complex)
    z = np.zeros_like(c)
    alive = np.ones(c.shape, dtype=bool)
    for _ in range(max_iter):
        z = np.where(alive, z * z + c, z)
        alive &= np.abs(z) <= radius
    return ~alive


def boundary_mask(re_range, im_range, n, sub=8, max_iter=2000):
    """Pixels of an n x n grid (row-major, real part fastest) meeting the boundary.

    Each pixel is supersampled sub x sub over the cell centred on its node;
    it is a boundary pixel when the samples contain both escaping and
    non-escaping parameters.
    """
    re = np.linspace(*re_range, n)
    im = np.linspace(*im_range, n)
    hx, hy = re[1] - re[0], im[1] - im[0]
    off = (np.arange(sub) + 0.5) / sub - 0.5
    cr = re[None, :, None, None] + hx * off[None, None, None, :]
    ci = im[:, None, None, None] + hy * off[None, None, :, None]
    esc = escapes(cr + 1j * ci, max_iter).reshape(n, n, sub * sub)
    return esc.any(axis=-1) & ~esc.all(axis=-1)


def within(mask, ref, px=2):
    """Fraction of True pixels of mask within px (Chebyshev) of a True pixel of ref."""
    n0, n1 = ref.shape
    grown = np.zeros_like(ref)
    for a in range(-px, px + 1):
        for b in range(-px, px + 1):
            sh = np.zeros_like(ref)
            sh[max(a, 0):n0 + min(a, 0), max(b, 0):n1 + min(b, 0)] = \
                ref[max(-a, 0):n0 + min(-a, 0), max(-b, 0):n1 + min(-b, 0)]
            grown |= sh
    if not mask.any():
        return float("nan")
    return float((mask & grown).sum() / mask.sum())


def in_main_cardioid(c, margin=0.0):
    """c = mu/2 - mu^2/4 with |mu| < 1 - margin."""
    c = np.asarray(c, dtype=complex)
    mu = 1 - np.sqrt(1 - 4 * c)
    return np.abs(mu) < 1 - margin


def green_at_c(c, n_iter=60, radius=1e10):
    """Escape rate G_c(c) = lim 2^-n ln|f^n(c)|, zero on the connectedness locus."""
    c = complex(c)
    z = c
    for n in range(1, n_iter):
        if abs(z) > radius:
            return np.log(abs(z)) / 2 ** (n - 1)
        z = z * z + c
    return 0.0


def lyapunov_quadratic(c):
    """Lyapunov exponent of z^2 + c: ln 2 + G_c(0) = ln 2 + G_c(c) / 2."""
    return np.log(2) + green_at_c(c) / 2


def chebyshev_cycle_points(n):
    """Periodic points of z^2 - 2 of period dividing n: 2 cos(2 pi j / (2^n +- 1))."""
    a = 2 * np.cos(2 * np.pi * np.arange(2 ** n - 1) / (2 ** n - 1))
    b = 2 * np.cos(2 * np.pi * np.arange(2 ** n + 1) / (2 ** n + 1))
    return np.unique(np.round(np.concatenate([a, b]), 12))


def arcsine_cdf(x):
    return 0.5 + np.arcsin(np.clip(np.asarray(x) / 2, -1, 1)) / np.pi


def beta_fixed_point(c):
    return (1 + np.sqrt(1 - 4 * np.asarray(c, dtype=complex))) / 2
