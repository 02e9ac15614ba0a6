"""Orthonormal harmonic bases on S^d and the rotation matrices behind them.

d=1 uses the trigonometric pair, d=2 the complex basis built from the real
rotation matrix elements d^l_{qr}(theta), d>=3 a recursive construction with
normalized associated Legendre factors.  Index q runs 1..N(d,l); for d=2 the
classical order is m = q - l - 1.

The d^l_{qr} entries are evaluated through their Jacobi-polynomial closed
form with a three-term recurrence.  The textbook alternating k-sum loses
roughly 0.3*l decimal digits to cancellation and is unusable in double
precision beyond l ~ 30; the recurrence stays entrywise-accurate to ~1e-12
up to the supported cap.  Factorial ratios go through log-gamma so nothing
overflows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from . import sphere
from .errors import DegreeOverflowError, DomainError, UnsupportedDimensionError

WIGNER_DEGREE_CAP = 128  # d = 2 (and the d^l machinery generally)
GENERAL_DIM_DEGREE_CAP = 64  # d >= 3 recursive basis

_SQRT_PI = math.sqrt(math.pi)


def n_dl(d, l):
    """Dimension of the degree-l harmonic space on S^d (exact integer)."""
    if d < 1 or l < 0:
        raise DomainError("need d >= 1 and l >= 0")
    if l == 0:
        return 1
    if d == 1:
        return 2
    return (2 * l + d - 1) * math.comb(l + d - 2, l) // (d - 1)


# ---------------------------------------------------------------------------
# rotation matrix elements d^l_{qr}


def _jacobi_recurrence(a, b, kmax, x):
    """Values P_i^{(a,b)}(x) for i = 0..kmax; a, b scalars, x array."""
    x = np.asarray(x, dtype=float)
    out = np.empty((kmax + 1,) + x.shape)
    out[0] = 1.0
    if kmax >= 1:
        out[1] = (a + 1.0) + (a + b + 2.0) * (x - 1.0) / 2.0
    for i in range(2, kmax + 1):
        c = 2.0 * i + a + b
        den = 2.0 * i * (i + a + b) * (c - 2.0)
        out[i] = ((c - 1.0) * ((c * (c - 2.0)) * x + a * a - b * b) * out[i - 1]
                  - 2.0 * (i + a - 1.0) * (i + b - 1.0) * c * out[i - 2]) / den
    return out


def _log_half_power(base, expo):
    """expo * log(base) with the 0**0 = 1 convention, elementwise."""
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(base > 0.0, np.log(np.maximum(base, 1e-300)), -np.inf)
    return np.where(expo == 0, 0.0, expo * lg)


def wigner_small_d_matrix(l, theta):
    """Full (2l+1) x (2l+1) real matrix d^l(theta); theta scalar or array.

    Row/column indices correspond to orders m', m = -l..l (paper indices
    q = m' + l + 1, r = m + l + 1).  Output shape is theta.shape + (2l+1, 2l+1).
    """
    if l > WIGNER_DEGREE_CAP:
        raise DegreeOverflowError(f"degree {l} exceeds the validated cap {WIGNER_DEGREE_CAP}")
    theta = np.asarray(theta, dtype=float)
    n = 2 * l + 1
    if l == 0:
        return np.ones(theta.shape + (1, 1))
    mp = np.arange(-l, l + 1)[:, None]  # row order m'
    m = np.arange(-l, l + 1)[None, :]  # column order m
    jm, jn = l + m, l - m
    jmp, jnp = l + mp, l - mp
    k = np.minimum(np.minimum(jm, jn), np.minimum(jmp, jnp))
    # case selection fixes (a, sign) so that the Jacobi form is well defined
    a = np.where(k == jm, mp - m,
                 np.where(k == jn, m - mp,
                          np.where(k == jmp, m - mp, mp - m)))
    lam = np.where(k == jm, mp - m,
                   np.where(k == jn, 0,
                            np.where(k == jmp, 0, mp - m)))
    b = 2 * l - 2 * k - a
    sign = np.where(lam % 2 == 0, 1.0, -1.0)
    logc = 0.5 * (gammaln(2 * l - k + 1.0) + gammaln(k + 1.0)
                  - gammaln(k + a + 1.0) - gammaln(k + b + 1.0))

    half = theta / 2.0
    sh, ch = np.sin(half), np.cos(half)
    x = np.cos(theta)
    af, bf, kf = a.ravel(), b.ravel(), k.ravel()
    with np.errstate(invalid="ignore"):
        logpref = (logc.ravel()
                   + _log_half_power(sh[..., None], af)
                   + _log_half_power(ch[..., None], bf))
    pref = sign.ravel() * np.exp(logpref)
    # masked simultaneous Jacobi recurrence over all entries
    kmax = int(kf.max())
    xb = x[..., None]
    p_prev = np.ones(theta.shape + (n * n,))
    p_val = np.where(kf == 0, p_prev, np.nan)
    if kmax >= 1:
        p_curr = (af + 1.0) + (af + bf + 2.0) * (xb - 1.0) / 2.0
        p_val = np.where(kf == 1, p_curr, p_val)
        for i in range(2, kmax + 1):
            c = 2.0 * i + af + bf
            den = 2.0 * i * (i + af + bf) * (c - 2.0)
            p_next = ((c - 1.0) * ((c * (c - 2.0)) * xb + af * af - bf * bf) * p_curr
                      - 2.0 * (i + af - 1.0) * (i + bf - 1.0) * c * p_prev) / den
            p_prev, p_curr = p_curr, p_next
            p_val = np.where(kf == i, p_curr, p_val)
    return (pref * p_val).reshape(theta.shape + (n, n))


@dataclass(frozen=True)
class WignerSmallD:
    """Rotation matrix element table d^l_{qr}(theta), indices q, r = 1..2l+1."""

    degree: int
    theta: float
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix.setflags(write=False)

    def entry(self, q, r):
        return self.matrix[q - 1, r - 1]


@lru_cache(maxsize=256)
def _identity_checked(l):
    m = wigner_small_d_matrix(l, 0.0)
    if not np.allclose(m, np.eye(2 * l + 1), atol=1e-12):
        raise AssertionError(f"d^{l}(0) is not the identity; index conventions corrupted")
    return True


def wigner_small_d(l, theta):
    if not (0.0 <= theta <= math.pi):
        raise DomainError("theta must lie in [0, pi]")
    _identity_checked(l)
    return WignerSmallD(l, float(theta), wigner_small_d_matrix(l, float(theta)))


def wigner_d0_columns(max_degree, theta):
    """Columns d^l_{m',0}(theta) for l = 0..max_degree, theta an array.

    Returns a list whose l-th entry has shape (len(theta), 2l+1), ordered by
    m' = -l..l.  This is the only slice the d=2 basis needs, so it is computed
    without assembling full matrices: for each |m'| one Jacobi recurrence
    serves every degree at once.
    """
    if max_degree > WIGNER_DEGREE_CAP:
        raise DegreeOverflowError(f"degree {max_degree} exceeds the validated cap {WIGNER_DEGREE_CAP}")
    theta = np.asarray(theta, dtype=float)
    x = np.cos(theta)
    half_sin = 0.5 * np.sin(theta)  # sin(t/2) cos(t/2)
    out = [np.empty((theta.size, 2 * l + 1)) for l in range(max_degree + 1)]
    for mp in range(0, max_degree + 1):
        pvals = _jacobi_recurrence(mp, mp, max_degree - mp, x)
        if mp == 0:
            powf = np.ones_like(theta)
        else:
            powf = half_sin ** mp
        for l in range(mp, max_degree + 1):
            # sqrt(binom(l+mp, l) / binom(l, mp))
            logc = 0.5 * (gammaln(l + mp + 1.0) - 2.0 * gammaln(l + 1.0)
                          + gammaln(l - mp + 1.0))
            cval = math.exp(logc)
            col = cval * powf * pvals[l - mp]
            sgn = -1.0 if mp % 2 else 1.0
            out[l][:, l + mp] = sgn * col  # m' = +mp
            out[l][:, l - mp] = col  # m' = -mp
    return out


# ---------------------------------------------------------------------------
# Legendre machinery for d >= 3


def _legendre_ratio(alpha, max_degree, t):
    """Gegenbauer C_i^(alpha)(t) / C_i^(alpha)(1) for i = 0..max_degree.

    Equals the degree-i Legendre polynomial in 2*alpha + 2 variables.  The
    recurrence form replaces the alternating power sum, which cancels badly
    at moderate degree.
    """
    t = np.asarray(t, dtype=float)
    vals = np.empty((max_degree + 1,) + t.shape)
    vals[0] = 1.0
    if max_degree >= 1:
        vals[1] = 2.0 * alpha * t
    for i in range(2, max_degree + 1):
        vals[i] = (2.0 * t * (i + alpha - 1.0) * vals[i - 1]
                   - (i + 2.0 * alpha - 2.0) * vals[i - 2]) / i
    for i in range(max_degree + 1):
        logc = gammaln(i + 2.0 * alpha) - gammaln(i + 1.0) - gammaln(2.0 * alpha)
        vals[i] /= math.exp(logc)
    return vals


def normalized_assoc_legendre(d, l, j, t):
    """The normalized factor pairing a degree-j basis of S^(d-1) into degree l on S^d."""
    t = np.asarray(t, dtype=float)
    p = _legendre_ratio((d - 1.0) / 2.0 + j, l - j, t)[l - j]
    logc = (0.5 * (math.log(2.0 * l + d - 1.0) + gammaln(l + d + j - 1.0) - gammaln(l - j + 1.0))
            - ((d - 1.0) / 2.0 + j) * math.log(2.0) - gammaln(j + d / 2.0))
    with np.errstate(invalid="ignore"):
        halfpow = np.where(1.0 - t * t > 0.0, (1.0 - t * t) ** (j / 2.0), 0.0 if j else 1.0)
    return math.exp(logc) * halfpow * p


# ---------------------------------------------------------------------------
# basis evaluation


def _basis_blocks(d, max_degree, phi, thetas):
    """Per-degree matrices of basis values, shape (npoints, N(d,l))."""
    phi = np.asarray(phi, dtype=float)
    npts = phi.size
    const = 1.0 / math.sqrt(sphere.surface_area(d))
    blocks = [np.full((npts, 1), const, dtype=complex)]
    if max_degree == 0:
        return blocks
    if d == 1:
        for l in range(1, max_degree + 1):
            b = np.empty((npts, 2), dtype=complex)
            b[:, 0] = np.cos(l * phi) / _SQRT_PI
            b[:, 1] = np.sin(l * phi) / _SQRT_PI
            blocks.append(b)
        return blocks
    if d == 2:
        theta = np.asarray(thetas, dtype=float).reshape(npts)
        cols = wigner_d0_columns(max_degree, theta)
        for l in range(1, max_degree + 1):
            m = np.arange(-l, l + 1)
            phase = np.exp(1j * np.outer(phi, m))
            coef = math.sqrt((2 * l + 1) / (4.0 * math.pi))
            blocks.append(coef * phase * cols[l])
        return blocks
    # d >= 3: outer Legendre factor times a full basis of S^(d-1)
    if max_degree > GENERAL_DIM_DEGREE_CAP:
        raise DegreeOverflowError(
            f"degree {max_degree} exceeds the d>=3 cap {GENERAL_DIM_DEGREE_CAP}")
    thetas = np.asarray(thetas, dtype=float).reshape(npts, d - 1)
    sub = _basis_blocks(d - 1, max_degree, phi, thetas[:, : d - 2])
    t = np.cos(thetas[:, d - 2])
    for l in range(1, max_degree + 1):
        parts = []
        for j in range(0, l + 1):
            outer = normalized_assoc_legendre(d, l, j, t)
            parts.append(outer[:, None] * sub[j])
        b = np.concatenate(parts, axis=1)
        if b.shape[1] != n_dl(d, l):
            raise AssertionError("recursive basis dimension mismatch")
        blocks.append(b)
    return blocks


class BasisTable:
    """Materialized per-degree basis matrices over a fixed family of points.

    Estimator sums reuse these tables n x grid times, so they are built once
    per (d, max_degree, points) and shared; all arrays are read-only.
    """

    def __init__(self, d, max_degree, phi, thetas):
        self.dim = d
        self.max_degree = max_degree
        self.blocks = _basis_blocks(d, max_degree, phi, thetas)
        for b in self.blocks:
            b.setflags(write=False)

    @classmethod
    def for_grid(cls, grid, max_degree):
        return cls(grid.dim, max_degree, grid.phi, grid.thetas)

    def block(self, l):
        return self.blocks[l]


def eval_basis(d, l, x):
    """Basis values B^l_q(x), q = 1..N(d,l), as a complex vector."""
    table = BasisTable(d, l, np.array([x.phi]), np.array([x.thetas]).reshape(1, d - 1))
    return table.block(l)[0].copy()


def eval_basis_d1(l, x):
    if x.dim != 1 or l < 1:
        raise DomainError("eval_basis_d1 needs dim-1 points and l >= 1")
    return np.array([math.cos(l * x.phi), math.sin(l * x.phi)], dtype=complex) / _SQRT_PI


def eval_basis_d2(l, x):
    if x.dim != 2 or l < 1:
        raise DomainError("eval_basis_d2 needs dim-2 points and l >= 1")
    return eval_basis(2, l, x)


def eval_basis_general(d, l, x):
    if d < 3:
        raise UnsupportedDimensionError("eval_basis_general is the d >= 3 path")
    return eval_basis(d, l, x)
