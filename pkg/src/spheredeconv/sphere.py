"""Geometry on the unit hypersphere and the rotation group acting on it.

Points with cached hyperspherical angles, rotations with parametric forms,
product integration rules for the surface measure and the normalized Haar
measure, and seeded random samplers.  Everything here is immutable after
construction; samplers take explicit seeds and are deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, UnsupportedDimensionError, UnsupportedModelError

TWO_PI = 2.0 * math.pi

# Threshold below which sin(theta) is treated as an exact coordinate
# singularity and the remaining angles collapse to the canonical zero
# representative.
_SINGULAR_TOL = 1e-14


def surface_area(d):
    """Total mass of the surface measure on S^d: 2*pi, 4*pi, 2*pi^2, ..."""
    return 2.0 * math.pi ** ((d + 1) / 2.0) / math.gamma((d + 1) / 2.0)


# ---------------------------------------------------------------------------
# coordinates


def angles_to_coords(phi, thetas):
    """Map hyperspherical angles to unit vectors.

    phi has shape (m,), thetas has shape (m, d-1); returns (m, d+1).
    Axis d holds cos(theta_{d-1}); axes 0 and 1 hold cos(phi) and sin(phi)
    times the full product of sines.
    """
    phi = np.asarray(phi, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    m = phi.shape[0]
    dm1 = thetas.shape[1] if thetas.ndim == 2 else 0
    d = dm1 + 1
    out = np.empty((m, d + 1))
    # suffix[k] = prod_{j >= k} sin(theta_j)
    suffix = np.ones((m, dm1 + 1))
    for k in range(dm1 - 1, -1, -1):
        suffix[:, k] = suffix[:, k + 1] * np.sin(thetas[:, k])
    out[:, 0] = np.cos(phi) * suffix[:, 0]
    out[:, 1] = np.sin(phi) * suffix[:, 0]
    for j in range(1, d):
        out[:, j + 1] = np.cos(thetas[:, j - 1]) * suffix[:, j]
    return out


def coords_to_angles(coords):
    """Invert the coordinate map; returns (phi (m,), thetas (m, d-1)).

    At singular points (some sin(theta_k) = 0) the canonical representative
    with the remaining angles set to zero is returned.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    m, dp1 = coords.shape
    d = dp1 - 1
    thetas = np.zeros((m, d - 1)) if d >= 2 else np.zeros((m, 0))
    rest = coords.copy()
    alive = np.ones(m, dtype=bool)
    for k in range(d - 1, 0, -1):
        t = np.clip(rest[:, k + 1], -1.0, 1.0)
        theta_k = np.where(alive, np.arccos(t), 0.0)
        thetas[:, k - 1] = theta_k
        s = np.sin(theta_k)
        deeper = alive & (s > _SINGULAR_TOL)
        rest[deeper, : k + 1] /= s[deeper, None]
        alive = deeper
    phi = np.where(alive, np.arctan2(rest[:, 1], rest[:, 0]), 0.0)
    phi = np.mod(phi, TWO_PI)
    # collapse -0.0 and 2 pi wrap
    phi[phi >= TWO_PI] = 0.0
    return phi, thetas


@dataclass(frozen=True)
class SpherePoint:
    """A point on S^d: unit vector plus cached hyperspherical angles."""

    dim: int
    coords: np.ndarray
    phi: float
    thetas: tuple

    def __post_init__(self):
        self.coords.setflags(write=False)

    @property
    def angles(self):
        return self.phi, self.thetas


def from_angles(d, phi, thetas=()):
    """Build a point from its angles.

    phi must lie in [0, 2*pi); each polar angle in [0, pi].  The closed upper
    bound admits points like the south pole that the half-open convention
    cannot represent.
    """
    thetas = tuple(float(t) for t in np.atleast_1d(np.asarray(thetas, dtype=float)).ravel()) if len(
        np.atleast_1d(thetas)
    ) else ()
    if d < 1:
        raise UnsupportedDimensionError(f"d must be >= 1, got {d}")
    if len(thetas) != d - 1:
        raise DomainError(f"expected {d - 1} polar angles for d={d}, got {len(thetas)}")
    if not (0.0 <= phi < TWO_PI):
        raise DomainError(f"phi={phi} outside [0, 2*pi)")
    for t in thetas:
        if not (0.0 <= t <= math.pi):
            raise DomainError(f"polar angle {t} outside [0, pi]")
    coords = angles_to_coords(np.array([phi]), np.array([thetas]).reshape(1, d - 1))[0]
    return SpherePoint(d, coords, float(phi), thetas)


def from_coords(coords):
    """Build a point from a vector, normalizing and caching its angles."""
    coords = np.asarray(coords, dtype=float)
    nrm = np.linalg.norm(coords)
    if nrm == 0.0:
        raise DomainError("zero vector has no direction")
    coords = coords / nrm
    phi, thetas = coords_to_angles(coords[None, :])
    return SpherePoint(coords.size - 1, coords, float(phi[0]), tuple(thetas[0]))


def to_angles(p):
    """Return (phi, thetas) for a point; canonical at coordinate singularities."""
    return p.phi, p.thetas


# ---------------------------------------------------------------------------
# rotations


@dataclass(frozen=True)
class Rotation:
    """An element of SO(d+1): matrix form plus the parametric form when d <= 2."""

    dim: int
    matrix: np.ndarray
    angle: Optional[float] = None  # d = 1
    euler: Optional[tuple] = None  # d = 2: (phi, theta, psi)

    def __post_init__(self):
        self.matrix.setflags(write=False)


def _check_special_orthogonal(m, tol=1e-10):
    k = m.shape[0]
    if not np.allclose(m.T @ m, np.eye(k), atol=tol):
        raise DomainError("matrix is not orthogonal within tolerance")
    if abs(np.linalg.det(m) - 1.0) > tol:
        raise DomainError("matrix determinant is not +1 within tolerance")


def rotation_identity(d):
    return Rotation(d, np.eye(d + 1), angle=0.0 if d == 1 else None,
                    euler=(0.0, 0.0, 0.0) if d == 2 else None)


def rotation_from_angle(phi):
    """Planar rotation of S^1 by phi, counter-clockwise."""
    if not (0.0 <= phi < TWO_PI):
        raise DomainError(f"phi={phi} outside [0, 2*pi)")
    c, s = math.cos(phi), math.sin(phi)
    return Rotation(1, np.array([[c, -s], [s, c]]), angle=float(phi))


def _rz(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _sy(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_from_euler(phi, theta, psi):
    """SO(3) rotation R(phi) S(theta) R(psi) from its Euler angles."""
    if not (0.0 <= phi < TWO_PI) or not (0.0 <= psi < TWO_PI):
        raise DomainError("phi and psi must lie in [0, 2*pi)")
    if not (0.0 <= theta <= math.pi):
        raise DomainError("theta must lie in [0, pi]")
    m = _rz(phi) @ _sy(theta) @ _rz(psi)
    return Rotation(2, m, euler=(float(phi), float(theta), float(psi)))


def euler_from_matrix(m):
    """Extract Euler angles (phi, theta, psi) with theta in [0, pi].

    The gimbal-locked cases sin(theta)=0 return the canonical representative
    with psi = 0.
    """
    ct = np.clip(m[2, 2], -1.0, 1.0)
    theta = math.acos(ct)
    if math.sin(theta) > _SINGULAR_TOL:
        phi = math.atan2(m[1, 2], m[0, 2])
        psi = math.atan2(m[2, 1], -m[2, 0])
    elif ct > 0.0:  # theta = 0: m = R(phi + psi)
        phi = math.atan2(m[1, 0], m[0, 0])
        psi = 0.0
    else:  # theta = pi: m = R(phi) S(pi) R(psi)
        phi = math.atan2(-m[0, 1], -m[0, 0])
        psi = 0.0
    return math.fmod(phi + TWO_PI, TWO_PI), theta, math.fmod(psi + TWO_PI, TWO_PI)


def rotation_from_matrix(m, validate=True):
    m = np.asarray(m, dtype=float)
    d = m.shape[0] - 1
    if validate:
        _check_special_orthogonal(m)
    if d == 1:
        return Rotation(1, m, angle=math.fmod(math.atan2(m[1, 0], m[0, 0]) + TWO_PI, TWO_PI))
    if d == 2:
        return Rotation(2, m, euler=euler_from_matrix(m))
    return Rotation(d, m)


def rotation_from_axis_angle(axis, angle):
    """SO(3) rotation about a unit axis by the given angle (Rodrigues form)."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    m = np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)
    return Rotation(2, m, euler=euler_from_matrix(m))


def rotation_angle(m):
    """Rotation angle of an SO(3) matrix: arccos((trace - 1)/2) in [0, pi]."""
    return math.acos(np.clip((np.trace(m) - 1.0) / 2.0, -1.0, 1.0))


def compose(u, v):
    """Group product: the rotation acting as u after v."""
    if u.dim != v.dim:
        raise DomainError("dimension mismatch in rotation product")
    return rotation_from_matrix(u.matrix @ v.matrix, validate=False)


def apply(u, x):
    """Apply a rotation to a point; the result is renormalized to unit norm."""
    if u.dim != x.dim:
        raise DomainError(f"rotation dim {u.dim} does not match point dim {x.dim}")
    return from_coords(u.matrix @ x.coords)


# ---------------------------------------------------------------------------
# grids and quadrature


class SphereGrid:
    """A finite family of points on S^d stored as angle/coordinate arrays."""

    def __init__(self, d, phi, thetas):
        self.dim = d
        self.phi = np.asarray(phi, dtype=float)
        self.thetas = np.asarray(thetas, dtype=float).reshape(self.phi.size, d - 1)
        self.coords = angles_to_coords(self.phi, self.thetas)
        for a in (self.phi, self.thetas, self.coords):
            a.setflags(write=False)

    def __len__(self):
        return self.phi.size

    @property
    def nodes(self):
        return [SpherePoint(self.dim, self.coords[i].copy(), float(self.phi[i]),
                            tuple(self.thetas[i])) for i in range(len(self))]

    @classmethod
    def from_points(cls, points):
        points = list(points)
        d = points[0].dim
        g = cls.__new__(cls)
        g.dim = d
        g.phi = np.array([p.phi for p in points])
        g.thetas = np.array([p.thetas for p in points]).reshape(len(points), d - 1)
        g.coords = np.vstack([p.coords for p in points])
        return g

    @classmethod
    def from_coords(cls, coords):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        coords = coords / np.linalg.norm(coords, axis=1, keepdims=True)
        phi, thetas = coords_to_angles(coords)
        g = cls.__new__(cls)
        g.dim = coords.shape[1] - 1
        g.phi, g.thetas, g.coords = phi, thetas, coords
        return g


class SphereQuadrature(SphereGrid):
    """Nodes and positive weights integrating the surface measure on S^d."""

    def __init__(self, d, phi, thetas, weights):
        super().__init__(d, phi, thetas)
        self.weights = np.asarray(weights, dtype=float)
        self.weights.setflags(write=False)

    def integrate(self, values):
        return np.sum(self.weights * np.asarray(values))


def product_quadrature(d, resolution):
    """Product rule for the surface measure on S^d, d in {1, 2, 3}.

    d=1 uses the periodic trapezoid in phi; d=2 adds Gauss-Legendre in
    cos(theta); d=3 adds a Gauss-Chebyshev (second kind) layer carrying the
    sin^2 factor of the volume element.  Harmonics of degree 1..resolution-2
    integrate to zero up to rounding.
    """
    if resolution < 4:
        raise DomainError("resolution must be >= 4")
    if d == 1:
        phi = TWO_PI * np.arange(resolution) / resolution
        w = np.full(resolution, TWO_PI / resolution)
        return SphereQuadrature(1, phi, np.zeros((resolution, 0)), w)
    if d == 2:
        t, wt = np.polynomial.legendre.leggauss(resolution)
        theta = np.arccos(t)
        nphi = 2 * resolution
        phi = TWO_PI * np.arange(nphi) / nphi
        wphi = TWO_PI / nphi
        pp, tt = np.meshgrid(phi, theta, indexing="ij")
        ww = np.broadcast_to(wt * wphi, pp.shape)
        return SphereQuadrature(2, pp.ravel(), tt.ravel()[:, None], ww.ravel())
    if d == 3:
        base = product_quadrature(2, resolution)
        k = np.arange(1, resolution + 1)
        t2 = np.cos(k * math.pi / (resolution + 1))
        w2 = (math.pi / (resolution + 1)) * np.sin(k * math.pi / (resolution + 1)) ** 2
        theta2 = np.arccos(t2)
        m = len(base)
        phi = np.tile(base.phi, resolution)
        th1 = np.tile(base.thetas[:, 0], resolution)
        th2 = np.repeat(theta2, m)
        w = np.repeat(w2, m) * np.tile(base.weights, resolution)
        return SphereQuadrature(3, phi, np.stack([th1, th2], axis=1), w)
    raise UnsupportedDimensionError(f"product quadrature supports d in {{1,2,3}}, got d={d}")


def default_resolution(t_max):
    """Resolution that integrates products of two truncation-t_max kernels exactly."""
    return 2 * int(math.floor(t_max)) + 8


class RotationQuadrature:
    """Nodes and weights integrating the normalized Haar measure on SO(d+1)."""

    def __init__(self, d, matrices, weights, euler=None):
        self.dim = d
        self.matrices = np.asarray(matrices, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.euler = euler  # optional (phi, theta, psi) arrays for d = 2
        self.matrices.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self):
        return self.weights.size

    @property
    def nodes(self):
        return [rotation_from_matrix(self.matrices[i], validate=False)
                for i in range(len(self))]


def so3_quadrature(resolution):
    """Euler-angle product rule for Haar measure on SO(3); weights sum to 1."""
    if resolution < 4:
        raise DomainError("resolution must be >= 4")
    nph = 2 * resolution
    phi = TWO_PI * np.arange(nph) / nph
    psi = TWO_PI * np.arange(nph) / nph
    t, wt = np.polynomial.legendre.leggauss(resolution)
    theta = np.arccos(t)
    pp, tt, ss = np.meshgrid(phi, theta, psi, indexing="ij")
    ww = np.broadcast_to(wt[None, :, None], pp.shape) * (TWO_PI / nph) ** 2 / (8.0 * math.pi ** 2)
    pf, tf, sf = pp.ravel(), tt.ravel(), ss.ravel()
    mats = _euler_matrices(pf, tf, sf)
    return RotationQuadrature(2, mats, ww.ravel(), euler=(pf, tf, sf))


def _euler_matrices(phi, theta, psi):
    cp, sp = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cs, ss = np.cos(psi), np.sin(psi)
    m = np.empty(phi.shape + (3, 3))
    m[..., 0, 0] = cp * ct * cs - sp * ss
    m[..., 0, 1] = -cp * ct * ss - sp * cs
    m[..., 0, 2] = cp * st
    m[..., 1, 0] = sp * ct * cs + cp * ss
    m[..., 1, 1] = -sp * ct * ss + cp * cs
    m[..., 1, 2] = sp * st
    m[..., 2, 0] = -st * cs
    m[..., 2, 1] = st * ss
    m[..., 2, 2] = ct
    return m


def _axis_angle_matrices(axes, angles):
    """Rodrigues formula, vectorized: axes (m,3) unit, angles (m,)."""
    axes = np.asarray(axes, dtype=float)
    angles = np.asarray(angles, dtype=float)
    c = np.cos(angles)[:, None, None]
    s = np.sin(angles)[:, None, None]
    k = np.zeros((axes.shape[0], 3, 3))
    k[:, 0, 1], k[:, 0, 2] = -axes[:, 2], axes[:, 1]
    k[:, 1, 0], k[:, 1, 2] = axes[:, 2], -axes[:, 0]
    k[:, 2, 0], k[:, 2, 1] = -axes[:, 1], axes[:, 0]
    kk = k @ k
    return np.eye(3)[None] + s * k + (1.0 - c) * kk


def so3_axis_angle_quadrature(resolution):
    """Axis-angle rule for Haar measure on SO(3).

    The angle marginal (1 - cos r)/pi is folded into the weights, so class
    densities with an integrable 1/sin(r/2) singularity at the identity are
    integrated accurately (the summand seen by Gauss-Legendre is smooth).
    """
    axes = product_quadrature(2, resolution)
    r01, wr = np.polynomial.legendre.leggauss(resolution)
    r = 0.5 * math.pi * (r01 + 1.0)
    wr = 0.5 * math.pi * wr
    m = len(axes)
    ax = np.tile(axes.coords, (resolution, 1))
    rr = np.repeat(r, m)
    w = np.repeat(wr * (1.0 - np.cos(r)) / math.pi, m) * np.tile(axes.weights, resolution) / (4.0 * math.pi)
    mats = _axis_angle_matrices(ax, rr)
    quad = RotationQuadrature(2, mats, w)
    quad.angles = rr
    quad.angles.setflags(write=False)
    return quad


def fibonacci_grid(m):
    """Fibonacci lattice of m nearly uniform nodes on S^2."""
    i = np.arange(m)
    z = 1.0 - (2.0 * i + 1.0) / m
    theta = np.arccos(z)
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    phi = np.mod(TWO_PI * i / golden, TWO_PI)
    return SphereGrid(2, phi, theta[:, None])


# ---------------------------------------------------------------------------
# samplers


def _cumtrapz_cdf(xs, pdf):
    """Cumulative trapezoid CDF table, normalized to end at 1."""
    pdf = np.maximum(np.asarray(pdf, dtype=float), 0.0)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(xs))])
    if cdf[-1] <= 0.0:
        raise DomainError("density table integrates to zero")
    cdf /= cdf[-1]
    return np.maximum.accumulate(cdf)


def _sample_inverse_cdf(xs, cdf, rng, n):
    return np.interp(rng.random(n), cdf, xs)


_TABLE_POINTS = 4096

def _rng_from_seed(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed))



def _uniform_axes(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_uniform_sphere(d, n, seed):
    """i.i.d. uniform draws on S^d (d arbitrary)."""
    rng = _rng_from_seed(seed)
    v = rng.standard_normal((n, d + 1))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return [from_coords(row) for row in v]


def sample_vmf_sphere(mean, kappa, n, seed):
    """i.i.d. draws from the von Mises-Fisher law with the given mean direction.

    Uses the tangent-normal decomposition: the cosine of the polar angle about
    the mean is drawn by inverse CDF, the tangent direction uniformly.
    kappa = 0 reduces to the uniform distribution.
    """
    if kappa < 0:
        raise DomainError("concentration must be nonnegative")
    d = mean.dim
    rng = _rng_from_seed(seed)
    if d == 2:
        u = rng.random(n)
        if kappa == 0.0:
            w = 2.0 * u - 1.0
        else:
            # closed-form inverse CDF of the density prop. to exp(kappa*w) on [-1,1]
            w = 1.0 + np.log(u + (1.0 - u) * math.exp(-2.0 * kappa)) / kappa
        w = np.clip(w, -1.0, 1.0)
        # orthonormal frame perpendicular to the mean
        mu = mean.coords
        a = np.zeros(3)
        a[np.argmin(np.abs(mu))] = 1.0
        e1 = np.cross(mu, a)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(mu, e1)
        beta = TWO_PI * rng.random(n)
        sin_part = np.sqrt(np.maximum(0.0, 1.0 - w ** 2))
        pts = (w[:, None] * mu[None, :]
               + (sin_part * np.cos(beta))[:, None] * e1[None, :]
               + (sin_part * np.sin(beta))[:, None] * e2[None, :])
        return [from_coords(row) for row in pts]
    if d == 1:
        alpha_grid = np.linspace(0.0, math.pi, _TABLE_POINTS)
        pdf = np.exp(kappa * (np.cos(alpha_grid) - 1.0))
        cdf = _cumtrapz_cdf(alpha_grid, pdf)
        alpha = _sample_inverse_cdf(alpha_grid, cdf, rng, n)
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        phis = np.mod(mean.phi + sign * alpha, TWO_PI)
        return [from_angles(1, p) for p in phis]
    raise UnsupportedDimensionError("von Mises-Fisher sampling supports d in {1, 2}")


# angle-marginal tables are rebuilt only once per model
_MARGINAL_CACHE = {}


def _so3_angle_marginal_cdf(model):
    """CDF table of the rotation-angle marginal f(r)(1-cos r)/pi on [0, pi]."""
    from . import transforms  # deferred: transforms imports this module

    key = model.cache_key()
    if key in _MARGINAL_CACHE:
        return _MARGINAL_CACHE[key]
    r = np.linspace(0.0, math.pi, _TABLE_POINTS)
    if model.kind == "rosenthal":
        cdf = transforms.rosenthal_angle_cdf(model, r)
    else:
        cdf = _cumtrapz_cdf(r, transforms.so3_angle_marginal(model, r))
    _MARGINAL_CACHE[key] = (r, cdf)
    return r, cdf


def _haar_angle_cdf():
    key = "haar-so3"
    if key not in _MARGINAL_CACHE:
        r = np.linspace(0.0, math.pi, _TABLE_POINTS)
        _MARGINAL_CACHE[key] = (r, (r - np.sin(r)) / math.pi)
    return _MARGINAL_CACHE[key]


def sample_haar_so3(n, seed):
    """i.i.d. Haar draws on SO(3) via a uniform axis and the (1-cos r)/pi angle law."""
    rng = _rng_from_seed(seed)
    return _haar_matrices(rng, n)


def _haar_matrices(rng, n):
    rg, cdf = _haar_angle_cdf()
    r = np.interp(rng.random(n), cdf, rg)
    return _axis_angle_matrices(_uniform_axes(rng, n), r)


def sample_error(model, n, seed):
    """i.i.d. rotation draws from a named measurement-error distribution.

    d=1 models sample the rotation angle by inverse CDF of the printed angle
    densities.  d=2 class-function models factor into a uniform axis and the
    angle marginal f(r)(1-cos r)/pi; the von Mises-Fisher model on SO(3) uses
    rejection from the Haar proposal with envelope exp(3*lambda).
    """
    from . import transforms  # deferred import, see _so3_angle_marginal_cdf

    rng = _rng_from_seed(seed)
    if model.kind == "errorfree":
        return [rotation_identity(model.dim) for _ in range(n)]
    if model.dim == 1:
        phig = np.linspace(0.0, TWO_PI, _TABLE_POINTS)
        pdf = transforms.so2_density(model, phig)  # density wrt Haar; flat 1/(2 pi) factor cancels
        cdf = _cumtrapz_cdf(phig, pdf)
        phis = np.mod(_sample_inverse_cdf(phig, cdf, rng, n), TWO_PI)
        return [rotation_from_angle(p) for p in phis]
    if model.dim == 2:
        if model.kind in ("laplace", "gaussian", "rosenthal"):
            rg, cdf = _so3_angle_marginal_cdf(model)
            r = np.interp(rng.random(n), cdf, rg)
            mats = _axis_angle_matrices(_uniform_axes(rng, n), r)
            return [rotation_from_matrix(m, validate=False) for m in mats]
        if model.kind == "vmf":
            lam = model.lam
            a_inv = model.a_matrix().T
            out = np.empty((n, 3, 3))
            got = 0
            while got < n:
                batch = max(256, 2 * (n - got))
                props = _haar_matrices(rng, batch)
                logacc = lam * (np.einsum("kij,ij->k", props, a_inv.T) - 3.0)
                keep = np.log(rng.random(batch)) < logacc
                take = min(int(keep.sum()), n - got)
                out[got:got + take] = props[keep][:take]
                got += take
            return [rotation_from_matrix(m, validate=False) for m in out]
    raise UnsupportedModelError(f"no sampler for model kind '{model.kind}' at d={model.dim}")
