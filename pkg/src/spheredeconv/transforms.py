"""Rotational Fourier transforms of measurement-error distributions.

Per-degree matrix transforms of the named error laws (error-free, Laplace,
Gaussian, Rosenthal, von Mises-Fisher), their cached inverses and operator
norms, the representation matrices D^l(u) for d in {1, 2}, forward transforms
of functions on the sphere, and a convolution-identity checker used as a test
oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln  # noqa: F401  (re-exported convenience)

from . import harmonics, sphere
from .errors import (DomainError, SingularBlockError, UnsupportedDimensionError,
                     UnsupportedModelError)

CONDITION_GUARD = 1e12
_VMF_EULER_RESOLUTION = 64
_SERIES_TOL = 1e-14


@dataclass(frozen=True)
class SmoothnessClass:
    """Growth class of the inverse transform blocks in the degree.

    scenario S1: polynomial of order beta; S2: exp(gamma * l**beta) with
    polynomial factor l**alpha; S3: the same with an extra log(l) - xi term
    in the exponent.  The multiplicative constants are existential and not
    instantiated.
    """

    scenario: str
    beta: float
    alpha: Optional[float] = None
    gamma: Optional[float] = None
    xi1: Optional[float] = None
    xi2: Optional[float] = None


@dataclass(frozen=True)
class ErrorModel:
    """A named measurement-error distribution on SO(d+1).

    kind is one of 'errorfree', 'laplace', 'gaussian', 'rosenthal', 'vmf'.
    The von Mises-Fisher mean direction is stored as a nested tuple so the
    model stays hashable; a_matrix() returns it as an array.
    """

    kind: str
    dim: int
    lam: Optional[float] = None
    theta: Optional[float] = None
    p: Optional[float] = None
    a_param: Optional[tuple] = None

    def a_matrix(self):
        return np.asarray(self.a_param, dtype=float) if self.a_param is not None else None

    @property
    def smoothness(self):
        if self.kind == "errorfree":
            return SmoothnessClass("S1", beta=0.0)
        if self.kind == "laplace":
            return SmoothnessClass("S1", beta=2.0)
        if self.kind == "rosenthal":
            return SmoothnessClass("S1", beta=self.p)
        if self.kind == "gaussian":
            return SmoothnessClass("S2", beta=2.0, alpha=0.0, gamma=self.lam ** 2 / 2.0)
        if self.kind == "vmf":
            if self.dim == 1:
                return SmoothnessClass("S3", beta=1.0, alpha=0.0, gamma=1.0,
                                       xi1=1.0 + math.log(self.lam),
                                       xi2=1.0 + math.log(2.0 * self.lam))
            return SmoothnessClass("S3", beta=1.0, alpha=4.0, gamma=1.0,
                                   xi1=1.0 + math.log(self.lam),
                                   xi2=1.0 + math.log(3.0 * self.lam))
        raise UnsupportedModelError(self.kind)

    def cache_key(self):
        return (self.kind, self.dim, self.lam, self.theta, self.p, self.a_param)


def error_free(d=2):
    return ErrorModel("errorfree", d)


def laplace(lam, d=2):
    if lam <= 0:
        raise DomainError("laplace scale must be positive")
    return ErrorModel("laplace", d, lam=float(lam))


def gaussian(lam, d=2):
    if lam <= 0:
        raise DomainError("gaussian scale must be positive")
    return ErrorModel("gaussian", d, lam=float(lam))


def rosenthal(theta, p, d=2):
    if d != 2:
        raise UnsupportedModelError("the rosenthal law lives on SO(3)")
    if not (0.0 < theta <= math.pi) or p <= 0:
        raise DomainError("need theta in (0, pi] and p > 0")
    return ErrorModel("rosenthal", 2, theta=float(theta), p=float(p))


def vmf_error(lam, a=None, d=2):
    if lam <= 0:
        raise DomainError("concentration must be positive")
    if a is None:
        a = np.eye(d + 1)
    a = np.asarray(a, dtype=float)
    return ErrorModel("vmf", d, lam=float(lam), a_param=tuple(map(tuple, a)))


# ---------------------------------------------------------------------------
# densities with respect to the normalized Haar measure


def so2_density(model, phi):
    """f_U as a function of the rotation angle, for d = 1 models."""
    phi = np.asarray(phi, dtype=float)
    if model.kind == "laplace":
        lam = model.lam
        return (math.pi / lam) * (np.exp(-phi / lam) / (1.0 - math.exp(-2.0 * math.pi / lam))
                                  + np.exp(phi / lam) / (math.exp(2.0 * math.pi / lam) - 1.0))
    if model.kind == "gaussian":
        lam = model.lam
        tot = np.zeros_like(phi)
        for s in range(-10, 11):
            tot += np.exp(-(phi + 2.0 * math.pi * s) ** 2 / (2.0 * lam ** 2))
        return math.sqrt(2.0 * math.pi) / lam * tot
    if model.kind == "vmf":
        a = model.a_matrix()
        phi_a = math.atan2(a[1, 0], a[0, 0])
        unnorm = np.exp(2.0 * model.lam * (np.cos(phi - phi_a) - 1.0))
        grid = np.linspace(0.0, 2.0 * math.pi, 8192)
        mass = np.trapezoid(np.exp(2.0 * model.lam * (np.cos(grid) - 1.0)), grid) / (2.0 * math.pi)
        return unnorm / mass
    raise UnsupportedModelError(f"no angle density for kind '{model.kind}' at d=1")


def _characters(max_degree, r):
    """chi_l(r) = sin((2l+1) r/2) / sin(r/2) for l = 0..max_degree."""
    r = np.asarray(r, dtype=float)
    half = r / 2.0
    s = np.sin(half)
    out = np.empty((max_degree + 1,) + r.shape)
    for l in range(max_degree + 1):
        num = np.sin((2 * l + 1) * half)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = num / s
        out[l] = np.where(np.abs(s) < 1e-9, (2 * l + 1) * np.cos((2 * l + 1) * half) / np.cos(half), v)
    return out


def rosenthal_scalar(theta, p, l):
    """The degree-l scalar of the Rosenthal law; integer p admits a signed base."""
    ratio = math.sin((2 * l + 1) * theta / 2.0) / ((2 * l + 1) * math.sin(theta / 2.0))
    if ratio >= 0:
        return ratio ** p
    if abs(p - round(p)) > 1e-12:
        raise DomainError(
            f"rosenthal scalar at degree {l} has negative base {ratio:.3e}; "
            "non-integer exponents are undefined there")
    return (-1.0) ** int(round(p)) * abs(ratio) ** p


def so3_class_density(model, r):
    """f_U as a function of the rotation angle r in [0, pi] (class models)."""
    r = np.asarray(r, dtype=float)
    if model.kind == "laplace":
        lam = model.lam
        a = complex(math.sqrt(complex(0.25 - lam ** -2).real), 0) if 0.25 - lam ** -2 >= 0 \
            else 1j * math.sqrt(lam ** -2 - 0.25)
        with np.errstate(divide="ignore"):
            vals = (lam ** -2 * math.pi * np.cos(a * (math.pi - r)) /
                    (np.cos(a * math.pi) * np.sin(r / 2.0)))
        vals = np.where(r > 0, vals.real, np.inf)
        return vals
    if model.kind == "gaussian":
        lam = model.lam
        tot = np.zeros_like(r)
        l = 0
        while True:
            w = math.exp(-lam ** 2 * l * (l + 1) / 2.0)
            if (2 * l + 1) ** 2 * w < _SERIES_TOL and l > 2:
                break
            tot += (2 * l + 1) * w * _characters(l, r)[l]
            l += 1
        return tot
    if model.kind == "rosenthal":
        # character series; usable when the scalars decay fast enough (p > 3)
        tot = np.zeros_like(r)
        l = 0
        while l <= 4000:
            s = rosenthal_scalar(model.theta, model.p, l)
            if (2 * l + 1) ** 2 * abs(s) < _SERIES_TOL and l > 2:
                break
            tot += (2 * l + 1) * s * _characters(l, r)[l]
            l += 1
        else:
            raise DomainError("rosenthal density series did not converge; use the angle marginal")
        return tot
    if model.kind == "vmf":
        a = model.a_matrix()
        if not np.allclose(a, np.eye(3), atol=1e-12):
            raise DomainError("class-function form needs mean direction identity")
        lam = model.lam
        unnorm = np.exp(lam * (1.0 + 2.0 * np.cos(r)))
        rg = np.linspace(0.0, math.pi, 8192)
        mass = np.trapezoid(np.exp(lam * (1.0 + 2.0 * np.cos(rg))) * (1.0 - np.cos(rg)) / math.pi, rg)
        return unnorm / mass
    raise UnsupportedModelError(f"no class-function density for kind '{model.kind}'")


def so3_angle_marginal(model, r):
    """Rotation-angle marginal f_U(r) (1 - cos r)/pi, in a form smooth at r = 0.

    The 1/sin(r/2) singularity of the Laplace density cancels against the
    (1 - cos r) Haar factor, so the marginal itself is analytic.
    """
    r = np.asarray(r, dtype=float)
    if model.kind == "laplace":
        lam = model.lam
        a = 1j * math.sqrt(lam ** -2 - 0.25) if 0.25 - lam ** -2 < 0 \
            else math.sqrt(0.25 - lam ** -2)
        vals = 2.0 * lam ** -2 * np.sin(r / 2.0) * np.cos(a * (math.pi - r)) / np.cos(a * math.pi)
        return vals.real
    if model.kind == "gaussian":
        lam = model.lam
        tot = np.zeros_like(r)
        l = 0
        while True:
            w = math.exp(-lam ** 2 * l * (l + 1) / 2.0)
            if (2 * l + 1) * w < _SERIES_TOL and l > 2:
                break
            tot += (2 * l + 1) * w * 2.0 * np.sin((2 * l + 1) * r / 2.0) * np.sin(r / 2.0)
            l += 1
        return tot / math.pi
    if model.kind == "vmf":
        return so3_class_density(model, r) * (1.0 - np.cos(r)) / math.pi
    raise UnsupportedModelError(f"no angle marginal for kind '{model.kind}'")


def rosenthal_angle_cdf(model, r):
    """CDF of the rotation-angle marginal of the Rosenthal law on a grid.

    Integrates the character series term by term; the l-th CDF term is
    sin(l r)/l - sin((l+1) r)/(l+1), so the series converges for p > 1.
    The truncated series is exactly 1 at r = pi.
    """
    if model.p <= 1.0 and abs(model.p - 1.0) > 1e-12:
        raise UnsupportedModelError("rosenthal angle sampling needs p >= 1")
    r = np.asarray(r, dtype=float)
    if abs(model.p - 1.0) < 1e-12:
        # point mass at the defining angle
        return np.where(r >= model.theta, 1.0, 0.0)
    total = (r - np.sin(r)) / math.pi
    l = 1
    while l <= 20000:
        s = rosenthal_scalar(model.theta, model.p, l)
        bound = (2 * l + 1) * abs(s) * (1.0 / l + 1.0 / (l + 1)) / math.pi
        if bound < 1e-12 and l > 4:
            break
        total += (2 * l + 1) * s * (np.sin(l * r) / l - np.sin((l + 1) * r) / (l + 1)) / math.pi
        l += 1
    cdf = np.maximum.accumulate(np.clip(total, 0.0, 1.0))
    return cdf / cdf[-1]


def rotation_density(model, matrices):
    """f_U evaluated at a stack of rotation matrices (d = 2)."""
    matrices = np.asarray(matrices, dtype=float)
    if model.kind == "vmf":
        lam, a = model.lam, model.a_matrix()
        tr = np.einsum("ij,kij->k", np.linalg.inv(a).T, matrices)
        c = _vmf_normalizer_so3(lam, a)
        return np.exp(lam * tr) / c
    if model.kind in ("laplace", "gaussian", "rosenthal"):
        tr = np.einsum("kii->k", matrices)
        r = np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))
        return so3_class_density(model, r)
    raise UnsupportedModelError(f"no pointwise density for kind '{model.kind}'")


def _vmf_normalizer_so3(lam, a):
    """Normalizing mass of exp(lam * Tr(A^-1 u)) under Haar, by Euler quadrature."""
    quad = _euler_grid(_VMF_EULER_RESOLUTION)
    tr = np.einsum("ij,kij->k", np.linalg.inv(a).T, quad.matrices)
    return float(np.sum(quad.weights * np.exp(lam * tr)))


_EULER_GRID_CACHE = {}


def _euler_grid(resolution):
    if resolution not in _EULER_GRID_CACHE:
        _EULER_GRID_CACHE[resolution] = sphere.so3_quadrature(resolution)
    return _EULER_GRID_CACHE[resolution]


# ---------------------------------------------------------------------------
# representation matrices


def big_d_matrix(d, l, u):
    """The degree-l representation matrix D^l(u) for d in {1, 2}."""
    if d == 1:
        if l == 0:
            return np.ones((1, 1), dtype=complex)
        c, s = math.cos(l * u.angle), math.sin(l * u.angle)
        return np.array([[c, -s], [s, c]], dtype=complex)
    if d == 2:
        if l == 0:
            return np.ones((1, 1), dtype=complex)
        phi, theta, psi = u.euler if u.euler is not None else sphere.euler_from_matrix(u.matrix)
        dl = harmonics.wigner_small_d_matrix(l, theta)
        m = np.arange(-l, l + 1)
        return np.exp(-1j * m[:, None] * phi) * dl * np.exp(-1j * m[None, :] * psi)
    raise UnsupportedDimensionError("representation matrices are implemented for d in {1, 2}")


def operator_norm(m, tol=1e-10, max_iter=10000):
    """Largest singular value by power iteration on M* M."""
    m = np.asarray(m)
    k = m.shape[1]
    v = np.ones(k, dtype=complex) + 1e-3 * np.arange(k)
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(max_iter):
        w = m.conj().T @ (m @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        sigma = math.sqrt(nw)
        if abs(sigma - prev) <= tol * max(sigma, 1.0):
            return sigma
        prev = sigma
    return prev


# ---------------------------------------------------------------------------
# transform blocks


class TransformBlocks:
    """Per-degree transforms phi~^l(f_U) with cached inverses and norms."""

    def __init__(self, model, blocks):
        self.model = model
        self.dim = model.dim
        self.max_degree = len(blocks) - 1
        self.blocks = blocks
        if abs(blocks[0][0, 0] - 1.0) > 1e-10:
            raise AssertionError("degree-0 transform of a probability density must be 1")
        self.blocks[0] = np.ones((1, 1), dtype=complex)
        self.inverses = []
        self.inv_op_norms = []
        for l, blk in enumerate(self.blocks):
            nrm = operator_norm(blk)
            try:
                inv = np.linalg.inv(blk)
            except np.linalg.LinAlgError as exc:
                raise SingularBlockError(l) from exc
            inv_nrm = operator_norm(inv)
            # density transforms have norm <= 1, so the inverse norm is the
            # effective condition of the deconvolution step
            if max(nrm, 1.0) * inv_nrm > CONDITION_GUARD:
                raise SingularBlockError(
                    l, f"transform block at degree {l} has condition number "
                       f"{max(nrm, 1.0) * inv_nrm:.2e} beyond the guard {CONDITION_GUARD:.0e}")
            resid = np.max(np.abs(blk @ inv - np.eye(blk.shape[0])))
            if resid > 1e-8:
                raise SingularBlockError(l, f"inverse residual {resid:.2e} at degree {l}")
            self.inverses.append(inv)
            self.inv_op_norms.append(inv_nrm)

    def block(self, l):
        return self.blocks[l]

    def inverse(self, l):
        return self.inverses[l]


def _scalar_sequence(model, max_degree):
    d = model.dim
    if model.kind == "errorfree":
        return [1.0] * (max_degree + 1)
    if model.kind == "laplace":
        return [1.0 / (1.0 + model.lam ** 2 * l * (l + d - 1)) for l in range(max_degree + 1)]
    if model.kind == "gaussian":
        return [math.exp(-model.lam ** 2 * l * (l + d - 1) / 2.0) for l in range(max_degree + 1)]
    if model.kind == "rosenthal":
        if abs(math.sin(model.theta / 2.0)) < 1e-12:
            return [1.0] * (max_degree + 1)  # continuity limit of the printed ratio
        return [rosenthal_scalar(model.theta, model.p, l) for l in range(max_degree + 1)]
    raise UnsupportedModelError(model.kind)


_BLOCK_CACHE = {}


def transform_blocks(model, max_degree):
    """Build phi~^l(f_U) for l = 0..max_degree with inverses cached.

    Scalar laws use their closed forms; the von Mises-Fisher law is
    integrated numerically over Euler angles.  Near-singular degrees raise
    SingularBlockError naming the degree.  Results are cached per
    (model, degree), so repeated kernel construction is free.
    """
    key = (model.cache_key(), max_degree)
    if key in _BLOCK_CACHE:
        return _BLOCK_CACHE[key]
    blocks = _build_transform_blocks(model, max_degree)
    _BLOCK_CACHE[key] = blocks
    return blocks


def _build_transform_blocks(model, max_degree):
    if model.kind in ("errorfree", "laplace", "gaussian", "rosenthal"):
        scalars = _scalar_sequence(model, max_degree)
        blocks = [s * np.eye(harmonics.n_dl(model.dim, l), dtype=complex)
                  for l, s in enumerate(scalars)]
        return TransformBlocks(model, blocks)
    if model.kind == "vmf":
        if model.dim == 1:
            return TransformBlocks(model, _vmf_blocks_so2(model, max_degree))
        if model.dim == 2:
            return TransformBlocks(model, _vmf_blocks_so3(model, max_degree))
    raise UnsupportedModelError(f"no transform for kind '{model.kind}' at d={model.dim}")


def _vmf_blocks_so2(model, max_degree):
    phi = np.linspace(0.0, 2.0 * math.pi, 8192, endpoint=False)
    w = 1.0 / phi.size  # Haar weight
    dens = so2_density(model, phi)
    blocks = [np.ones((1, 1), dtype=complex)]
    for l in range(1, max_degree + 1):
        c = np.sum(w * dens * np.cos(l * phi))
        s = np.sum(w * dens * np.sin(l * phi))
        blocks.append(np.array([[c, -s], [s, c]], dtype=complex))
    return blocks


def _vmf_blocks_so3(model, max_degree, resolution=_VMF_EULER_RESOLUTION):
    """Euler-angle product quadrature of f_U(u) D^l_{qr}(u).

    The (phi, psi) integrals are plain discrete Fourier sums per theta node,
    so the full set of blocks costs O(res^3 * L) rather than O(res^3 * L^3).
    """
    lam, a = model.lam, model.a_matrix()
    nph = 2 * resolution
    phis = 2.0 * math.pi * np.arange(nph) / nph
    t, wt = np.polynomial.legendre.leggauss(resolution)
    thetas = np.arccos(t)
    rz = np.stack([sphere._rz(p) for p in phis])  # (nph,3,3)
    sy = np.stack([sphere._sy(th) for th in thetas])  # (res,3,3)
    a_inv_t = np.linalg.inv(a).T
    m = np.arange(-max_degree, max_degree + 1)
    eph = np.exp(-1j * np.outer(m, phis))  # (2L+1, nph)
    wph = 2.0 * math.pi / nph
    dcols = harmonics.wigner_small_d_matrix  # full matrices per theta below
    f_hat = np.zeros((resolution, m.size, m.size), dtype=complex)
    mass = 0.0
    for j in range(resolution):
        u = np.einsum("aij,jk,bkl->abil", rz, sy[j], rz)  # (nph,nph,3,3)
        dens = np.exp(lam * np.einsum("ij,abij->ab", a_inv_t, u))
        mass += wt[j] * wph * wph * dens.sum() / (8.0 * math.pi ** 2)
        f_hat[j] = np.einsum("qa,ab,rb->qr", eph, dens, eph) * wph * wph
    blocks = []
    dls = [dcols(l, thetas) for l in range(max_degree + 1)]  # (res, 2l+1, 2l+1) each
    for l in range(max_degree + 1):
        sel = slice(max_degree - l, max_degree + l + 1)
        blk = np.einsum("j,jqr,jqr->qr", wt, dls[l],
                        f_hat[:, sel, sel]) / (8.0 * math.pi ** 2)
        blocks.append(blk / mass)
    return blocks


# ---------------------------------------------------------------------------
# forward transform and convolution oracle


def forward_transform(f, quad, max_degree):
    """Per-degree coefficient vectors of f against the conjugate basis.

    f must be vectorized: it receives the (m, d+1) node coordinates and
    returns m values.
    """
    vals = np.asarray(f(quad.coords))
    table = harmonics.BasisTable.for_grid(quad, max_degree)
    return [table.block(l).conj().T @ (quad.weights * vals) for l in range(max_degree + 1)]


def convolve_check(gmodel, f, quad, rotquad, max_degree):
    """Max deviation between transforms of g*f and the blockwise product.

    Computes the rotational convolution by double quadrature, transforms it,
    and compares against phi~^l(g) applied to the transform of f.  Exposed as
    an operation because it is the independent oracle for the convolution
    identity.
    """
    coef_f = forward_transform(f, quad, max_degree)
    if gmodel.kind == "errorfree":
        conv_vals = np.asarray(f(quad.coords))
    else:
        dens = rotation_density(gmodel, rotquad.matrices)
        conv_vals = np.zeros(len(quad))
        chunk = 512
        for start in range(0, len(rotquad), chunk):
            mats = rotquad.matrices[start:start + chunk]
            wts = (rotquad.weights * dens)[start:start + chunk]
            # u^{-1} x for all grid nodes: rows coords @ u
            rotated = np.einsum("mc,kce->kme", quad.coords, mats)
            fv = np.asarray(f(rotated.reshape(-1, quad.coords.shape[1])))
            conv_vals += wts @ fv.reshape(mats.shape[0], len(quad))
    table = harmonics.BasisTable.for_grid(quad, max_degree)
    blocks = transform_blocks(gmodel, max_degree)
    dev = 0.0
    for l in range(max_degree + 1):
        lhs = table.block(l).conj().T @ (quad.weights * conv_vals)
        rhs = blocks.block(l) @ coef_f[l]
        dev = max(dev, float(np.max(np.abs(lhs - rhs))))
    return dev
