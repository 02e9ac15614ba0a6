"""Deconvolution kernels, density and regression estimators, truncation selection.

The kernel corrects each harmonic degree of the contaminated empirical
transform by the inverse error-transform block before projecting back.  All
estimator sums run in coefficient space: per-degree sample means over the
data, multiplied by the inverse blocks, then contracted against the basis on
the evaluation grid.  This is algebraically identical to the pointwise
double sum but costs O((n + grid) * T^d) instead of O(n * grid * T^d).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import harmonics, sphere, transforms
from .errors import DomainError

# Denominators below this fraction of the uniform density are flagged
# unstable rather than failed.
UNSTABLE_FLOOR_SCALE = 1e-6


def _as_grid(grid):
    if isinstance(grid, sphere.SphereGrid):
        return grid
    return sphere.SphereGrid.from_points(list(grid))


@dataclass
class Dataset:
    """Observed sample: contaminated locations Z_i and optional responses Y_i."""

    dim: int
    z: sphere.SphereGrid
    y: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float)
            if self.y.size != len(self.z):
                raise DomainError("response and predictor lengths differ")
        if len(self.z) < 1:
            raise DomainError("need at least one observation")

    @classmethod
    def from_points(cls, points, y=None):
        g = _as_grid(points)
        return cls(g.dim, g, None if y is None else np.asarray(y, dtype=float))

    @property
    def n(self):
        return len(self.z)


@dataclass
class DeconvKernel:
    """Truncated deconvolution kernel: error model plus inverse blocks to floor(T)."""

    model: transforms.ErrorModel
    truncation: float
    blocks: transforms.TransformBlocks

    @property
    def dim(self):
        return self.model.dim

    @property
    def max_degree(self):
        return int(math.floor(self.truncation))


def make_kernel(model, truncation):
    """Build the kernel for a truncation level; degree errors surface here."""
    if truncation < 0:
        raise DomainError("truncation must be nonnegative")
    return DeconvKernel(model, float(truncation),
                        transforms.transform_blocks(model, int(math.floor(truncation))))


def kernel_eval(kernel, x, z):
    """Pointwise kernel value: sum_l B^l(x) . (inverse block) . conj(B^l(z))."""
    total = 0.0 + 0.0j
    for l in range(kernel.max_degree + 1):
        bx = harmonics.eval_basis(kernel.dim, l, x)
        bz = harmonics.eval_basis(kernel.dim, l, z)
        total += bx @ (kernel.blocks.inverse(l) @ bz.conj())
    return complex(total)


def kernel_star_eval(d, truncation, x, xstar):
    """Error-free reproducing kernel of the truncated harmonic space."""
    total = 0.0 + 0.0j
    for l in range(int(math.floor(truncation)) + 1):
        bx = harmonics.eval_basis(d, l, x)
        bs = harmonics.eval_basis(d, l, xstar)
        total += bx @ bs.conj()
    return complex(total)


@dataclass
class EstimateGrid:
    """Estimates and optional inference columns over a fixed evaluation grid."""

    grid: sphere.SphereGrid
    f_hat: np.ndarray
    m_hat: Optional[np.ndarray] = None
    s1: Optional[np.ndarray] = None
    s2: Optional[np.ndarray] = None
    ci_low: Optional[np.ndarray] = None
    ci_high: Optional[np.ndarray] = None
    unstable: Optional[np.ndarray] = None

    @property
    def nodes(self):
        return self.grid.nodes


# ---------------------------------------------------------------------------
# coefficient-space pipeline


def data_basis_table(data, max_degree):
    return harmonics.BasisTable(data.dim, max_degree, data.z.phi, data.z.thetas)


def _corrected_coefficients(kernel, data_table, weights=None, idx=None):
    """Per-degree vectors (inverse block) @ mean_i conj(B^l(Z_i)) [* weights]."""
    coefs = []
    for l in range(kernel.max_degree + 1):
        b = data_table.block(l)
        if idx is not None:
            b = b[idx]
        if weights is None:
            a = b.conj().mean(axis=0)
        else:
            w = weights if idx is None else weights[idx]
            a = (b.conj() * w[:, None]).mean(axis=0)
        coefs.append(kernel.blocks.inverse(l) @ a)
    return coefs


def _eval_series(grid_table, coefs):
    vals = np.zeros(grid_table.block(0).shape[0])
    for l, c in enumerate(coefs):
        vals += (grid_table.block(l) @ c).real
    return vals


def re_kernel_matrix(kernel, grid_table, data_table):
    """Matrix of Re K_T(x_g, Z_i) over grid rows and data columns."""
    npts = grid_table.block(0).shape[0]
    n = data_table.block(0).shape[0]
    out = np.zeros((npts, n))
    for l in range(kernel.max_degree + 1):
        corr = grid_table.block(l) @ kernel.blocks.inverse(l)
        out += (corr @ data_table.block(l).conj().T).real
    return out


def unstable_floor(d):
    return UNSTABLE_FLOOR_SCALE / sphere.surface_area(d)


def density_estimate(data, kernel, grid):
    """Deconvolution density estimate on a grid (coefficient-space path)."""
    grid = _as_grid(grid)
    gt = harmonics.BasisTable.for_grid(grid, kernel.max_degree)
    dt = data_basis_table(data, kernel.max_degree)
    f = _eval_series(gt, _corrected_coefficients(kernel, dt))
    return EstimateGrid(grid, f_hat=f,
                        unstable=np.abs(f) < unstable_floor(kernel.dim))


def regression_estimate(data, kernel, grid):
    """Deconvolution regression estimate; unstable denominators are flagged.

    The numerator shares the kernel with the density in the denominator, so
    a constant response is reproduced exactly wherever the density estimate
    is nonzero.
    """
    if data.y is None:
        raise DomainError("regression needs responses")
    grid = _as_grid(grid)
    gt = harmonics.BasisTable.for_grid(grid, kernel.max_degree)
    dt = data_basis_table(data, kernel.max_degree)
    f = _eval_series(gt, _corrected_coefficients(kernel, dt))
    num = _eval_series(gt, _corrected_coefficients(kernel, dt, weights=data.y))
    floor = unstable_floor(kernel.dim)
    unstable = np.abs(f) < floor
    denom = np.where(unstable, np.where(f >= 0, floor, -floor), f)
    return EstimateGrid(grid, f_hat=f, m_hat=num / denom, unstable=unstable)


def naive_regression_estimate(data, truncation, grid):
    """Error-ignoring baseline: the error-free kernel applied to contaminated data."""
    kernel = make_kernel(transforms.error_free(data.dim), truncation)
    return regression_estimate(data, kernel, grid)


def naive_density_estimate(data, truncation, grid):
    kernel = make_kernel(transforms.error_free(data.dim), truncation)
    return density_estimate(data, kernel, grid)


# ---------------------------------------------------------------------------
# truncation selection


def select_T_density(data, model, t_grid, quad):
    """Least-squares cross-validation for the density truncation level.

    CV(T) = integral of f_hat^2 minus twice the mean leave-one-out density at
    the observations; both terms accumulate degree by degree so the whole
    curve costs one pass.  Ties break toward the smaller level.
    """
    t_grid = sorted(int(t) for t in t_grid)
    if not t_grid:
        raise DomainError("empty truncation grid")
    n = data.n
    lmax = t_grid[-1]
    blocks = transforms.transform_blocks(model, lmax)
    dt = data_basis_table(data, lmax)
    qt = harmonics.BasisTable.for_grid(quad, lmax)
    f_quad = np.zeros(len(quad))
    f_data = np.zeros(n)
    k_diag = np.zeros(n)
    scores = {}
    for l in range(lmax + 1):
        b = dt.block(l)
        inv = blocks.inverse(l)
        coef = inv @ b.conj().mean(axis=0)
        f_quad += (qt.block(l) @ coef).real
        f_data += (b @ coef).real
        k_diag += np.einsum("iq,qr,ir->i", b, inv, b.conj()).real
        if l in t_grid:
            term1 = float(np.sum(quad.weights * f_quad ** 2))
            if n > 1:
                loo = (n * f_data - k_diag) / (n - 1)
            else:
                loo = f_data
            scores[l] = term1 - 2.0 * float(np.mean(loo))
    best = min(t_grid, key=lambda t: (scores[t], t))
    return best


def select_T_regression(data, model, t_grid, folds=5, seed=0):
    """K-fold cross-validation for the regression truncation level.

    Prediction happens at the held-out contaminated locations, the only
    observable ones.  Fold assignment is a seeded shuffle; ties break toward
    the smaller level.
    """
    if data.y is None:
        raise DomainError("regression selection needs responses")
    t_grid = sorted(int(t) for t in t_grid)
    if not t_grid:
        raise DomainError("empty truncation grid")
    n = data.n
    if n < folds:
        raise DomainError(f"need at least {folds} observations for {folds}-fold selection")
    lmax = t_grid[-1]
    blocks = transforms.transform_blocks(model, lmax)
    dt = data_basis_table(data, lmax)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    perm = rng.permutation(n)
    bounds = np.linspace(0, n, folds + 1).astype(int)
    floor = unstable_floor(data.dim)
    sse = {t: 0.0 for t in t_grid}
    for f in range(folds):
        test = perm[bounds[f]:bounds[f + 1]]
        train = np.concatenate([perm[:bounds[f]], perm[bounds[f + 1]:]])
        y_tr = data.y[train]
        den = np.zeros(test.size)
        num = np.zeros(test.size)
        for l in range(lmax + 1):
            b_tr = dt.block(l)[train]
            b_te = dt.block(l)[test]
            inv = blocks.inverse(l)
            den += (b_te @ (inv @ b_tr.conj().mean(axis=0))).real
            num += (b_te @ (inv @ (b_tr.conj() * y_tr[:, None]).mean(axis=0))).real
            if l in sse:
                d_eff = np.where(np.abs(den) < floor,
                                 np.where(den >= 0, floor, -floor), den)
                resid = data.y[test] - num / d_eff
                sse[l] += float(resid @ resid)
    return min(t_grid, key=lambda t: (sse[t], t))
