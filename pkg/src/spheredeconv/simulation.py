"""Monte Carlo harness: data generation, error decomposition, coverage study.

Replicates draw latent locations from a von Mises-Fisher law, contaminate
them with random rotations from the configured error model, and attach a
noisy response.  Each replicate reselects its truncation level by k-fold
cross-validation (a fixed override exists for variance-isolation runs).
Reductions run in fixed index order, so a configuration with the same seed
reproduces the report bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import estimators, harmonics, inference, sphere, transforms
from .errors import DomainError

MEAN_DIRECTION = (1.0 / math.sqrt(3.0),) * 3
X_CONCENTRATION = 0.1
NOISE_SD = 0.5


@dataclass(frozen=True)
class SimConfig:
    """One simulation scenario at one sample size."""

    model: transforms.ErrorModel
    n: int = 500
    r: int = 50
    t_grid: tuple = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    folds: int = 5
    quad_resolution: int = 24
    grid_size: int = 400
    levels: tuple = (0.9, 0.95)
    seed: int = 0
    fixed_t: Optional[int] = None
    scenario: str = ""

    def __post_init__(self):
        if self.r < 2 or self.n < 10:
            raise DomainError("need r >= 2 replicates and n >= 10 observations")


@dataclass
class SimReport:
    """Error decomposition and interval summaries of one study."""

    scenario: str
    n: int
    r: int
    isb: dict = field(default_factory=dict)  # estimator -> value
    iv: dict = field(default_factory=dict)
    imse: dict = field(default_factory=dict)
    coverage: dict = field(default_factory=dict)  # (level, method) -> value
    length: dict = field(default_factory=dict)
    failures: int = 0
    valid: bool = True
    selected_t: dict = field(default_factory=dict)  # estimator -> per-replicate list

    def text_block(self):
        lines = [f"scenario = {self.scenario}", f"n = {self.n}", f"R = {self.r}",
                 f"failures = {self.failures}", f"valid = {self.valid}"]
        for est in sorted(self.isb):
            lines += [f"ISB[{est}] = {self.isb[est]:.17g}",
                      f"IV[{est}] = {self.iv[est]:.17g}",
                      f"IMSE[{est}] = {self.imse[est]:.17g}"]
        for key in sorted(self.coverage):
            level, method = key
            lines += [f"coverage[{level:g},{method}] = {self.coverage[key]:.17g}",
                      f"length[{level:g},{method}] = {self.length[key]:.17g}"]
        return "\n".join(lines) + "\n"

    def table1_rows(self):
        return [(self.scenario, self.n, est, self.isb[est], self.iv[est], self.imse[est])
                for est in sorted(self.isb)]

    def table2_rows(self):
        return [(level, self.n, method, self.coverage[(level, method)],
                 self.length[(level, method)])
                for (level, method) in sorted(self.coverage)]


def true_regression(coords):
    """Conditional mean of the response: the sum of the three coordinates."""
    coords = np.atleast_2d(coords)
    return coords.sum(axis=1)


@dataclass
class Replicate:
    dataset: estimators.Dataset
    latent: np.ndarray  # true locations, (n, 3)


def generate_replicate(cfg, rep):
    """Draw one replicate with seeds derived from (cfg.seed, rep)."""
    if rep >= cfg.r:
        raise DomainError("replicate index beyond configured count")
    seed_x = np.random.SeedSequence(cfg.seed, spawn_key=(rep, 0))
    seed_u = np.random.SeedSequence(cfg.seed, spawn_key=(rep, 1))
    seed_eps = np.random.SeedSequence(cfg.seed, spawn_key=(rep, 2))
    mean = sphere.from_coords(np.asarray(MEAN_DIRECTION))
    xs = sphere.sample_vmf_sphere(mean, X_CONCENTRATION, cfg.n, seed_x)
    x_coords = np.vstack([p.coords for p in xs])
    us = sphere.sample_error(cfg.model, cfg.n, seed_u)
    z_coords = np.einsum("nij,nj->ni", np.stack([u.matrix for u in us]), x_coords)
    eps = np.random.default_rng(seed_eps).normal(0.0, NOISE_SD, cfg.n)
    y = true_regression(x_coords) + eps
    data = estimators.Dataset.from_points(sphere.SphereGrid.from_coords(z_coords), y)
    return Replicate(data, x_coords)


_GRID_CACHE = {}


def _study_grids(cfg, max_degree):
    key = (cfg.quad_resolution, cfg.grid_size, max_degree)
    if key not in _GRID_CACHE:
        quad = sphere.product_quadrature(2, cfg.quad_resolution)
        grid = sphere.fibonacci_grid(cfg.grid_size)
        _GRID_CACHE[key] = (quad, harmonics.BasisTable.for_grid(quad, max_degree),
                            grid, harmonics.BasisTable.for_grid(grid, max_degree))
    return _GRID_CACHE[key]


def run_study(cfg, intervals=False):
    """Run all replicates; returns the error decomposition and, optionally,
    coverage and average length of both interval constructions on the node grid."""
    lmax = max(cfg.t_grid) if cfg.fixed_t is None else cfg.fixed_t
    quad, quad_table, grid, grid_table = _study_grids(cfg, lmax)
    m_quad = true_regression(quad.coords)
    m_grid = true_regression(grid.coords)
    floor = estimators.unstable_floor(2)

    sums = {e: np.zeros(len(quad)) for e in ("deconv", "naive")}
    sqsums = {e: np.zeros(len(quad)) for e in ("deconv", "naive")}
    ises = {e: [] for e in ("deconv", "naive")}
    chosen = {e: [] for e in ("deconv", "naive")}
    cover = {(lv, m): np.zeros(len(grid)) for lv in cfg.levels for m in ("an", "el")}
    lensum = {(lv, m): np.zeros(len(grid)) for lv in cfg.levels for m in ("an", "el")}
    failures = 0
    done = 0

    for rep in range(cfg.r):
        try:
            replicate = generate_replicate(cfg, rep)
            data = replicate.dataset
            dt = estimators.data_basis_table(data, lmax)
            for est in ("deconv", "naive"):
                model = cfg.model if est == "deconv" else transforms.error_free(2)
                if cfg.fixed_t is not None:
                    t_sel = cfg.fixed_t
                else:
                    t_sel = estimators.select_T_regression(
                        data, model, cfg.t_grid, folds=cfg.folds,
                        seed=np.random.SeedSequence(cfg.seed, spawn_key=(rep, 3)).entropy % (2 ** 32))
                chosen[est].append(t_sel)
                kernel = estimators.DeconvKernel(
                    model, float(t_sel), transforms.transform_blocks(model, t_sel))
                f = estimators._eval_series(quad_table, estimators._corrected_coefficients(kernel, dt))
                num = estimators._eval_series(
                    quad_table, estimators._corrected_coefficients(kernel, dt, weights=data.y))
                den = np.where(np.abs(f) < floor, np.where(f >= 0, floor, -floor), f)
                m_hat = num / den
                sums[est] += m_hat
                sqsums[est] += m_hat ** 2
                ises[est].append(float(np.sum(quad.weights * (m_hat - m_quad) ** 2)))
                if intervals and est == "deconv":
                    re_k = estimators.re_kernel_matrix(kernel, grid_table, dt)
                    for lv in cfg.levels:
                        lo, hi, _, _ = inference.an_intervals_regression_grid(
                            re_k, data.y, lv, floor)
                        cover[(lv, "an")] += (lo <= m_grid) & (m_grid <= hi)
                        lensum[(lv, "an")] += hi - lo
                        lo, hi, _, _ = inference.el_intervals_regression_grid(
                            re_k, data.y, lv, floor)
                        cover[(lv, "el")] += (lo <= m_grid) & (m_grid <= hi)
                        lensum[(lv, "el")] += hi - lo
            done += 1
        except (DomainError, np.linalg.LinAlgError) as exc:  # pragma: no cover
            failures += 1
    report = SimReport(cfg.scenario, cfg.n, cfg.r, failures=failures,
                       valid=failures <= 0.05 * cfg.r, selected_t=chosen)
    if done == 0:
        report.valid = False
        return report
    for est in ("deconv", "naive"):
        mean_est = sums[est] / done
        isb = float(np.sum(quad.weights * (mean_est - m_quad) ** 2))
        mean_sq = sqsums[est] / done
        iv = float(np.sum(quad.weights * (mean_sq - mean_est ** 2)))
        report.isb[est] = isb
        report.iv[est] = iv
        report.imse[est] = float(np.mean(ises[est]))
    if intervals:
        for key in cover:
            report.coverage[key] = float(np.mean(cover[key] / done))
            report.length[key] = float(np.mean(lensum[key] / done))
    return report


def mc_study(cfg):
    """Error decomposition across replicates (no interval work)."""
    return run_study(cfg, intervals=False)


def coverage_study(cfg, levels=None):
    """Coverage and average length of both interval methods on the node grid."""
    if levels is not None:
        cfg = replace(cfg, levels=tuple(levels))
    return run_study(cfg, intervals=True)


# desk-scale presets ---------------------------------------------------------


def preset_config(name, seed=0, r=None):
    """Named desk-scale configurations for the three error scenarios."""
    presets = {
        "s1": transforms.laplace(0.5),
        "s2": transforms.gaussian(0.5),
        "s3": transforms.vmf_error(2.0, np.eye(3)),
    }
    key = name.split("-")[0]
    if key not in presets:
        raise DomainError(f"unknown preset '{name}'")
    t_grid = tuple(range(1, 11)) if key == "s1" else tuple(range(1, 9))
    cfgs = []
    for n in (250, 500):
        cfgs.append(SimConfig(model=presets[key], n=n, r=r or 50, t_grid=t_grid,
                              seed=seed, scenario=key.upper()))
    return cfgs
