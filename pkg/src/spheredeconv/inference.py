"""Pointwise confidence intervals for the density and regression estimates.

Two constructions: symmetric intervals from the estimated asymptotic
variance, and empirical-likelihood intervals obtained by profiling the
log likelihood ratio over the target value and inverting the chi-square
threshold.  Bias is estimated as zero in both.  The EL machinery reduces to
a one-dimensional Lagrange multiplier equation per candidate value, solved
by safeguarded Newton iteration inside the feasibility bracket.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import chdtri, ndtri

from . import estimators, harmonics
from .errors import DomainError

_EL_ENDPOINT_TOL = 1e-8
_MAX_EXPAND = 200


def normal_quantile(p):
    """Upper-p standard normal quantile, z_p."""
    return float(ndtri(1.0 - p))


def chi2_quantile(level):
    """(level)-quantile of chi-square with one degree of freedom."""
    return float(chdtri(1, 1.0 - level))


@dataclass
class ConfidenceInterval:
    """A pointwise interval; EL intervals need not be symmetric about the center."""

    center: float
    low: float
    high: float
    level: float
    method: str  # 'an' | 'el'
    degenerate: bool = False
    warning: Optional[str] = None


@dataclass
class ELProfile:
    """Scanned empirical log likelihood ratio over candidate values."""

    thetas: np.ndarray
    log_ratio: np.ndarray
    multipliers: np.ndarray


def _scenario_warning(model):
    s = model.smoothness
    if s.scenario != "S1":
        return (f"{s.scenario} error model: interval calibration is only "
                "established for the ordinary-smooth scenario")
    return None


# ---------------------------------------------------------------------------
# empirical likelihood core


def el_log_ratio(f_values, lam0=0.0):
    """Maximized log empirical likelihood ratio and its multiplier.

    Returns (-inf, nan) when zero is outside the open convex hull of the
    values (the maximum over an empty set is zero).  Otherwise solves
    sum F_i / (1 + lam F_i) = 0 inside the bracket where every weight stays
    in (0, 1); the equation is strictly decreasing there.
    """
    f = np.asarray(f_values, dtype=float)
    n = f.size
    if n < 2:
        raise DomainError("empirical likelihood needs at least two values")
    fmax, fmin = f.max(), f.min()
    if fmax == 0.0 and fmin == 0.0:
        return 0.0, 0.0
    if fmin >= 0.0 or fmax <= 0.0:
        return -math.inf, math.nan
    lo = (1.0 / n - 1.0) / fmax
    hi = (1.0 / n - 1.0) / fmin
    lam = lam0 if lo < lam0 < hi else 0.0
    for _ in range(200):
        t = 1.0 + lam * f
        g = float(np.sum(f / t))
        if abs(g) < 1e-10 * n:
            break
        if g > 0.0:
            lo = lam
        else:
            hi = lam
        dg = -float(np.sum((f / t) ** 2))
        step = lam - g / dg
        lam = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-16 * (abs(lo) + abs(hi) + 1.0):
            break
    return -float(np.sum(np.log1p(lam * f))), lam


def el_neg2log(f_values, lam0=0.0):
    logr, lam = el_log_ratio(f_values, lam0)
    return (math.inf if math.isinf(logr) else -2.0 * logr), lam


def el_profile(a, b, thetas):
    """Profile of the log EL ratio for estimating functions F = a - theta * b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    logs = np.empty(len(thetas))
    lams = np.empty(len(thetas))
    lam = 0.0
    for i, th in enumerate(np.asarray(thetas, dtype=float)):
        logr, lam_i = el_log_ratio(a - th * b, lam if math.isfinite(lam) else 0.0)
        logs[i] = logr
        lams[i] = lam_i
        lam = lam_i if math.isfinite(lam_i) else 0.0
    return ELProfile(np.asarray(thetas, dtype=float), logs, lams)


def _el_interval_affine(a, b, level, theta_hat, scale, hard_cap=None):
    """Invert the EL profile for F(theta) = a - theta * b around theta_hat.

    Expands geometrically in steps of `scale` until the -2 log ratio crosses
    the chi-square threshold or feasibility is lost, then bisects the
    endpoint to absolute tolerance.  The profile is quasi-convex, so the
    crossing on each side is unique.  Boundary hits flag the interval
    degenerate with the feasibility edge (or the hard cap) as the endpoint.

    As theta -> +-inf the profile tends to the log ratio of testing a zero
    mean for b itself; when that plateau stays below the threshold the
    interval is genuinely unbounded (no evidence of mass at the point), and
    the endpoints are capped and flagged.
    """
    crit = chi2_quantile(level)
    step0 = scale if scale > 0.0 else _EL_ENDPOINT_TOL
    v0, lam = el_neg2log(a - theta_hat * b)
    if not math.isfinite(v0) or v0 > crit:
        return ConfidenceInterval(theta_hat, theta_hat, theta_hat, level, "el", degenerate=True)
    if hard_cap is not None:
        plateau, _ = el_neg2log(np.asarray(b, dtype=float))
        if plateau <= crit * (1.0 + 1e-9) + 1e-9:
            return ConfidenceInterval(theta_hat, theta_hat - hard_cap,
                                      theta_hat + hard_cap, level, "el", degenerate=True)
    ends = []
    degenerate = False
    for side in (-1.0, 1.0):
        inner, outer = theta_hat, None
        lam_w = lam
        step = step0
        for _ in range(_MAX_EXPAND):
            cand = inner + side * step
            if hard_cap is not None and abs(cand - theta_hat) > hard_cap:
                break
            v, lam_c = el_neg2log(a - cand * b, lam_w)
            if v > crit:
                outer = cand
                break
            inner, lam_w = cand, lam_c
            step *= 2.0
        if outer is None:
            ends.append(theta_hat + side * hard_cap if hard_cap is not None else inner)
            degenerate = True
            continue
        lo, hi = sorted((inner, outer))
        while hi - lo > _EL_ENDPOINT_TOL:
            mid = 0.5 * (lo + hi)
            v, lam_m = el_neg2log(a - mid * b, lam_w)
            if (v > crit) == (side > 0):
                hi = mid
            else:
                lo, lam_w = mid, lam_m
        ends.append(0.5 * (lo + hi))
    low, high = min(ends), max(ends)
    return ConfidenceInterval(theta_hat, low, high, level, "el", degenerate=degenerate)


# ---------------------------------------------------------------------------
# kernel plumbing shared by the pointwise interval constructors


def _point_kernel_row(data, kernel, x):
    gt = harmonics.BasisTable(kernel.dim, kernel.max_degree,
                              np.array([x.phi]), np.array([x.thetas]).reshape(1, kernel.dim - 1))
    dt = estimators.data_basis_table(data, kernel.max_degree)
    return estimators.re_kernel_matrix(kernel, gt, dt)[0]


def an_interval_density(data, kernel, x, level=0.95):
    """Normal-theory interval for the density at x.

    The variance estimate is the sample variance of the real kernel values;
    a negative rounding result clamps to zero and flags the interval.
    """
    if data.n < 2:
        raise DomainError("need n >= 2 for interval estimation")
    k = _point_kernel_row(data, kernel, x)
    return _an_from_values(k, level, _scenario_warning(kernel.model))


def _an_from_values(k, level, warning):
    n = k.size
    center = float(k.mean())
    s2 = float(np.mean(k ** 2) - center ** 2)
    degenerate = s2 <= 0.0
    s = math.sqrt(max(s2, 0.0))
    z = normal_quantile((1.0 - level) / 2.0)
    hw = z * s / math.sqrt(n)
    return ConfidenceInterval(center, center - hw, center + hw, level, "an",
                              degenerate=degenerate, warning=warning)


def an_interval_regression(data, kernel, x, level=0.95):
    """Normal-theory interval for the regression function at x.

    Uses the simplified variance form, valid because the kernel-weighted
    residuals sum to zero by construction of the estimate; that identity is
    checked before use.  An unstable density denominator flags the result.
    """
    if data.y is None:
        raise DomainError("regression interval needs responses")
    if data.n < 2:
        raise DomainError("need n >= 2 for interval estimation")
    k = _point_kernel_row(data, kernel, x)
    n = k.size
    f_hat = float(k.mean())
    floor = estimators.unstable_floor(kernel.dim)
    unstable = abs(f_hat) < floor
    denom = math.copysign(max(abs(f_hat), floor), f_hat if f_hat != 0 else 1.0)
    m_hat = float(k @ data.y) / n / denom
    resid = k * (data.y - m_hat)
    if not unstable:
        if abs(resid.sum()) > 1e-9 * n * max(1.0, np.abs(resid).max()):
            raise AssertionError("kernel-weighted residuals failed to cancel")
    s2 = float(np.mean(resid ** 2)) / denom ** 2
    z = normal_quantile((1.0 - level) / 2.0)
    hw = z * math.sqrt(max(s2, 0.0)) / math.sqrt(n)
    return ConfidenceInterval(m_hat, m_hat - hw, m_hat + hw, level, "an",
                              degenerate=unstable or s2 <= 0.0,
                              warning=_scenario_warning(kernel.model))


def el_interval_density(data, kernel, x, level=0.95):
    """Empirical-likelihood interval for the density at x."""
    if data.n < 2:
        raise DomainError("need n >= 2 for interval estimation")
    k = _point_kernel_row(data, kernel, x)
    n = k.size
    theta_hat = float(k.mean())
    scale = math.sqrt(max(float(np.mean(k ** 2)) - theta_hat ** 2, 0.0) / n)
    ci = _el_interval_affine(k, np.ones(n), level, theta_hat, scale)
    ci.warning = _scenario_warning(kernel.model)
    return ci


def el_interval_regression(data, kernel, x, level=0.95):
    """Empirical-likelihood interval for the regression function at x."""
    if data.y is None:
        raise DomainError("regression interval needs responses")
    if data.n < 2:
        raise DomainError("need n >= 2 for interval estimation")
    k = _point_kernel_row(data, kernel, x)
    return _el_regression_from_values(k, data.y, level,
                                      estimators.unstable_floor(kernel.dim),
                                      _scenario_warning(kernel.model))


def _el_regression_from_values(k, y, level, floor, warning=None):
    n = k.size
    f_hat = float(k.mean())
    denom = math.copysign(max(abs(f_hat), floor), f_hat if f_hat != 0 else 1.0)
    m_hat = float(k @ y) / n / denom
    resid = k * (y - m_hat)
    scale = math.sqrt(float(np.mean(resid ** 2))) / abs(denom) / math.sqrt(n)
    cap = abs(m_hat) + 20.0 * (1.0 + float(np.ptp(y)))
    ci = _el_interval_affine(k * y, k, level, m_hat, scale, hard_cap=cap)
    ci.warning = warning
    return ci


# vectorized builders used by the simulation harness -------------------------


def an_intervals_regression_grid(re_k, y, level, floor):
    """AN intervals for the regression at every grid row of re_k (g, n)."""
    n = re_k.shape[1]
    f_hat = re_k.mean(axis=1)
    denom = np.where(np.abs(f_hat) < floor, np.where(f_hat >= 0, floor, -floor), f_hat)
    m_hat = (re_k @ y) / n / denom
    resid = re_k * (y[None, :] - m_hat[:, None])
    s2 = np.mean(resid ** 2, axis=1) / denom ** 2
    z = normal_quantile((1.0 - level) / 2.0)
    hw = z * np.sqrt(np.maximum(s2, 0.0) / n)
    return m_hat - hw, m_hat + hw, m_hat, np.sqrt(np.maximum(s2, 0.0))


def el_intervals_regression_grid(re_k, y, level, floor):
    """EL intervals for the regression at every grid row of re_k (g, n)."""
    g, n = re_k.shape
    lows = np.empty(g)
    highs = np.empty(g)
    degen = np.zeros(g, dtype=bool)
    f_hat = re_k.mean(axis=1)
    denom = np.where(np.abs(f_hat) < floor, np.where(f_hat >= 0, floor, -floor), f_hat)
    m_hat = (re_k @ y) / n / denom
    resid = re_k * (y[None, :] - m_hat[:, None])
    scale = np.sqrt(np.mean(resid ** 2, axis=1)) / np.abs(denom) / math.sqrt(n)
    cap = 20.0 * (1.0 + float(np.ptp(y)))
    for i in range(g):
        ci = _el_interval_affine(re_k[i] * y, re_k[i], level, float(m_hat[i]),
                                 float(scale[i]), hard_cap=abs(float(m_hat[i])) + cap)
        lows[i], highs[i], degen[i] = ci.low, ci.high, ci.degenerate
    return lows, highs, m_hat, degen
