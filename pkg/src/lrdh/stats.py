"""Statistical estimators shared by the verification experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from ._rng import ROLE_SUBSAMPLE, substream
from .errors import EmptySample, NonPositiveData, TooFewSamples, ZeroMass

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class FitResult:
    """Power-law fit y = prefactor * x^exponent from log-log least squares."""

    exponent: float
    prefactor: float
    r_squared: float
    stderr_exponent: float
    degenerate: bool = False


def wasserstein2(sample_a: np.ndarray, sample_b: np.ndarray,
                 subsample_seed: int = 0) -> float:
    """Exact empirical 1-D Wasserstein-2 distance between equal-size samples.

    Sizes are matched by deterministic seeded subsampling of the larger
    sample; the result is the L2 distance of sorted order statistics.
    """
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be nonempty")
    if a.size != b.size:
        rng = substream(subsample_seed, ROLE_SUBSAMPLE)
        if a.size > b.size:
            a = a[rng.choice(a.size, size=b.size, replace=False)]
        else:
            b = b[rng.choice(b.size, size=a.size, replace=False)]
    return float(np.sqrt(np.mean((np.sort(a) - np.sort(b)) ** 2)))


def fit_power_law(xs: np.ndarray, ys: np.ndarray) -> FitResult:
    """Least squares on (log x, log y); requires >= 3 strictly positive points.

    Two distinct points interpolate exactly and are reported with stderr 0
    and the degenerate flag set.
    """
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.size != ys.size:
        raise ValueError("xs and ys must have equal length")
    if xs.size < 2:
        raise ValueError("need at least two points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise NonPositiveData("power-law fit needs positive data")
    lx, ly = np.log(xs), np.log(ys)
    n = lx.size
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    if n == 2:
        return FitResult(exponent=float(slope), prefactor=float(np.exp(intercept)),
                         r_squared=1.0, stderr_exponent=0.0, degenerate=True)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    stderr = math.sqrt(ss_res / (n - 2) / sxx) if sxx > 0 else 0.0
    return FitResult(exponent=float(slope), prefactor=float(np.exp(intercept)),
                     r_squared=min(1.0, r2), stderr_exponent=stderr)


def normality_test(sample: np.ndarray) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic against a fitted normal.

    Mean and variance are estimated from the sample itself, so the returned
    asymptotic 5% threshold 1.36/sqrt(n) is approximate (conservative for
    plug-in parameters).
    """
    sample = np.asarray(sample, dtype=float).ravel()
    n = sample.size
    if n < 100:
        raise TooFewSamples("normality test needs n >= 100")
    z = np.sort((sample - sample.mean()) / sample.std(ddof=1))
    cdf = ndtr(z)
    grid_hi = np.arange(1, n + 1) / n
    grid_lo = np.arange(0, n) / n
    ks = float(np.max(np.maximum(np.abs(cdf - grid_hi), np.abs(cdf - grid_lo))))
    return ks, 1.36 / math.sqrt(n)


def ensemble_covariance(values_at_x: np.ndarray, values_at_y: np.ndarray) -> float:
    """Unbiased sample covariance of two equally long ensembles."""
    a = np.asarray(values_at_x, dtype=float).ravel()
    b = np.asarray(values_at_y, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError("ensembles must have equal length")
    if a.size < 2:
        raise ValueError("need at least two samples")
    return float(np.cov(a, b, ddof=1)[0, 1])


def msd(density_x: np.ndarray, density_values: np.ndarray) -> float:
    """Second moment int x^2 u dx / int u dx of a nonnegative density
    sampled on a grid, both integrals by the trapezoid rule."""
    xs = np.asarray(density_x, dtype=float).ravel()
    u = np.asarray(density_values, dtype=float).ravel()
    if xs.size != u.size:
        raise ValueError("grid and density must have equal length")
    mass = float(_trapezoid(u, xs))
    if mass <= 0.0:
        raise ZeroMass("density integrates to zero")
    return float(_trapezoid(xs**2 * u, xs) / mass)
