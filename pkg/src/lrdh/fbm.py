"""Fractional Brownian motion: covariance, exact and fast samplers, Hurst fits.

The dense Cholesky sampler is the correctness oracle; the circulant-embedding
sampler (stationary increments cumulated into a path) is the O(n log n)
workhorse and must pass the same distributional tests.

Two-sided paths (grids reaching below 0) are generated exactly by Cholesky
whenever the grid has at most 4096 points; the fast sampler instead glues two
independent one-sided paths at 0, which realizes the two-sided covariance only
approximately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._circulant import CirculantSampler
from ._rng import ROLE_FBM_NEG, ROLE_FBM_POS, substream
from .errors import CholeskyFailure, DegenerateFit
from .randfield import GridSpec

DENSE_LIMIT = 4096
_JITTER = 1e-12


@dataclass(frozen=True)
class FbmPath:
    """One fractional Brownian motion realization, anchored at W(0) = 0."""

    hurst: float
    grid: GridSpec
    values: np.ndarray
    seed: int

    def __post_init__(self):
        if len(self.values) != self.grid.count:
            raise ValueError("values length must equal grid count")


def _check_hurst(hurst: float) -> None:
    if not (0.0 < hurst < 1.0):
        raise ValueError("Hurst index must lie in (0, 1)")


def fbm_covariance(hurst: float, s: float, t: float) -> float:
    """Covariance (|s|^2H + |t|^2H - |s-t|^2H) / 2 of two-sided fBm."""
    _check_hurst(hurst)
    two_h = 2.0 * hurst
    return 0.5 * (
        abs(s) ** two_h + abs(t) ** two_h - abs(s - t) ** two_h
    )


class FbmGridSampler:
    """Exact Gaussian sampler for fBm restricted to an arbitrary point set.

    The covariance matrix over the nonzero points is factored once; a jitter
    of 1e-12 is added a single time if the factorization fails, after which
    ``CholeskyFailure`` is raised.
    """

    def __init__(self, hurst: float, points: np.ndarray):
        _check_hurst(hurst)
        self.hurst = hurst
        self.points = np.asarray(points, dtype=float)
        self._nonzero = np.abs(self.points) > 1e-14
        p = self.points[self._nonzero]
        two_h = 2.0 * hurst
        sigma = 0.5 * (
            np.abs(p[:, None]) ** two_h
            + np.abs(p[None, :]) ** two_h
            - np.abs(p[:, None] - p[None, :]) ** two_h
        )
        try:
            self._factor = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            try:
                self._factor = np.linalg.cholesky(
                    sigma + _JITTER * np.eye(len(p))
                )
            except np.linalg.LinAlgError as exc:
                raise CholeskyFailure(
                    "fBm covariance matrix is numerically indefinite"
                ) from exc

    def sample_values(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(int(self._nonzero.sum()))
        out = np.zeros(len(self.points))
        out[self._nonzero] = self._factor @ z
        return out

    def sample_values_batch(self, rngs) -> np.ndarray:
        """One realization per generator, shape (len(rngs), len(points))."""
        k = int(self._nonzero.sum())
        z = np.empty((len(rngs), k))
        for row, rng in enumerate(rngs):
            z[row] = rng.standard_normal(k)
        out = np.zeros((len(rngs), len(self.points)))
        out[:, self._nonzero] = z @ self._factor.T
        return out


def sample_fbm_cholesky(hurst: float, grid: GridSpec, seed: int) -> FbmPath:
    """Exact fBm sample via dense Cholesky factorization of the covariance.

    Guarded to grids with at most 4096 points.  Grid points at 0 are anchored
    to the exact value 0.
    """
    _check_hurst(hurst)
    if grid.count > DENSE_LIMIT:
        raise ValueError(f"dense method limited to {DENSE_LIMIT} points")
    sampler = FbmGridSampler(hurst, grid.points())
    rng = substream(seed, ROLE_FBM_POS)
    return FbmPath(hurst=hurst, grid=grid, values=sampler.sample_values(rng),
                   seed=int(seed))


def _fgn_increments(hurst: float, n: int, step: float,
                    rng: np.random.Generator) -> np.ndarray:
    """n stationary fBm increments at spacing ``step`` via circulant embedding."""
    two_h = 2.0 * hurst

    def acov(k):
        k = np.asarray(k, dtype=float)
        return 0.5 * (
            np.abs(k + 1) ** two_h + np.abs(k - 1) ** two_h - 2 * k**two_h
        )

    return step**hurst * CirculantSampler(acov, n).sample(rng)


def _one_sided_values(hurst, step, count, rng):
    """fBm at points step*0 .. step*(count-1), first value exactly 0."""
    if count == 1:
        return np.zeros(1)
    incr = _fgn_increments(hurst, count - 1, step, rng)
    return np.concatenate([[0.0], np.cumsum(incr)])


def sample_fbm_fast(hurst: float, grid: GridSpec, seed: int) -> FbmPath:
    """O(n log n) fBm sample: circulant fractional Gaussian noise, cumulated.

    The grid must align with 0 (start divisible by step).  For grids reaching
    below 0 two independent one-sided paths are glued at the origin.
    """
    _check_hurst(hurst)
    offset = -grid.start / grid.step
    if abs(offset - round(offset)) > 1e-9:
        raise ValueError("grid must align with 0 for the fast method")
    offset = int(round(offset))

    if offset <= 0:
        # grid entirely at or above 0: sample from 0 outward, keep the tail
        lead = -offset
        rng = substream(seed, ROLE_FBM_POS)
        full = _one_sided_values(hurst, grid.step, grid.count + lead, rng)
        values = full[lead:]
    else:
        pos_count = grid.count - offset  # points at 0 and above (may be <= 0)
        neg = _one_sided_values(hurst, grid.step, offset + 1,
                                substream(seed, ROLE_FBM_NEG))
        if pos_count > 1:
            pos = _one_sided_values(hurst, grid.step, pos_count,
                                    substream(seed, ROLE_FBM_POS))
            values = np.concatenate([neg[:0:-1], pos])
        else:
            values = neg[offset - np.arange(grid.count)]
    return FbmPath(hurst=hurst, grid=grid, values=values, seed=int(seed))


def estimate_hurst(path: FbmPath, max_lag: int) -> float:
    """Hurst estimate from the scaling of mean squared increments.

    Least-squares slope of log E|W(t+L) - W(t)|^2 against log L over lags
    L = step..max_lag*step, divided by 2.
    """
    if max_lag < 4:
        raise ValueError("max_lag must be >= 4")
    values = np.asarray(path.values, dtype=float)
    if len(values) < 2 * max_lag:
        raise ValueError("path must have length >= 2*max_lag")
    lags = np.arange(1, max_lag + 1)
    msq = np.array([
        np.mean((values[lag:] - values[:-lag]) ** 2) for lag in lags
    ])
    if np.any(msq <= 0.0):
        raise DegenerateFit("mean squared increments carry no signal")
    slope = np.polyfit(np.log(lags * path.grid.step), np.log(msq), 1)[0]
    return float(slope / 2.0)
