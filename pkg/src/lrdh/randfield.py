"""Stationary Gaussian fields with power-law covariance tails.

Two closed-form covariance families are provided, both with unit variance
and tail R(x) ~ kappa_g |x|^(-alpha):

* ``cauchy``:         R(x) = (1 + x^2)^(-alpha/2),   kappa_g = 1
* ``fgn-increment``:  R(x) = ((|x+1|^(2H) + |x-1|^(2H) - 2|x|^(2H)) / 2)
                      with H = 1 - alpha/2,          kappa_g = H(2H - 1)

Sampling on uniform grids uses circulant embedding with a dense Cholesky
fallback; both methods are exact in distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._circulant import CirculantSampler
from ._rng import ROLE_FIELD, substream
from .errors import CholeskyFailure, CirculantEmbeddingFailure

COVARIANCE_MODELS = ("cauchy", "fgn-increment")


@dataclass(frozen=True)
class GridSpec:
    """Uniform one-dimensional grid: points start + step*i for i < count."""

    start: float
    step: float
    count: int

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError("grid step must be positive and finite")
        if self.count < 2:
            raise ValueError("grid count must be >= 2")

    @property
    def stop(self) -> float:
        return self.start + self.step * (self.count - 1)

    def points(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)


@dataclass(frozen=True)
class CovarianceSpec:
    """Parametric stationary covariance with a power-law tail.

    ``kappa_g`` is determined by the model and filled in automatically;
    passing an inconsistent value is rejected.
    """

    alpha: float
    model: str = "cauchy"
    kappa_g: float | None = None

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie strictly inside (0, 1)")
        if self.model not in COVARIANCE_MODELS:
            raise ValueError(f"unknown covariance model {self.model!r}")
        implied = self._implied_kappa()
        if self.kappa_g is None:
            object.__setattr__(self, "kappa_g", implied)
        elif not math.isclose(self.kappa_g, implied, rel_tol=1e-12):
            raise ValueError(
                f"kappa_g={self.kappa_g} inconsistent with model "
                f"{self.model!r} (expected {implied})"
            )
        if self.kappa_g <= 0:
            raise ValueError("kappa_g must be positive")

    def _implied_kappa(self) -> float:
        if self.model == "cauchy":
            return 1.0
        h = self.hurst
        return h * (2.0 * h - 1.0)

    @property
    def hurst(self) -> float:
        return 1.0 - self.alpha / 2.0

    @classmethod
    def cauchy(cls, alpha: float) -> "CovarianceSpec":
        return cls(alpha=alpha, model="cauchy")

    @classmethod
    def fgn_increment(cls, alpha: float) -> "CovarianceSpec":
        return cls(alpha=alpha, model="fgn-increment")


@dataclass(frozen=True)
class FieldSample:
    """Values of one field realization on a uniform grid."""

    grid: GridSpec
    values: np.ndarray
    seed: int

    def __post_init__(self):
        if len(self.values) != self.grid.count:
            raise ValueError("values length must equal grid count")


def covariance_array(spec: CovarianceSpec, xs: np.ndarray) -> np.ndarray:
    """Vectorized covariance R(x) for the chosen model."""
    xs = np.asarray(xs, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise ValueError("covariance argument must be finite")
    if spec.model == "cauchy":
        return (1.0 + xs * xs) ** (-spec.alpha / 2.0)
    two_h = 2.0 * spec.hurst
    return 0.5 * (
        np.abs(xs + 1.0) ** two_h
        + np.abs(xs - 1.0) ** two_h
        - 2.0 * np.abs(xs) ** two_h
    )


def covariance_value(spec: CovarianceSpec, x: float) -> float:
    """Covariance R(x) at a single lag; even in x and equal to 1 at x = 0."""
    if not math.isfinite(x):
        raise ValueError("x must be finite")
    return float(covariance_array(spec, np.array([x]))[0])


def tail_constant_check(spec: CovarianceSpec, xs: list[float]) -> list[float]:
    """Return |x|^alpha * R(x) for each x; converges to kappa_g as x grows.

    ``xs`` must be positive and increasing.
    """
    arr = np.asarray(xs, dtype=float)
    if arr.size == 0:
        return []
    if np.any(arr <= 0):
        raise ValueError("xs must be positive")
    if np.any(np.diff(arr) <= 0):
        raise ValueError("xs must be increasing")
    vals = np.abs(arr) ** spec.alpha * covariance_array(spec, arr)
    return [float(v) for v in vals]


class StationaryFieldSampler:
    """Reusable sampler for one (spec, grid) pair.

    Prepares either the circulant embedding or a dense Cholesky factor once
    and then draws realizations per seed.  ``method`` is one of ``"auto"``
    (circulant with Cholesky fallback), ``"circulant"`` or ``"cholesky"``.
    """

    def __init__(self, spec: CovarianceSpec, grid: GridSpec, method: str = "auto"):
        if method not in ("auto", "circulant", "cholesky"):
            raise ValueError(f"unknown sampling method {method!r}")
        self.spec = spec
        self.grid = grid
        self._circ = None
        self._chol = None
        if method in ("auto", "circulant"):
            try:
                self._circ = CirculantSampler(
                    lambda k: covariance_array(spec, k * grid.step), grid.count
                )
            except CirculantEmbeddingFailure:
                if method == "circulant":
                    raise
        if self._circ is None:
            self._chol = self._cholesky_factor()

    def _cholesky_factor(self) -> np.ndarray:
        lags = np.abs(np.subtract.outer(np.arange(self.grid.count),
                                        np.arange(self.grid.count)))
        sigma = covariance_array(self.spec, lags * self.grid.step)
        try:
            return np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise CholeskyFailure(
                "covariance matrix is not numerically positive definite"
            ) from exc

    def sample(self, seed: int) -> FieldSample:
        rng = substream(seed, ROLE_FIELD)
        if self._circ is not None:
            values = self._circ.sample(rng)
        else:
            values = self._chol @ rng.standard_normal(self.grid.count)
        return FieldSample(grid=self.grid, values=values, seed=int(seed))

    def sample_values_batch(self, seeds) -> np.ndarray:
        """Realizations for many seeds at once, shape (len(seeds), count).

        Each row is drawn from that seed's own stream, so the ensemble is
        independent of batching and of worker scheduling.
        """
        if self._circ is not None:
            order = self._circ.order
            z = np.empty((len(seeds), 2, order))
            for row, seed in enumerate(seeds):
                z[row] = substream(seed, ROLE_FIELD).standard_normal((2, order))
            spectral = np.sqrt(self._circ.eigenvalues) * (z[:, 0] + 1j * z[:, 1])
            w = np.fft.fft(spectral, axis=1) / np.sqrt(order)
            return np.ascontiguousarray(w.real[:, : self.grid.count])
        z = np.empty((len(seeds), self.grid.count))
        for row, seed in enumerate(seeds):
            z[row] = substream(seed, ROLE_FIELD).standard_normal(self.grid.count)
        return z @ self._chol.T


def sample_field(
    spec: CovarianceSpec, grid: GridSpec, seed: int, method: str = "auto"
) -> FieldSample:
    """Draw one zero-mean Gaussian field realization on ``grid``.

    The draw is a pure function of (spec, grid, seed, method); repeated calls
    reproduce identical values bit for bit.
    """
    return StationaryFieldSampler(spec, grid, method).sample(seed)


def transformed_covariance(
    spec: CovarianceSpec, coeffs: np.ndarray, x: float, q_max: int
) -> float:
    """Covariance of the transformed field, truncated at chaos order q_max.

    Evaluates sum_{q=1..q_max} (V_q^2 / q!) R(x)^q from the coefficient array
    V_0..V_Q.  For |R(x)| <= 1 the truncation error is bounded by
    sum_{q>q_max} (V_q^2/q!) |R(x)|^(q_max+1).
    """
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    coeffs = np.asarray(coeffs, dtype=float)
    r = covariance_value(spec, x)
    top = min(q_max, len(coeffs) - 1)
    total = 0.0
    fact = 1.0
    for q in range(1, top + 1):
        fact *= q
        total += coeffs[q] ** 2 / fact * r**q
    return float(total)
