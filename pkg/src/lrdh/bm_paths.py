"""Driving Brownian paths, binned local time, and left-point Itô sums."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import ROLE_PATHS, substream


@dataclass(frozen=True)
class BrownianPath:
    """Euler-grid Brownian path on [0, t] with n steps, anchored at 0."""

    t: float
    n: int
    increments: np.ndarray
    positions: np.ndarray
    seed: int

    @property
    def dt(self) -> float:
        return self.t / self.n


@dataclass(frozen=True)
class LocalTimeProfile:
    """Piecewise-constant density of the occupation measure of a path.

    masses[k] is (time spent in bin k) / bin_width, so the total occupation
    mass sum(masses) * bin_width equals the time horizon by construction.
    """

    bin_edges: np.ndarray
    masses: np.ndarray

    @property
    def width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def total_mass(self) -> float:
        return float(np.sum(self.masses) * self.width)

    def value_at(self, levels: np.ndarray) -> np.ndarray:
        """Profile value at given levels; zero outside the support."""
        levels = np.asarray(levels, dtype=float)
        idx = np.floor((levels - self.bin_edges[0]) / self.width).astype(int)
        inside = (idx >= 0) & (idx < len(self.masses))
        out = np.zeros(levels.shape)
        out[inside] = self.masses[idx[inside]]
        return out


def sample_brownian(t: float, n: int, seed: int) -> BrownianPath:
    """Deterministic-per-seed Brownian path with increments ~ N(0, t/n)."""
    if not (t > 0 and math.isfinite(t)):
        raise ValueError("t must be positive and finite")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = substream(seed, ROLE_PATHS)
    increments = rng.standard_normal(n) * math.sqrt(t / n)
    positions = np.concatenate([[0.0], np.cumsum(increments)])
    return BrownianPath(t=float(t), n=int(n), increments=increments,
                        positions=positions, seed=int(seed))


def occupation_masses(values_left: np.ndarray, edges: np.ndarray,
                      dt: float) -> np.ndarray:
    """Occupation density on a fixed bin grid; exact mass for covered values."""
    counts, _ = np.histogram(values_left, bins=edges)
    width = edges[1] - edges[0]
    return counts * dt / width


def local_time(path: BrownianPath, bins: int) -> LocalTimeProfile:
    """Binned occupation density of the path over its sampled range.

    The support is the path range padded by one bin on each side; outside
    it the profile is identically zero.  Mass conservation
    sum(masses)*width == t holds by construction.
    """
    if bins < 8:
        raise ValueError("bins must be >= 8")
    pos = path.positions[:-1]  # left endpoints carry dt of occupation each
    lo = float(pos.min())
    hi = float(pos.max())
    spread = max(hi - lo, 1e-12)
    width = spread / (bins - 2)
    edges = (lo - width) + width * np.arange(bins + 1)
    masses = occupation_masses(pos, edges, path.dt)
    return LocalTimeProfile(bin_edges=edges, masses=masses)


def ito_integral(integrand: np.ndarray, path: BrownianPath) -> float:
    """Left-point martingale sum: sum_i h(B_{t_i}) * (B_{t_{i+1}} - B_{t_i})."""
    integrand = np.asarray(integrand, dtype=float)
    if len(integrand) != path.n:
        raise ValueError(
            f"integrand length {len(integrand)} != number of increments {path.n}"
        )
    return float(np.dot(integrand, path.increments))
