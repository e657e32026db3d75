"""Feynman-Kac solver for the rescaled random-potential heat equation.

The integrated-potential functional Y along a Brownian path is computed by
three interchangeable representations on a microscale environment (direct
time quadrature, occupation-time Young integral, Itô integration by parts)
and by the Young integral against fractional Brownian motion on the limit
environment.  The per-environment solution value is the inner Monte Carlo
average of phi(x + B_t) * exp(Y).

Microscale fields are sampled in microscopic coordinates z = y / eps on a
grid with step 1/8 (eight field points per oscillation scale), spanning
[x - 6 sqrt(t), x + 6 sqrt(t)] in macroscopic units; paths leaving the span
are counted and reported rather than silently extrapolated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.special import erf

from ._rng import ROLE_ENV, ROLE_INNER, ROLE_PATHS, derive_seed, substream
from .bm_paths import BrownianPath, local_time
from .errors import CoverageError, OverflowGuard
from .fbm import FbmGridSampler, FbmPath
from .hermite import HermiteTransform, get_transform
from .randfield import (
    CovarianceSpec,
    FieldSample,
    GridSpec,
    StationaryFieldSampler,
)
from .young import SampledFunction

SPAN_FACTOR = 6.0
MICRO_SUBSTEP = 0.125  # z-grid step, i.e. y-step eps/8
EXP_GUARD = 700.0
EXIT_FLAG_FRACTION = 1e-3


def initial_condition(name: str):
    """Initial-condition catalog.

    ``one``, ``cos``, ``gauss:W`` (or ``gauss:A,W`` for amplitude A and
    width W), ``ind:A,B,D`` (indicator of [A, B] smoothed over scale D).
    """
    if name == "one":
        return lambda x: np.ones_like(np.asarray(x, dtype=float))
    if name == "cos":
        return np.cos
    if name == "gauss" or name.startswith("gauss:"):
        params = [float(p) for p in name.split(":", 1)[1].split(",")] if ":" in name else [1.0]
        if len(params) == 1:
            amp, width = 1.0, params[0]
        else:
            amp, width = params
        if width <= 0:
            raise ValueError("gaussian bump width must be positive")
        return lambda x: amp * np.exp(-np.asarray(x, dtype=float) ** 2 / (2 * width**2))
    if name.startswith("ind:"):
        a, b, delta = (float(p) for p in name.split(":", 1)[1].split(","))
        if not (b > a and delta > 0):
            raise ValueError("indicator needs b > a and smoothing > 0")
        root2 = math.sqrt(2.0)
        return lambda x: 0.5 * (
            erf((np.asarray(x, dtype=float) - a) / (root2 * delta))
            - erf((np.asarray(x, dtype=float) - b) / (root2 * delta))
        )
    raise ValueError(f"unknown initial condition {name!r}")


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one solve; kappa is the tail constant of the
    transformed covariance (V_1^2 * kappa_g) and fixes the limit amplitude."""

    alpha: float
    epsilon: float
    t: float
    x: float = 0.0
    phi: str = "gauss:1"
    n_paths: int = 1024
    n_steps: int = 1024
    bins: int = 256
    seed: int = 0
    kappa: float | None = None

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.t <= 0:
            raise ValueError("t must be positive")
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValueError("n_paths and n_steps must be >= 1")
        if self.bins < 8:
            raise ValueError("bins must be >= 8")
        if self.kappa is not None and self.kappa <= 0:
            raise ValueError("kappa must be positive")

    @property
    def hurst(self) -> float:
        return 1.0 - self.alpha / 2.0

    @property
    def beta(self) -> float:
        """Amplitude sqrt(kappa / (H (2H - 1))) of the limit noise."""
        if self.kappa is None:
            raise ValueError("kappa is unset; derive it from the model and transform")
        h = self.hurst
        return math.sqrt(self.kappa / (h * (2.0 * h - 1.0)))

    @property
    def span(self) -> float:
        return SPAN_FACTOR * math.sqrt(self.t)


def kappa_for(spec: CovarianceSpec, transform: HermiteTransform) -> float:
    """Tail constant of the transformed covariance: V_1^2 * kappa_g."""
    return transform.v1**2 * spec.kappa_g


class EnvironmentKind(Enum):
    MICROSCALE = "microscale"
    LIMIT = "limit"


@dataclass(frozen=True)
class EnvironmentRealization:
    """One frozen random environment (potential sample or limit noise)."""

    kind: EnvironmentKind
    seed: int
    epsilon: float | None = None
    field: FieldSample | None = None  # a(z) on the z-grid, y = eps * z
    fbm: FbmPath | None = None  # W^H on the shifted bin-edge grid
    covariance: CovarianceSpec | None = None
    transform_name: str | None = None


def microscale_grid(cfg: SolverConfig) -> GridSpec:
    """Microscopic z-grid covering [x - span, x + span] in macro units."""
    z_lo = (cfg.x - cfg.span) / cfg.epsilon
    z_hi = (cfg.x + cfg.span) / cfg.epsilon
    start = math.floor(z_lo / MICRO_SUBSTEP) * MICRO_SUBSTEP
    count = int(math.ceil((z_hi - start) / MICRO_SUBSTEP)) + 2
    return GridSpec(start=start, step=MICRO_SUBSTEP, count=count)


class MicroscaleEnvironmentFactory:
    """Builds microscale environments; the sampler setup is shared across
    seeds so ensembles pay the embedding/factorization cost once."""

    def __init__(self, spec: CovarianceSpec, transform: HermiteTransform,
                 cfg: SolverConfig):
        self.spec = spec
        self.transform = transform
        self.cfg = cfg
        self.grid = microscale_grid(cfg)
        self._sampler = None if transform.is_zero else StationaryFieldSampler(spec, self.grid)

    def make(self, env_seed: int) -> EnvironmentRealization:
        if self.transform.is_zero:
            values = np.zeros(self.grid.count)
        else:
            g = self._sampler.sample(env_seed)
            with np.errstate(over="ignore", invalid="ignore"):
                values = np.asarray(self.transform.phi(g.values), dtype=float)
            if not np.all(np.isfinite(values)):
                raise OverflowGuard("transform overflowed on a field sample")
            values = values - self.transform.coefficients[0]  # center: drop V_0
        field = FieldSample(grid=self.grid, values=values, seed=int(env_seed))
        return EnvironmentRealization(
            kind=EnvironmentKind.MICROSCALE,
            seed=int(env_seed),
            epsilon=self.cfg.epsilon,
            field=field,
            covariance=self.spec,
            transform_name=self.transform.name,
        )


def limit_edges(cfg: SolverConfig) -> np.ndarray:
    """Fixed local-time bin edges (path coordinates) for limit environments."""
    width = 2.0 * cfg.span / (cfg.bins - 2)
    return (-cfg.span - width) + width * np.arange(cfg.bins + 1)


class LimitEnvironmentFactory:
    """Builds limit environments: exact fBm on the shifted bin-edge grid."""

    def __init__(self, cfg: SolverConfig):
        if cfg.bins + 1 > 4096:
            raise ValueError("bins too large for the exact limit sampler")
        self.cfg = cfg
        edges = limit_edges(cfg)
        self.grid = GridSpec(start=cfg.x + edges[0],
                             step=edges[1] - edges[0],
                             count=len(edges))
        self._sampler = FbmGridSampler(cfg.hurst, self.grid.points())

    def make(self, env_seed: int) -> EnvironmentRealization:
        rng = substream(env_seed, ROLE_ENV)
        path = FbmPath(hurst=self.cfg.hurst, grid=self.grid,
                       values=self._sampler.sample_values(rng),
                       seed=int(env_seed))
        return EnvironmentRealization(
            kind=EnvironmentKind.LIMIT,
            seed=int(env_seed),
            fbm=path,
        )


def make_microscale_env(spec: CovarianceSpec, transform: HermiteTransform,
                        cfg: SolverConfig, env_seed: int) -> EnvironmentRealization:
    return MicroscaleEnvironmentFactory(spec, transform, cfg).make(env_seed)


def make_limit_env(cfg: SolverConfig, env_seed: int) -> EnvironmentRealization:
    return LimitEnvironmentFactory(cfg).make(env_seed)


def _interp_uniform(values: np.ndarray, x0: float, dx: float, q: np.ndarray,
                    strict: bool, what: str):
    """Linear interpolation on a uniform grid; clamps and counts exits."""
    pos = (q - x0) / dx
    n = len(values)
    exits = int(np.count_nonzero((pos < 0.0) | (pos > n - 1)))
    if exits and strict:
        raise CoverageError(f"{what}: {exits} evaluation points leave the grid")
    pos = np.clip(pos, 0.0, n - 1.0)
    idx = np.minimum(pos.astype(np.int64), n - 2)
    frac = pos - idx
    return values[idx] * (1.0 - frac) + values[idx + 1] * frac, exits


def w_eps(a_field: FieldSample, epsilon: float, x: float, *, alpha: float) -> float:
    """Rescaled integrated potential eps^(-alpha/2) * int_0^x a(y/eps) dy.

    For x < 0 the sign convention is W(x) = -int_x^0.  The field grid (in z
    units) must span [0, x/eps]; otherwise ``CoverageError`` is raised.
    """
    z_target = x / epsilon
    grid = a_field.grid
    lo, hi = min(0.0, z_target), max(0.0, z_target)
    if lo < grid.start - 1e-9 or hi > grid.stop + 1e-9:
        raise CoverageError("field grid does not span [0, x] in micro units")
    profile = _w_profile_z(a_field, epsilon, alpha)
    val, _ = _interp_uniform(profile, grid.start, grid.step,
                             np.array([z_target]), strict=True, what="w_eps")
    return float(val[0])


def _w_profile_z(a_field: FieldSample, epsilon: float, alpha: float) -> np.ndarray:
    """W values on the field's z-grid, anchored to 0 at z = 0 when covered."""
    grid = a_field.grid
    a = a_field.values
    cum = np.concatenate([[0.0], np.cumsum((a[1:] + a[:-1]) * 0.5 * grid.step)])
    scale = epsilon ** (1.0 - alpha / 2.0)
    w = scale * cum
    if grid.start <= 0.0 <= grid.stop:
        anchor, _ = _interp_uniform(w, grid.start, grid.step,
                                    np.array([0.0]), strict=True, what="w anchor")
        w = w - anchor[0]
    return w


def w_eps_profile(a_field: FieldSample, epsilon: float, alpha: float) -> SampledFunction:
    """W as a sampled function of the macroscopic coordinate y = eps * z."""
    grid = a_field.grid
    ygrid = GridSpec(start=grid.start * epsilon, step=grid.step * epsilon,
                     count=grid.count)
    return SampledFunction(grid=ygrid, values=_w_profile_z(a_field, epsilon, alpha))


def _require_microscale(env: EnvironmentRealization):
    if env.kind is not EnvironmentKind.MICROSCALE or env.field is None:
        raise ValueError("operation requires a microscale environment")


def y_direct(env: EnvironmentRealization, path: BrownianPath,
             cfg: SolverConfig) -> float:
    """Direct representation: eps^(-alpha/2) int_0^t a((x + B_s)/eps) ds.

    Left-point time quadrature with linear interpolation of the field on the
    microgrid.
    """
    _require_microscale(env)
    grid = env.field.grid
    q = (cfg.x + path.positions[:-1]) / cfg.epsilon
    vals, _ = _interp_uniform(env.field.values, grid.start, grid.step, q,
                              strict=True, what="y_direct")
    return float(cfg.epsilon ** (-cfg.alpha / 2.0) * np.sum(vals) * path.dt)


def y_occupation(env: EnvironmentRealization, path: BrownianPath,
                 cfg: SolverConfig) -> float:
    """Occupation representation: Young integral of the binned local time
    of x + B against the rescaled integrated potential."""
    _require_microscale(env)
    profile = local_time(path, cfg.bins)
    w = w_eps_profile(env.field, cfg.epsilon, cfg.alpha)
    w_at_edges, _ = _interp_uniform(
        w.values, w.grid.start, w.grid.step, cfg.x + profile.bin_edges,
        strict=True, what="y_occupation",
    )
    return float(np.dot(profile.masses, np.diff(w_at_edges)))


def y_ito(env: EnvironmentRealization, path: BrownianPath,
          cfg: SolverConfig) -> float:
    """Integration-by-parts representation:
    2 [Phi(x + B_t) - Phi(x)] - 2 int_0^t W(x + B_s) dB_s
    with Phi the antiderivative of W."""
    _require_microscale(env)
    w = w_eps_profile(env.field, cfg.epsilon, cfg.alpha)
    wv = w.values
    dy = w.grid.step
    phi_cum = np.concatenate([[0.0], np.cumsum((wv[1:] + wv[:-1]) * 0.5 * dy)])
    ends, _ = _interp_uniform(
        phi_cum, w.grid.start, dy,
        np.array([cfg.x + path.positions[-1], cfg.x]),
        strict=True, what="y_ito endpoints",
    )
    w_on_path, _ = _interp_uniform(
        wv, w.grid.start, dy, cfg.x + path.positions[:-1],
        strict=True, what="y_ito integrand",
    )
    stochastic = float(np.dot(w_on_path, path.increments))
    return 2.0 * float(ends[0] - ends[1]) - 2.0 * stochastic


def _require_limit(env: EnvironmentRealization):
    if env.kind is not EnvironmentKind.LIMIT or env.fbm is None:
        raise ValueError("operation requires a limit environment")


def y_limit(env: EnvironmentRealization, path: BrownianPath,
            cfg: SolverConfig) -> float:
    """Limit representation: beta * Young integral of the local time of
    x + B against fractional Brownian motion."""
    _require_limit(env)
    profile = local_time(path, cfg.bins)
    g = env.fbm.grid
    w_at_edges, _ = _interp_uniform(
        env.fbm.values, g.start, g.step, cfg.x + profile.bin_edges,
        strict=True, what="y_limit",
    )
    return float(cfg.beta * np.dot(profile.masses, np.diff(w_at_edges)))


def brownian_positions(t: float, n_steps: int, n_paths: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Common-random-number block of Brownian paths, shape (n_paths, n_steps+1)."""
    incr = rng.standard_normal((n_paths, n_steps)) * math.sqrt(t / n_steps)
    out = np.empty((n_paths, n_steps + 1))
    out[:, 0] = 0.0
    np.cumsum(incr, axis=1, out=out[:, 1:])
    return out


def y_direct_batch(env: EnvironmentRealization, cfg: SolverConfig,
                   positions: np.ndarray):
    """Vectorized direct representation for a block of paths.

    Paths leaving the field span are clamped to the boundary and counted;
    callers flag the run when more than 0.1% of evaluations exit.
    Returns (Y values, exit fraction).
    """
    _require_microscale(env)
    grid = env.field.grid
    dt = cfg.t / (positions.shape[1] - 1)
    q = (cfg.x + positions[:, :-1]).ravel() / cfg.epsilon
    vals, exits = _interp_uniform(env.field.values, grid.start, grid.step, q,
                                  strict=False, what="y_direct")
    y = cfg.epsilon ** (-cfg.alpha / 2.0) * vals.reshape(
        positions.shape[0], -1).sum(axis=1) * dt
    return y, exits / q.size


def occupancy_matrix(positions: np.ndarray, edges: np.ndarray, dt: float):
    """Occupation densities of each path on a fixed bin grid.

    Returns (masses matrix of shape (n_paths, n_bins), exit fraction); points
    outside the grid are clamped into the boundary bins and counted.
    """
    n_paths = positions.shape[0]
    width = edges[1] - edges[0]
    nbins = len(edges) - 1
    left = positions[:, :-1]
    idx = np.floor((left - edges[0]) / width).astype(np.int64)
    exits = int(np.count_nonzero((idx < 0) | (idx >= nbins)))
    np.clip(idx, 0, nbins - 1, out=idx)
    flat = (np.arange(n_paths, dtype=np.int64)[:, None] * nbins + idx).ravel()
    counts = np.bincount(flat, minlength=n_paths * nbins).reshape(n_paths, nbins)
    return counts * (dt / width), exits / left.size


def y_limit_batch(env: EnvironmentRealization, cfg: SolverConfig,
                  positions: np.ndarray):
    """Vectorized limit representation on the fixed bin-edge grid."""
    _require_limit(env)
    edges = env.fbm.grid.points() - cfg.x  # path-coordinate bin edges
    dt = cfg.t / (positions.shape[1] - 1)
    masses, exit_frac = occupancy_matrix(positions, edges, dt)
    y = cfg.beta * (masses @ np.diff(env.fbm.values))
    return y, exit_frac


@dataclass(frozen=True)
class SolutionSample:
    """Solution value at (t, x) for one environment, with inner MC error."""

    value: float
    inner_se: float
    env_seed: int


def inner_path_rng(cfg: SolverConfig, env_seed: int) -> np.random.Generator:
    """Splittable inner-path stream keyed by (solver seed, environment seed)."""
    return substream(derive_seed(cfg.seed, ROLE_INNER, env_seed), ROLE_PATHS)


def solve_u(env: EnvironmentRealization, cfg: SolverConfig) -> SolutionSample:
    """Inner Monte Carlo average of phi(x + B_t) exp(Y) for one environment.

    Y uses the direct representation on microscale environments and the
    fractional Young integral on limit environments.  Raises
    ``OverflowGuard`` when any exponential argument exceeds 700.
    """
    positions = brownian_positions(cfg.t, cfg.n_steps, cfg.n_paths,
                                   inner_path_rng(cfg, env.seed))
    if env.kind is EnvironmentKind.MICROSCALE:
        y, _ = y_direct_batch(env, cfg, positions)
    else:
        y, _ = y_limit_batch(env, cfg, positions)
    if np.max(np.abs(y)) > EXP_GUARD:
        raise OverflowGuard("exponential argument exceeded 700")
    phi = initial_condition(cfg.phi)
    samples = phi(cfg.x + positions[:, -1]) * np.exp(y)
    value = float(np.mean(samples))
    spread = float(np.std(samples, ddof=1)) if cfg.n_paths > 1 else 0.0
    return SolutionSample(value=value,
                          inner_se=spread / math.sqrt(cfg.n_paths),
                          env_seed=env.seed)


def exponential_moment_probe(
    cfg: SolverConfig,
    p: float,
    eps_list: list[float],
    *,
    spec: CovarianceSpec | None = None,
    transform: HermiteTransform | None = None,
    n_env: int = 64,
) -> list[float]:
    """Empirical E[exp(p Y)] for each epsilon over (environment x path)
    ensembles, with common paths across epsilon values.

    The bounded-moment contract (no trend toward infinity as eps decreases)
    is checked by the caller; this op only reports the sequence.
    """
    if abs(p) > 4.0:
        raise ValueError("|p| must be <= 4")
    spec = spec if spec is not None else CovarianceSpec.fgn_increment(cfg.alpha)
    transform = transform if transform is not None else get_transform("identity")
    positions = brownian_positions(cfg.t, cfg.n_steps, cfg.n_paths,
                                   substream(cfg.seed, ROLE_PATHS))
    out = []
    for i, eps in enumerate(eps_list):
        cfg_eps = replace(cfg, epsilon=float(eps))
        factory = MicroscaleEnvironmentFactory(spec, transform, cfg_eps)
        total = 0.0
        for j in range(n_env):
            env = factory.make(derive_seed(cfg.seed, ROLE_ENV, i, j))
            y, _ = y_direct_batch(env, cfg_eps, positions)
            args = p * y
            if np.max(args) > EXP_GUARD:
                raise OverflowGuard("exponential argument exceeded 700")
            total += float(np.mean(np.exp(args)))
        out.append(total / n_env)
    return out
