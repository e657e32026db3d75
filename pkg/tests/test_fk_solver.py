import math

import numpy as np
import pytest

from lrdh import fk_solver as fk
from lrdh.bm_paths import sample_brownian
from lrdh.errors import CoverageError, OverflowGuard
from lrdh.hermite import get_transform
from lrdh.randfield import CovarianceSpec, FieldSample, GridSpec

CAUCHY = CovarianceSpec.cauchy(0.5)
FGN = CovarianceSpec.fgn_increment(0.5)
IDENTITY = get_transform("identity")
ZERO = get_transform("zero")


def _config(**kw):
    base = dict(alpha=0.5, epsilon=0.25, t=1.0, x=0.0, phi="cos",
                n_paths=64, n_steps=512, bins=256, seed=0,
                kappa=fk.kappa_for(CAUCHY, IDENTITY))
    base.update(kw)
    return fk.SolverConfig(**base)


def _constant_env(cfg, level):
    grid = fk.microscale_grid(cfg)
    field = FieldSample(grid, np.full(grid.count, float(level)), seed=0)
    return fk.EnvironmentRealization(
        kind=fk.EnvironmentKind.MICROSCALE, seed=0, epsilon=cfg.epsilon,
        field=field, covariance=None, transform_name="constant",
    )


def test_config_validation_and_derived_quantities():
    cfg = _config()
    assert cfg.hurst == pytest.approx(0.75)
    assert cfg.beta == pytest.approx(1.0 / math.sqrt(0.375))  # 1.63299
    fgn_cfg = _config(kappa=fk.kappa_for(FGN, IDENTITY))
    assert fgn_cfg.beta == pytest.approx(1.0)
    with pytest.raises(ValueError):
        _config(epsilon=-1.0)
    with pytest.raises(ValueError):
        _config(alpha=1.5)
    with pytest.raises(ValueError):
        _config(bins=4)
    with pytest.raises(ValueError):
        fk.SolverConfig(alpha=0.5, epsilon=0.1, t=1.0).beta  # kappa unset


def test_initial_condition_catalog():
    assert fk.initial_condition("one")(np.array([3.0]))[0] == 1.0
    assert fk.initial_condition("cos")(0.0) == pytest.approx(1.0)
    bump = fk.initial_condition("gauss:2")
    assert bump(0.0) == pytest.approx(1.0)
    assert bump(2.0) == pytest.approx(math.exp(-0.5))
    two = fk.initial_condition("gauss:3,2")
    assert two(0.0) == pytest.approx(3.0)
    ind = fk.initial_condition("ind:-1,1,0.05")
    assert ind(0.0) == pytest.approx(1.0, abs=1e-6)
    assert ind(5.0) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(ValueError):
        fk.initial_condition("step")


def test_w_eps_zero_and_constant_field():
    cfg = _config()
    env = _constant_env(cfg, 1.0)
    assert fk.w_eps(env.field, cfg.epsilon, 0.0, alpha=cfg.alpha) == 0.0
    value = fk.w_eps(env.field, 0.25, 2.0, alpha=0.5)
    assert value == pytest.approx(0.25**-0.25 * 2.0, rel=1e-9)
    # odd extension: W(-x) = -W(x) for a constant field
    neg = fk.w_eps(env.field, 0.25, -2.0, alpha=0.5)
    assert neg == pytest.approx(-value, rel=1e-9)


def test_w_eps_additivity_on_the_grid():
    cfg = _config(seed=5)
    factory = fk.MicroscaleEnvironmentFactory(CAUCHY, IDENTITY, cfg)
    env = factory.make(17)
    eps, alpha = cfg.epsilon, cfg.alpha
    w1 = fk.w_eps(env.field, eps, 0.5, alpha=alpha)
    w2 = fk.w_eps(env.field, eps, 2.0, alpha=alpha)
    grid = env.field.grid
    z1, z2 = 0.5 / eps, 2.0 / eps
    i1 = int(round((z1 - grid.start) / grid.step))
    i2 = int(round((z2 - grid.start) / grid.step))
    a = env.field.values
    segment = np.sum((a[i1 + 1: i2 + 1] + a[i1:i2]) * 0.5 * grid.step)
    assert w2 - w1 == pytest.approx(eps ** (1 - alpha / 2) * segment, rel=1e-9)


def test_w_eps_coverage_error():
    cfg = _config()
    env = _constant_env(cfg, 1.0)
    span = cfg.span + 1.0
    with pytest.raises(CoverageError):
        fk.w_eps(env.field, cfg.epsilon, span + 5.0, alpha=cfg.alpha)


def test_y_direct_constant_and_zero_fields():
    cfg = _config()
    path = sample_brownian(cfg.t, cfg.n_steps, 3)
    assert fk.y_direct(_constant_env(cfg, 0.0), path, cfg) == 0.0
    val = fk.y_direct(_constant_env(cfg, 0.7), path, cfg)
    assert val == pytest.approx(0.25**-0.25 * 0.7 * cfg.t, rel=1e-12)


def test_y_direct_conditional_variance_matches_double_sum():
    # variance over field realizations at a fixed path equals the double
    # time quadrature of the covariance of the rescaled field
    cfg = _config(epsilon=0.1, n_steps=256)
    path = sample_brownian(cfg.t, cfg.n_steps, 12)
    factory = fk.MicroscaleEnvironmentFactory(CAUCHY, IDENTITY, cfg)
    values = np.array([
        fk.y_direct(factory.make(seed), path, cfg) for seed in range(4000)
    ])
    pos = path.positions[:-1]
    from lrdh.randfield import covariance_array
    lags = (pos[:, None] - pos[None, :]) / cfg.epsilon
    oracle = (cfg.epsilon**-cfg.alpha
              * covariance_array(CAUCHY, lags).sum() * path.dt**2)
    assert abs(values.var(ddof=1) / oracle - 1.0) < 0.15


def test_y_zero_mean_over_environments():
    cfg = _config(epsilon=0.2, n_steps=512)
    path = sample_brownian(cfg.t, cfg.n_steps, 4)
    factory = fk.MicroscaleEnvironmentFactory(FGN, IDENTITY, cfg)
    vals = np.array([fk.y_direct(factory.make(s), path, cfg)
                     for s in range(2000)])
    assert abs(vals.mean()) < 3.0 * vals.std(ddof=1) / math.sqrt(2000)


def test_representations_agree_and_refine():
    cfg = _config(epsilon=0.2, n_steps=10000, seed=2,
                  kappa=fk.kappa_for(CAUCHY, IDENTITY))
    factory = fk.MicroscaleEnvironmentFactory(CAUCHY, IDENTITY, cfg)
    rel_occ, rel_ito = [], []
    rel_occ_coarse = []
    coarse = _config(epsilon=0.2, n_steps=10000, bins=64)
    for i in range(30):
        env = factory.make(100 + i)
        path = sample_brownian(cfg.t, cfg.n_steps, 200 + i)
        yd = fk.y_direct(env, path, cfg)
        denom = abs(yd) + 0.01
        rel_occ.append(abs(fk.y_occupation(env, path, cfg) - yd) / denom)
        rel_ito.append(abs(fk.y_ito(env, path, cfg) - yd) / denom)
        rel_occ_coarse.append(abs(fk.y_occupation(env, path, coarse) - yd) / denom)
    assert np.median(rel_occ) < 0.05
    assert np.median(rel_ito) < 0.05
    assert np.median(rel_occ) <= np.median(rel_occ_coarse)


def test_y_ito_constant_field_identity():
    # 2[Phi(x+B_t) - Phi(x)] - 2 int W dB collapses to eps^(-a/2) c t up to
    # the quadratic-variation discretization of the Ito sum
    cfg = _config(n_steps=10000)
    errs = []
    for seed in range(10):
        path = sample_brownian(cfg.t, cfg.n_steps, seed)
        val = fk.y_ito(_constant_env(cfg, 0.7), path, cfg)
        target = 0.25**-0.25 * 0.7 * cfg.t
        errs.append(abs(val / target - 1.0))
    assert np.median(errs) < 0.02


def test_y_limit_zero_noise_and_conditional_variance():
    cfg = _config(kappa=fk.kappa_for(FGN, IDENTITY), n_steps=2000)
    factory = fk.LimitEnvironmentFactory(cfg)
    env0 = factory.make(1)
    flat = fk.EnvironmentRealization(
        kind=fk.EnvironmentKind.LIMIT, seed=1,
        fbm=type(env0.fbm)(hurst=cfg.hurst, grid=env0.fbm.grid,
                           values=np.zeros(env0.fbm.grid.count), seed=1))
    path = sample_brownian(cfg.t, cfg.n_steps, 7)
    assert fk.y_limit(flat, path, cfg) == 0.0

    # noise sampled on a grid finer than the path-adaptive bins, so the
    # Young sum resolution is set by the local-time profile itself
    from lrdh.bm_paths import local_time
    from lrdh.fbm import FbmGridSampler, FbmPath
    from lrdh._rng import substream
    fine = GridSpec(start=-4.0, step=0.005, count=1601)
    sampler = FbmGridSampler(cfg.hurst, fine.points())
    values = []
    for seed in range(3000):
        fbm_path = FbmPath(hurst=cfg.hurst, grid=fine,
                           values=sampler.sample_values(substream(seed)),
                           seed=seed)
        env = fk.EnvironmentRealization(kind=fk.EnvironmentKind.LIMIT,
                                        seed=seed, fbm=fbm_path)
        values.append(fk.y_limit(env, path, cfg))
    values = np.asarray(values)
    pos = path.positions[:-1]
    width = local_time(path, cfg.bins).width
    dists = np.abs(pos[:, None] - pos[None, :])
    dists = np.where(dists < width, width, dists)  # bounded diagonal rule
    oracle = cfg.kappa * (dists ** (2 * cfg.hurst - 2)).sum() * path.dt**2
    assert abs(values.var(ddof=1) / oracle - 1.0) < 0.15


def test_y_limit_variance_t_scaling():
    # ensemble variance over (noise x path) scales like t^(H+1) when t
    # doubles; the Monte Carlo oracle fixes the exponent
    hurst = 0.75
    variances = []
    for i_t, t in enumerate((1.0, 2.0)):
        cfg = _config(t=t, kappa=0.375, n_steps=1024, bins=256)
        factory = fk.LimitEnvironmentFactory(cfg)
        vals = []
        for i in range(2500):
            path = sample_brownian(t, cfg.n_steps, 5000 * (i_t + 1) + i)
            vals.append(fk.y_limit(factory.make(i), path, cfg))
        variances.append(np.var(vals, ddof=1))
    ratio = variances[1] / variances[0]
    assert abs(ratio / 2 ** (hurst + 1.0) - 1.0) < 0.15


def test_solve_u_zero_potential():
    cfg = _config(phi="cos", n_paths=100_000, n_steps=64,
                  kappa=fk.kappa_for(CAUCHY, IDENTITY))
    factory = fk.MicroscaleEnvironmentFactory(CAUCHY, ZERO, cfg)
    sample = fk.solve_u(factory.make(9), cfg)
    assert abs(sample.value - math.exp(-0.5)) < 3.0 * sample.inner_se
    flat = fk.solve_u(factory.make(9),
                      fk.SolverConfig(alpha=0.5, epsilon=0.25, t=1.0, phi="one",
                                      n_paths=500, n_steps=64, bins=256,
                                      seed=0, kappa=1.0))
    assert flat.value == pytest.approx(1.0, rel=1e-14)
    assert flat.inner_se == pytest.approx(0.0, abs=1e-14)


def test_solve_u_constant_potential_closed_form():
    cfg = _config(phi="one", n_paths=128, n_steps=128)
    env = _constant_env(cfg, 0.3)
    sample = fk.solve_u(env, cfg)
    assert sample.value == pytest.approx(
        math.exp(0.25**-0.25 * 0.3 * cfg.t), rel=1e-12)


def test_solve_u_overflow_guard():
    cfg = _config(phi="one", n_paths=16, n_steps=16)
    env = _constant_env(cfg, 600.0)  # eps^(-1/4) * 600 > 700
    with pytest.raises(OverflowGuard):
        fk.solve_u(env, cfg)


def test_solve_u_deterministic():
    cfg = _config(n_paths=256, n_steps=128, seed=11,
                  kappa=fk.kappa_for(FGN, IDENTITY))
    factory = fk.MicroscaleEnvironmentFactory(FGN, IDENTITY, cfg)
    env = factory.make(21)
    a = fk.solve_u(env, cfg)
    b = fk.solve_u(env, cfg)
    assert a.value == b.value and a.inner_se == b.inner_se


def test_exponential_moment_probe_trivial_cases():
    cfg = _config(phi="one", n_paths=32, n_steps=128)
    ones = fk.exponential_moment_probe(cfg, 0.0, [0.4, 0.2], n_env=4)
    assert ones == pytest.approx([1.0, 1.0])
    zeros = fk.exponential_moment_probe(cfg, 2.0, [0.4, 0.2],
                                        transform=ZERO, n_env=4)
    assert zeros == pytest.approx([1.0, 1.0])
    with pytest.raises(ValueError):
        fk.exponential_moment_probe(cfg, 5.0, [0.4])


def test_total_variance_matches_kernel_constant():
    # Var(Y) over (environment x path) approaches kappa * c_H at t = 1
    from lrdh.experiments import kernel_constant
    cfg = _config(epsilon=0.1, n_paths=1, n_steps=512,
                  kappa=fk.kappa_for(FGN, IDENTITY))
    factory = fk.MicroscaleEnvironmentFactory(FGN, IDENTITY, cfg)
    vals = []
    for i in range(4000):
        env = factory.make(i)
        path = sample_brownian(cfg.t, cfg.n_steps, 10_000 + i)
        vals.append(fk.y_direct(env, path, cfg))
    target = cfg.kappa * kernel_constant(cfg.hurst)
    assert abs(np.var(vals, ddof=1) / target - 1.0) < 0.15


def test_microscale_coverage_strictness():
    cfg = _config()
    grid = GridSpec(start=-1.0, step=0.125, count=17)  # far too short
    env = fk.EnvironmentRealization(
        kind=fk.EnvironmentKind.MICROSCALE, seed=0, epsilon=cfg.epsilon,
        field=FieldSample(grid, np.zeros(17), seed=0))
    path = sample_brownian(cfg.t, cfg.n_steps, 1)
    with pytest.raises(CoverageError):
        fk.y_direct(env, path, cfg)
