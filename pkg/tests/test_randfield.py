import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from lrdh.errors import CholeskyFailure, CirculantEmbeddingFailure
from lrdh.randfield import (
    CovarianceSpec,
    GridSpec,
    StationaryFieldSampler,
    covariance_value,
    sample_field,
    tail_constant_check,
    transformed_covariance,
)


def test_covariance_normalization_and_closed_forms():
    cauchy = CovarianceSpec.cauchy(0.5)
    assert covariance_value(cauchy, 0.0) == 1.0
    assert covariance_value(cauchy, 3.0) == pytest.approx((1 + 9) ** -0.25)
    fgn = CovarianceSpec.fgn_increment(0.5)
    assert covariance_value(fgn, 0.0) == pytest.approx(1.0)
    assert fgn.kappa_g == pytest.approx(0.75 * 0.5)  # H(2H-1) at H=0.75


def test_covariance_is_even():
    for spec in (CovarianceSpec.cauchy(0.3), CovarianceSpec.fgn_increment(0.7)):
        for x in (0.1, 1.0, 2.5, 17.0):
            assert covariance_value(spec, x) == pytest.approx(
                covariance_value(spec, -x), rel=1e-14
            )


def test_covariance_input_validation():
    spec = CovarianceSpec.cauchy(0.5)
    with pytest.raises(ValueError):
        covariance_value(spec, float("nan"))
    with pytest.raises(ValueError):
        covariance_value(spec, float("inf"))
    with pytest.raises(ValueError):
        CovarianceSpec(alpha=1.0)
    with pytest.raises(ValueError):
        CovarianceSpec(alpha=0.0)
    with pytest.raises(ValueError):
        CovarianceSpec(alpha=0.5, model="nope")
    with pytest.raises(ValueError):
        CovarianceSpec(alpha=0.5, model="cauchy", kappa_g=2.0)


def test_tail_constant_converges_to_kappa():
    xs = [1.0, 10.0, 100.0, 500.0]
    for spec in (CovarianceSpec.cauchy(0.5), CovarianceSpec.fgn_increment(0.5)):
        vals = tail_constant_check(spec, xs)
        assert abs(vals[-1] / spec.kappa_g - 1.0) < 0.1
    cauchy_100 = tail_constant_check(CovarianceSpec.cauchy(0.5), [100.0])[0]
    assert cauchy_100 == pytest.approx(1.0, abs=1e-4)
    fgn_100 = tail_constant_check(CovarianceSpec.fgn_increment(0.5), [100.0])[0]
    assert fgn_100 == pytest.approx(0.375, abs=1e-4)


def test_tail_constant_validation():
    spec = CovarianceSpec.cauchy(0.5)
    assert tail_constant_check(spec, []) == []
    with pytest.raises(ValueError):
        tail_constant_check(spec, [-1.0, 2.0])
    with pytest.raises(ValueError):
        tail_constant_check(spec, [2.0, 1.0])


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(0.0, 0.0, 4)
    with pytest.raises(ValueError):
        GridSpec(0.0, 1.0, 1)


def test_sample_field_deterministic_across_threads():
    spec = CovarianceSpec.cauchy(0.5)
    grid = GridSpec(0.0, 1.0, 64)
    base = sample_field(spec, grid, seed=42)
    again = sample_field(spec, grid, seed=42)
    assert np.array_equal(base.values, again.values)
    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(lambda _: sample_field(spec, grid, 42).values,
                                range(8)))
    for values in results:
        assert np.array_equal(values, base.values)


def test_sample_field_distant_points_decorrelate():
    # two points separated by a huge lag behave as independent
    spec = CovarianceSpec.cauchy(0.5)
    grid = GridSpec(0.0, 1e6, 2)
    sampler = StationaryFieldSampler(spec, grid)
    vals = sampler.sample_values_batch(list(range(10000)))
    rho = np.corrcoef(vals[:, 0], vals[:, 1])[0, 1]
    assert abs(rho) < 0.05


def test_sample_field_lag_one_covariance():
    # Cauchy alpha=0.5, step 1: R(1) = 2^-0.25
    spec = CovarianceSpec.cauchy(0.5)
    grid = GridSpec(0.0, 1.0, 64)
    sampler = StationaryFieldSampler(spec, grid)
    vals = sampler.sample_values_batch(list(range(10000)))
    per_env = np.mean(vals[:, 1:] * vals[:, :-1], axis=1)
    est = per_env.mean()
    se = per_env.std(ddof=1) / 100.0
    assert abs(est - 2.0**-0.25) < 3.0 * se


def test_sample_field_stationary_zero_mean():
    spec = CovarianceSpec.fgn_increment(0.5)
    grid = GridSpec(0.0, 1.0, 16)
    sampler = StationaryFieldSampler(spec, grid)
    vals = sampler.sample_values_batch(list(range(10000)))
    worst = np.max(np.abs(vals.mean(axis=0)))
    assert worst < 3.0 / math.sqrt(10000)


def test_sampler_methods_agree():
    spec = CovarianceSpec.cauchy(0.5)
    grid = GridSpec(0.0, 1.0, 32)
    estimates = {}
    for method in ("circulant", "cholesky"):
        sampler = StationaryFieldSampler(spec, grid, method=method)
        vals = sampler.sample_values_batch(
            [hash((method, i)) % (2**31) for i in range(10000)])
        for lag in (0, 1, 5):
            per_env = np.mean(vals[:, lag:] * vals[:, : grid.count - lag], axis=1)
            estimates[(method, lag)] = (per_env.mean(),
                                        per_env.std(ddof=1) / 100.0)
    for lag in (0, 1, 5):
        a, sa = estimates[("circulant", lag)]
        b, sb = estimates[("cholesky", lag)]
        assert abs(a - b) < 3.0 * math.hypot(sa, sb)


def test_circulant_failure_detected_and_fallback_used():
    # the long-range tail leaves small negative embedding eigenvalues at
    # every extension on this grid, so the explicit method refuses
    spec = CovarianceSpec.fgn_increment(0.5)
    grid = GridSpec(0.0, 0.125, 49)
    with pytest.raises(CirculantEmbeddingFailure):
        StationaryFieldSampler(spec, grid, method="circulant")
    auto = StationaryFieldSampler(spec, grid, method="auto")
    assert auto._chol is not None  # fell back to the dense factorization
    sample = auto.sample(7)
    assert len(sample.values) == 49


def test_cholesky_failure_on_degenerate_covariance():
    # nearly flat covariance makes the matrix numerically singular
    spec = CovarianceSpec.cauchy(0.01)
    grid = GridSpec(0.0, 1e-4, 256)
    with pytest.raises(CholeskyFailure):
        StationaryFieldSampler(spec, grid, method="cholesky")


def test_transformed_covariance_identity_collapses():
    spec = CovarianceSpec.cauchy(0.5)
    coeffs = np.array([0.0, 1.0, 0.0, 0.0])
    for x in (0.0, 0.7, 3.0, 40.0):
        assert transformed_covariance(spec, coeffs, x, 6) == pytest.approx(
            covariance_value(spec, x), rel=1e-14
        )


def test_transformed_covariance_two_term_series():
    # V1 = V2 = 1 and R = 0.5: 0.5 + (1/2) 0.25 = 0.625
    spec = CovarianceSpec.cauchy(0.5)
    x = math.sqrt(0.5**-4 - 1.0)  # R(x) = 0.5 for the Cauchy model
    assert covariance_value(spec, x) == pytest.approx(0.5, rel=1e-12)
    coeffs = np.array([0.0, 1.0, 1.0])
    assert transformed_covariance(spec, coeffs, x, 2) == pytest.approx(0.625)


def test_transformed_covariance_vanishes_with_the_field_covariance():
    spec = CovarianceSpec.cauchy(0.5)
    coeffs = np.array([0.0, 1.0, 2.0, 1.5])
    assert abs(transformed_covariance(spec, coeffs, 1e8, 6)) < 1e-3


def test_transformed_covariance_rank_one_tail():
    spec = CovarianceSpec.cauchy(0.5)
    coeffs = np.array([0.0, 1.0, 0.0])
    for x in (100.0, 1000.0):
        scaled = transformed_covariance(spec, coeffs, x, 8) * x**0.5
        assert abs(scaled / spec.kappa_g - 1.0) < 0.1


def test_transformed_covariance_validation():
    spec = CovarianceSpec.cauchy(0.5)
    with pytest.raises(ValueError):
        transformed_covariance(spec, np.array([0.0, 1.0]), 1.0, 0)
