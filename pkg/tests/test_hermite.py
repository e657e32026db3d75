import math

import numpy as np
import pytest

from lrdh.errors import RankNotFound, TransformOverflow
from lrdh.hermite import (
    apply_transform,
    get_transform,
    hermite_coefficients,
    hermite_polynomial_values,
    hermite_rank,
)
from lrdh.randfield import FieldSample, GridSpec


def test_polynomial_recurrence_values():
    z = np.array([0.0, 1.0, -2.0])
    he = hermite_polynomial_values(z, 3)
    assert np.allclose(he[0], [1, 1, 1])
    assert np.allclose(he[1], z)
    assert np.allclose(he[2], z**2 - 1)
    assert np.allclose(he[3], z**3 - 3 * z)


def test_identity_coefficients():
    coeffs = hermite_coefficients(lambda z: z, 3)
    assert np.allclose(coeffs, [0, 1, 0, 0], atol=1e-12)


def test_cubic_coefficients():
    # E[z^4] = 3 and E[z^6] - 3 E[z^4] = 15 - 9 = 6
    coeffs = hermite_coefficients(lambda z: z**3, 3)
    assert coeffs[1] == pytest.approx(3.0, abs=1e-10)
    assert coeffs[3] == pytest.approx(6.0, abs=1e-10)
    assert abs(coeffs[0]) < 1e-12 and abs(coeffs[2]) < 1e-12


def test_exponential_coefficients_all_equal_sqrt_e():
    coeffs = hermite_coefficients(np.exp, 2)
    assert np.allclose(coeffs, math.sqrt(math.e), rtol=1e-12)


def test_coefficient_validation():
    with pytest.raises(ValueError):
        hermite_coefficients(np.exp, 0)
    with pytest.raises(ValueError):
        hermite_coefficients(np.exp, 3, quad_points=32)


def test_rank_detection():
    assert hermite_rank([0, 1, 0]) == 1
    assert hermite_rank([0.3, 0, 2, 0]) == 2
    with pytest.raises(RankNotFound):
        hermite_rank([5, 0, 0])
    with pytest.raises(ValueError):
        hermite_rank([1.0])


def test_apply_transform_pointwise():
    field = FieldSample(GridSpec(0.0, 1.0, 2), np.array([1.0, -2.0]), seed=0)
    out = apply_transform(lambda z: z**3, field)
    assert np.allclose(out.values, [1.0, -8.0])
    assert out.grid == field.grid
    same = apply_transform(get_transform("identity"), field)
    assert np.array_equal(same.values, field.values)


def test_apply_transform_overflow():
    field = FieldSample(GridSpec(0.0, 1.0, 2), np.array([0.0, 710.0]), seed=0)
    with pytest.raises(TransformOverflow):
        apply_transform(np.exp, field)


def test_parseval_against_monte_carlo():
    # sum V_q^2 / q! equals E[Phi(Z)^2]; for the cube that is E[Z^6] = 15
    transform = get_transform("cubic")
    total = sum(
        transform.coefficients[q] ** 2 / math.factorial(q)
        for q in range(len(transform.coefficients))
    )
    rng = np.random.default_rng(11)
    draws = rng.standard_normal(1_000_000) ** 3
    mc = np.mean(draws**2)
    se = np.std(draws**2, ddof=1) / 1000.0
    assert abs(total - mc) < 3.0 * se
    assert total == pytest.approx(15.0, rel=1e-8)


def test_catalog_entries_and_flags():
    assert get_transform("identity").rank == 1
    assert get_transform("identity").bounded_second_derivative
    assert not get_transform("cubic").bounded_second_derivative
    assert not get_transform("exp").bounded_second_derivative
    h2 = get_transform("poly:-1,0,1")
    assert h2.rank == 2
    assert h2.bounded_second_derivative
    assert h2.coefficients[2] == pytest.approx(2.0)
    assert not get_transform("poly:0,1,0,2").bounded_second_derivative
    zero = get_transform("zero")
    assert zero.is_zero and zero.rank is None


def test_scaled_exponential():
    tr = get_transform("exp:2")
    # V_q = lam^q e^{lam^2/2}
    assert tr.coefficients[1] / tr.coefficients[0] == pytest.approx(2.0)
    assert tr.coefficients[0] == pytest.approx(math.exp(2.0), rel=1e-10)


def test_unknown_transform_rejected():
    with pytest.raises(ValueError):
        get_transform("sigmoid")
