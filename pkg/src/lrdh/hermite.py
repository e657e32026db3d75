"""Nonlinear transforms of Gaussian fields and their Hermite expansions.

Coefficients V_q = E[Phi(Z) He_q(Z)] are computed with Gauss-Hermite
quadrature against the standard normal weight, using probabilists' Hermite
polynomials He_q from the recurrence He_{q+1}(z) = z He_q(z) - q He_{q-1}(z).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import roots_hermitenorm

from .errors import QuadratureUnstable, RankNotFound, TransformOverflow
from .randfield import FieldSample

RANK_TOL = 1e-10
STABILITY_TOL = 1e-8


def hermite_polynomial_values(z: np.ndarray, q_max: int) -> np.ndarray:
    """Matrix He_q(z_i) of shape (q_max + 1, len(z))."""
    z = np.asarray(z, dtype=float)
    out = np.empty((q_max + 1, z.size))
    out[0] = 1.0
    if q_max >= 1:
        out[1] = z
    for q in range(1, q_max):
        out[q + 1] = z * out[q] - q * out[q - 1]
    return out


def _quadrature_coefficients(phi, q_max, quad_points):
    nodes, weights = roots_hermitenorm(quad_points)
    weights = weights / np.sqrt(2.0 * np.pi)
    he = hermite_polynomial_values(nodes, q_max)
    fvals = np.asarray([phi(z) for z in nodes], dtype=float)
    return he @ (weights * fvals)


def hermite_coefficients(
    phi: Callable[[float], float], q_max: int, quad_points: int = 256
) -> np.ndarray:
    """Coefficients V_0..V_{q_max} of the expansion of ``phi``.

    Raises ``QuadratureUnstable`` when doubling the node count moves any
    coefficient by more than 1e-8.
    """
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    if quad_points < 64:
        raise ValueError("quad_points must be >= 64")
    coarse = _quadrature_coefficients(phi, q_max, quad_points)
    fine = _quadrature_coefficients(phi, q_max, 2 * quad_points)
    drift = np.max(np.abs(fine - coarse))
    if drift > STABILITY_TOL:
        raise QuadratureUnstable(
            f"coefficients moved by {drift:.3e} when quadrature was refined"
        )
    return fine


def hermite_rank(coefficients: np.ndarray) -> int:
    """Smallest q >= 1 with |V_q| above tolerance."""
    coefficients = np.asarray(coefficients, dtype=float)
    if len(coefficients) < 2:
        raise ValueError("coefficient array must have length >= 2")
    for q in range(1, len(coefficients)):
        if abs(coefficients[q]) > RANK_TOL:
            return q
    raise RankNotFound(
        f"no coefficient above {RANK_TOL} for q in 1..{len(coefficients) - 1}"
    )


def apply_transform(phi, field_sample: FieldSample) -> FieldSample:
    """Apply the transform pointwise, preserving the grid.

    ``phi`` may be a callable or a ``HermiteTransform``.
    """
    fn = phi.phi if isinstance(phi, HermiteTransform) else phi
    with np.errstate(over="ignore", invalid="ignore"):
        values = np.asarray(fn(field_sample.values), dtype=float)
    if not np.all(np.isfinite(values)):
        raise TransformOverflow("transform produced a non-finite value")
    return FieldSample(grid=field_sample.grid, values=values,
                       seed=field_sample.seed)


@dataclass(frozen=True)
class HermiteTransform:
    """A named nonlinearity with its expansion coefficients and rank.

    ``rank`` is None only for the degenerate ``zero`` entry used as a
    no-potential control in experiments.
    """

    name: str
    phi: Callable = field(compare=False)
    coefficients: np.ndarray = field(compare=False)
    rank: int | None
    bounded_second_derivative: bool

    @property
    def is_zero(self) -> bool:
        return self.rank is None

    @property
    def v1(self) -> float:
        return float(self.coefficients[1])


def _poly_callable(cs):
    cs = np.asarray(cs, dtype=float)
    return lambda z: np.polynomial.polynomial.polyval(z, cs)


def get_transform(name: str, q_max: int = 8, quad_points: int = 256) -> HermiteTransform:
    """Look up a transform from the catalog.

    Accepted names: ``identity``, ``cubic``, ``exp`` (or ``exp:LAM``),
    ``poly:c0,c1,...`` and the control entry ``zero``.
    """
    if name == "zero":
        return HermiteTransform(
            name=name,
            phi=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
            coefficients=np.zeros(q_max + 1),
            rank=None,
            bounded_second_derivative=True,
        )
    if name == "identity":
        phi = lambda z: np.asarray(z, dtype=float)
        bounded = True
    elif name == "cubic":
        phi = lambda z: np.asarray(z, dtype=float) ** 3
        bounded = False
    elif name == "exp" or name.startswith("exp:"):
        lam = float(name.split(":", 1)[1]) if ":" in name else 1.0
        phi = lambda z: np.exp(lam * np.asarray(z, dtype=float))
        bounded = False
    elif name.startswith("poly:"):
        cs = [float(c) for c in name.split(":", 1)[1].split(",")]
        phi = _poly_callable(cs)
        bounded = len(cs) <= 3  # second derivative constant up to degree 2
    else:
        raise ValueError(f"unknown transform {name!r}")
    coeffs = hermite_coefficients(phi, q_max, quad_points)
    return HermiteTransform(
        name=name,
        phi=phi,
        coefficients=coeffs,
        rank=hermite_rank(coeffs),
        bounded_second_derivative=bounded,
    )
