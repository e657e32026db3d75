"""Exception types raised across the package."""


class LrdhError(Exception):
    """Base class for all package-specific errors."""


class CirculantEmbeddingFailure(LrdhError):
    """Embedded circulant spectrum has negative entries beyond tolerance."""


class CholeskyFailure(LrdhError):
    """Covariance matrix is not numerically positive definite."""


class QuadratureUnstable(LrdhError):
    """Hermite coefficients changed too much when quadrature was refined."""


class RankNotFound(LrdhError):
    """No Hermite coefficient above tolerance was found up to q_max."""


class TransformOverflow(LrdhError):
    """Pointwise transform produced a non-finite value."""


class GridMismatch(LrdhError):
    """Operands are sampled on different grids."""


class CoverageError(LrdhError):
    """A sampled field or path does not span the required interval."""


class OverflowGuard(LrdhError):
    """An exponential argument exceeded the safe range for doubles."""


class EmptySample(LrdhError):
    """An empirical sample was empty."""


class NonPositiveData(LrdhError):
    """Log-log fitting requires strictly positive data."""


class TooFewSamples(LrdhError):
    """Not enough samples for the requested test."""


class ZeroMass(LrdhError):
    """A density integrated to zero."""


class DegenerateFit(LrdhError):
    """Regression input carries no usable signal."""


class ComplianceError(LrdhError):
    """Experiment refused a transform that violates its preconditions."""


class ConfigError(LrdhError):
    """Experiment configuration is invalid."""
