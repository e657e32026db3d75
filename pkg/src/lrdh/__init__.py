"""Monte Carlo toolkit for parabolic transport in long-range-correlated random potentials.

Subpackages cover random-field synthesis, Hermite transforms, fractional
Brownian motion, Young integration, Brownian paths with local time, a
Feynman-Kac solver, statistical estimators, and a config-driven experiment
runner exposed through the ``lrdh`` command line tool.
"""

__version__ = "0.1.0"

from . import bm_paths, fbm, fk_solver, hermite, randfield, stats, young
from .errors import LrdhError

__all__ = [
    "__version__",
    "LrdhError",
    "bm_paths",
    "fbm",
    "fk_solver",
    "hermite",
    "randfield",
    "stats",
    "young",
]
