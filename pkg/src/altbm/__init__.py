"""Flip-flop couplings of one- and two-dimensional (alternating) Brownian motion.

Modules
-------
numerics     matrix exponentials and Euler Laplace inversion
sampling     reproducible streams and nested Poisson families
paths        phase / fluid path types and evaluation
flipflop     flip-flop coupled to a Brownian skeleton
exp_alt      exponentially alternating construction and formulas
map_alt      MAP alternating construction, covariance transform
estimation   empirical generators and Monte Carlo checks
cli          batch front-end (``altbm``)
"""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AltBMError,
    IndexBeyondHorizon,
    InvalidInput,
    InvalidMap,
    InversionDiverged,
    NoObservations,
    NumericalFailure,
    OutOfHorizon,
    RangeViolation,
    RateTooSmall,
    SingularMatrix,
)
from .exp_alt import ExpAltParams, corr_exp  # noqa: E402
from .map_alt import MapParams, corr_map, cov_laplace  # noqa: E402
from .sampling import RandomStream  # noqa: E402

__all__ = [
    "AltBMError", "InvalidInput", "NumericalFailure", "SingularMatrix", "InversionDiverged",
    "RangeViolation", "RateTooSmall", "InvalidMap", "OutOfHorizon", "IndexBeyondHorizon",
    "NoObservations", "ExpAltParams", "corr_exp", "MapParams", "corr_map", "cov_laplace",
    "RandomStream", "__version__",
]
