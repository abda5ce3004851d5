"""Detection of a planted elevated-mean submatrix in Gaussian noise.

Rate calculators, the dispatching optimal test and its constituents,
adaptive scans over dyadic sparsity grids, an exact second-moment lower
bound, and a Monte Carlo harness.
"""
__version__ = "0.1.0"

from .core_model import (
    Observation,
    PlantedMean,
    ProblemShape,
    SeedSpec,
    ShapeError,
    make_planted_mean,
    sample_observation,
    sample_random_support,
)
from .detectors import DeltaStar, DetectorKind, DetectorSpec, EnumerationCapError, TestOutcome
from .gauss import TruncationConstant, nu_tau
from .rates import RateBreakdown, Regime, rate_breakdown

__all__ = [
    "__version__",
    "Observation",
    "PlantedMean",
    "ProblemShape",
    "SeedSpec",
    "ShapeError",
    "make_planted_mean",
    "sample_observation",
    "sample_random_support",
    "DeltaStar",
    "DetectorKind",
    "DetectorSpec",
    "EnumerationCapError",
    "TestOutcome",
    "TruncationConstant",
    "nu_tau",
    "RateBreakdown",
    "Regime",
    "rate_breakdown",
]
