"""Capture-recapture population size estimation under degree-driven catchability."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .estimators import (  # noqa: F401
    CrossCounts,
    DegreeMoments,
    EstimateReport,
    EstimatorKind,
    RecaptureObservation,
    adjusted_ht,
    adjusted_ht_scaled_invariance_check,
    degree_moments,
    lp_expectation_bounds,
    naive_lp,
)
