"""Exponent classifier and radial solver for -Lap u + u = I_alpha[u^p] u^q with a Dirac mass at the origin."""

from .errors import (AnalysisError, ChoquardError, ConstructionError, DivergentIntegralError,
                     DivergentRieszError, FitError, KTooLargeError, ParameterError, RegionError)
from .exponents import ProblemParams, classify, predicted_decay, tau0, tau_sequence
from .grid import RadialFunction, RadialGrid, integrate, make_grid

__version__ = "0.1.0"

__all__ = [
    "AnalysisError", "ChoquardError", "ConstructionError", "DivergentIntegralError",
    "DivergentRieszError", "FitError", "KTooLargeError", "ParameterError", "RegionError",
    "ProblemParams", "classify", "predicted_decay", "tau0", "tau_sequence",
    "RadialFunction", "RadialGrid", "integrate", "make_grid",
]
