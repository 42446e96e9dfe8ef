"""Exception hierarchy shared by all modules."""


class ChoquardError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(ChoquardError, ValueError):
    """An input lies outside its admissible domain."""


class RegionError(ChoquardError):
    """An operation was requested for a parameter point in the wrong region."""


class DivergentIntegralError(ChoquardError):
    """An integral over (0, inf) diverges because of an endpoint power law.

    ``exponent`` is the offending power and ``where`` is ``"origin"`` or ``"tail"``.
    """

    def __init__(self, message, exponent=None, where=None):
        super().__init__(message)
        self.exponent = exponent
        self.where = where


class DivergentRieszError(DivergentIntegralError):
    """The Riesz potential of the input is infinite everywhere."""


class FitError(ChoquardError):
    """A power-law fit could not be performed."""


class ConstructionError(ChoquardError):
    """The supersolution could not be constructed."""

    def __init__(self, message, worst_node=None):
        super().__init__(message)
        self.worst_node = worst_node


class KTooLargeError(ConstructionError):
    """The supersolution inequality fails at the requested Dirac mass."""


class NumericalError(ChoquardError):
    """A linear solve or quadrature failed."""


class ConsistencyError(ChoquardError):
    """An internal invariant of the discretisation was violated."""


class AnalysisError(ChoquardError):
    """A verification fit was requested on an unsuitable window."""


class SolverConfigurationError(ChoquardError):
    """The solver cannot converge even at the smallest probed Dirac mass."""
