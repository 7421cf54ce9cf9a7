"""Exception hierarchy shared by all clqg modules."""

from __future__ import annotations


class ClqgError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(ClqgError):
    pass


# gauge
class InvalidGauge(ClqgError):
    pass


class GaugeNotValidated(ClqgError):
    pass


class TailNotConvergent(ClqgError):
    pass


class DomainError(ClqgError, ValueError):
    pass


# lattice
class EmptyDomain(ClqgError):
    pass


class RootTooClose(ClqgError):
    pass


# gff
class CapExceeded(ClqgError):
    pass


class NotRectangle(ClqgError):
    pass


# chaos / concentric
class DegenerateMeasure(ClqgError):
    pass


class IndexRange(ClqgError, IndexError):
    pass


class EmptyAnnulus(ClqgError):
    pass


class SolverFailure(ClqgError):
    pass


# bessel
class RejectionBudgetExhausted(ClqgError):
    def __init__(self, message: str, acceptance: float, proposals: int, accepted: int):
        super().__init__(message)
        self.acceptance = acceptance
        self.proposals = proposals
        self.accepted = accepted


# hausdorff
class EmptyGrid(ClqgError):
    pass
