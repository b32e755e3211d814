class CidaError(Exception):
    """Base class for errors raised by this package."""


class SafetyFilterError(CidaError):
    """The barrier QP could not produce a usable safe control."""


class InfeasibleQP(SafetyFilterError):
    """The constraint polyhedron of the safety filter is empty."""


class DegenerateGradient(SafetyFilterError):
    """A violated barrier constraint has a zero gradient (query at an obstacle center)."""


class ZeroControl(SafetyFilterError):
    """The filtered velocity is zero, so it carries no heading."""


class NoCandidate(CidaError):
    """Every rollout of a CIDA step failed before it could be scored."""


class NoFeasibleCandidate(CidaError):
    """Hard constraint mode found no statistically feasible candidate."""


class FilterDegeneracy(CidaError):
    """The particle filter lost track for too many consecutive steps."""
