"""Exception hierarchy shared by the pricing, payoff and simulation modules."""


class ImpactHedgeError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ImpactHedgeError, ValueError):
    """An argument lies outside the domain of a map (e.g. outside the range of F)."""


class PathError(ImpactHedgeError, ValueError):
    """A discretised strategy path is malformed."""


class InfeasiblePayoffError(ImpactHedgeError):
    """The physical-delivery fixed point has no solution at some node."""


class ConvergenceError(ImpactHedgeError):
    """An iterative procedure did not reach its tolerance."""


class StabilityError(ImpactHedgeError):
    """A time-marching scheme violated its stability bound or produced NaN."""


class OutOfDomainError(ImpactHedgeError, ValueError):
    """A query point lies outside the computational grid."""


class GridMismatchError(ImpactHedgeError, ValueError):
    """Two solutions live on different grids."""


class IllPosedError(ImpactHedgeError, ValueError):
    """Problem data violate a well-posedness condition."""


class SingularGammaError(ImpactHedgeError):
    """The covered-option diffusion coefficient is singular at the query point."""


class HullEscapeError(ImpactHedgeError):
    """Too many simulated path-steps left the grid hull."""


class ConfigError(ImpactHedgeError, ValueError):
    """Run configuration is invalid or inconsistent."""
