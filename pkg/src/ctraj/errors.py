"""Exception types raised across the package."""


class CtrajError(Exception):
    """Base class for all package errors."""


class AngleAtBoundary(CtrajError, ValueError):
    """Rotation angle is too close to pi for an unambiguous logarithm."""


class DegenerateInterval(CtrajError, ValueError):
    """A time interval has zero or negative length."""


class OutOfSegment(CtrajError, ValueError):
    """Query time lies outside the bracketing segment."""


class OutOfRange(CtrajError, ValueError):
    """Query time lies outside the span of the estimation times."""


class OutOfDomain(CtrajError, ValueError):
    """Query time lies outside the evaluation domain of a trajectory."""


class UnsupportedOrder(CtrajError, ValueError):
    """Requested spline order is not supported."""


class SingularGramian(CtrajError, ValueError):
    """Reachability Gramian is too ill-conditioned to invert."""


class RankDeficient(CtrajError, RuntimeError):
    """Normal equations are singular (unobservable directions)."""


class MaxIterations(CtrajError, RuntimeError):
    """Solver hit its iteration limit without meeting a tolerance."""


class TagBehindCamera(CtrajError, ValueError):
    """Fiducial corners are behind the camera or outside the image."""
