"""Exception types raised by the layout pipeline."""


class PanoLayoutError(Exception):
    """Base class for all algorithmic failures in this package."""


class InvalidLayout(PanoLayoutError, ValueError):
    pass


class FrameNotFound(PanoLayoutError):
    pass


class SamplingExhausted(PanoLayoutError):
    pass


class TooFewCorners(PanoLayoutError):
    pass


class InfeasibleInit(PanoLayoutError):
    pass


class InfeasibleLayout(PanoLayoutError):
    pass


class DegenerateHeight(PanoLayoutError, ValueError):
    pass


class EmptyRegion(PanoLayoutError):
    pass


class NonRectilinear(PanoLayoutError):
    pass


class CountMismatch(PanoLayoutError, ValueError):
    """Predicted and ground-truth corner sets differ in size."""
