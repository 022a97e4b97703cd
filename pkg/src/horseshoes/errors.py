"""Exception types raised across the package."""


class HorseshoeError(Exception):
    """Base class for all package errors."""


class ConfigError(HorseshoeError, ValueError):
    pass


class InversionUnavailable(HorseshoeError):
    pass


class OrbitEscape(HorseshoeError):
    """Orbit left the declared domain of a planar system."""


class DegenerateCocycle(HorseshoeError):
    pass


class NotHyperbolic(HorseshoeError):
    pass


class ZeroExponent(HorseshoeError):
    pass


class SeriesDivergence(HorseshoeError):
    pass


class ChartTooSmall(HorseshoeError):
    pass


class NotAGraph(HorseshoeError):
    pass


class CoverFailure(HorseshoeError):
    pass


class OutOfRange(HorseshoeError, IndexError):
    pass


class SelectionFailure(HorseshoeError):
    pass


class TooFine(HorseshoeError):
    pass


class AllDropped(HorseshoeError):
    pass


class EmptyBuckets(HorseshoeError):
    pass


class EmptySelection(HorseshoeError):
    pass


class InsufficientSymbols(HorseshoeError):
    pass


class ComponentOverlap(HorseshoeError):
    pass


class StageFailure(HorseshoeError):
    pass
