"""Exception types raised across the package."""


class LpudError(Exception):
    """Base class for all package errors."""


class DimensionError(LpudError, ValueError):
    """Array shapes or (P, L, Q) metadata do not agree."""


class ConfigurationError(LpudError, ValueError):
    """A parameter or configuration value is invalid."""


class InsufficientDataError(LpudError, ValueError):
    """Too few samples to estimate a statistic."""


class GeometryError(LpudError, ValueError):
    """A position lies outside the room."""


class IngestionError(LpudError, OSError):
    """An audio file could not be read or does not match the scenario."""


class NumericalError(LpudError, ArithmeticError):
    """A matrix that must be positive definite is not."""
