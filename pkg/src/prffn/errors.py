"""Exception hierarchy shared by all pipeline stages."""


class PrffnError(Exception):
    """Base class for all domain errors raised by this package."""


class DataError(PrffnError):
    """Malformed, non-finite, or dimensionally inconsistent data."""


class CalibrationError(PrffnError):
    """Singular or rank-deficient polarimeter calibration inputs."""


class RegistrationError(PrffnError):
    """Degenerate control points or a non-invertible transform."""


class ModelError(PrffnError):
    """Model input arity or structural violation."""


class TrainingError(PrffnError):
    """Training failed to produce finite parameters."""


class ConfigError(PrffnError):
    """Invalid run configuration."""


class SpecError(PrffnError):
    """Phantom generation spec produces unphysical output."""
