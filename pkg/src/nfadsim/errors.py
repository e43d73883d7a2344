"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A physical parameter is outside its validity domain."""


class ConfigError(ValueError):
    """Config file is malformed, has unknown keys, or fails validation."""


class EstimatorDomainError(ValueError):
    """Estimator input leaves the mathematical domain of the formula."""


class ExtrapolationError(ValueError):
    """Requested point lies outside the calibrated interpolation range."""


class OpenSupportError(ValueError):
    """A histogram never crosses the requested level on one side."""


class NoSignalError(RuntimeError):
    """An estimate was requested from data containing no signal events."""


class ProtocolStarvationError(RuntimeError):
    """The quiet window was never satisfied within the configured timeout."""
