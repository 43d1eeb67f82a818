"""Exception types shared across the library and the CLI."""


class FlatOptError(Exception):
    """Base class for all flatopt errors."""


class ShapeMismatch(FlatOptError):
    """Array dimensions are inconsistent with each other or with the model."""


class NonPositiveVariance(FlatOptError):
    """A resolved covariance diagonal contains a nonpositive entry."""


class MissingFisherData(FlatOptError):
    """Fisher-adaptive covariance requested without per-example gradients."""


class DimensionTooLarge(FlatOptError):
    """An exact (brute-force or dense) routine was asked for too many dimensions."""


class InvalidDelta(FlatOptError):
    """Confidence parameter outside (0, 1)."""


class IntegratorFailure(FlatOptError):
    """The adaptive ODE integrator failed to reach the requested horizon."""


class ConfigError(FlatOptError):
    """Bad or unknown configuration key/value. Carries the offending key."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


class UnknownSuite(FlatOptError):
    """Verification suite name not in the registry."""


class MissingRun(FlatOptError):
    """A run directory passed to `compare` has no readable run.json."""
