"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inputs are structurally invalid: bad gains, malformed network, bad schema."""


class UnsupportedConfigurationError(ConfigurationError):
    """The configuration is valid but outside what an analysis supports."""


class DomainError(ValueError):
    """A value left the mathematical domain of an operation (zero voltage, ...)."""


class NumericalError(RuntimeError):
    """An algorithm could not reach its accuracy, rank, or robustness requirement."""
