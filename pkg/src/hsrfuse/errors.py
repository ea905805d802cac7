"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: unknown keys, bad values, missing input files."""


class FileFormatError(ConfigError):
    """Malformed tensor or matrix file."""


class DimensionError(ValueError):
    """Shapes of tensors and operators do not conform."""


class NumericalError(RuntimeError):
    """A numerical contract was violated (non-finite objective, failed factorization).

    When raised from inside a solver loop, ``trace`` and ``elapsed`` hold the
    partial objective trace accumulated up to the failure.
    """

    def __init__(self, message, trace=None, elapsed=None):
        super().__init__(message)
        self.trace = trace
        self.elapsed = elapsed
