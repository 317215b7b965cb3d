class NsadfError(Exception):
    """Base class for package errors."""


class ConfigError(NsadfError, ValueError):
    """Invalid configuration, schema or version mismatch."""


class NumericalError(NsadfError, RuntimeError):
    """A numerical stage failed; ``stage`` names where."""

    def __init__(self, message: str, stage: str = "unknown"):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class DegenerateSampleError(NumericalError):
    pass


class SingularDesignError(NumericalError):
    pass


class McmcError(NumericalError):
    pass
