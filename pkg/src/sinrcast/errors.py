"""Exception types shared across the package."""


class SinrcastError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SinrcastError, ValueError):
    pass


class ModelViolation(SinrcastError):
    """Input or state that breaks a physical-model assumption."""


class ContractViolation(SinrcastError):
    """A station program broke the engine contract."""


class UnsupportedParameter(InvalidArgument):
    pass


class ConstructionError(SinrcastError):
    """A lower-bound family could not be realised under the given parameters."""
