"""Exception hierarchy.

Each top-level class maps to a CLI exit code (see ``EXIT_CODES``).
"""


class PanobenchError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(PanobenchError):
    exit_code = 2


class DataError(PanobenchError):
    """Malformed or missing input data (manifests, images, JSON documents)."""

    exit_code = 3


class NumericalError(PanobenchError):
    exit_code = 4


class ContractError(ValueError):
    """A caller violated a function precondition (shape, length, emptiness)."""


class DomainError(ValueError):
    """A numeric argument lies outside the domain of the operation."""


EXIT_CODES = {
    "ok": 0,
    "configuration": ConfigurationError.exit_code,
    "data": DataError.exit_code,
    "numerical": NumericalError.exit_code,
}
