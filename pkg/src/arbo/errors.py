"""Exception hierarchy.

Errors split into two families that the CLI maps onto exit codes:
``InputError`` (and subclasses) covers malformed inputs and usage problems
(exit 2); ``DomainError`` covers well-formed inputs that fail a domain
contract, such as an invalid structure matrix (exit 1).
"""


class ArboError(Exception):
    """Base class for all library errors."""


class InputError(ArboError):
    """Malformed or schema-incompatible input (wrong shape, bad cell, unknown feature)."""


class ConfigError(InputError):
    """Bad configuration value (unknown activation, non-positive temperature, ...)."""


class MalformedDocumentError(InputError):
    """Document is not parseable JSON or misses required fields."""


class UnknownVersionError(InputError):
    """Document declares a format version this library does not read."""


class DatasetError(InputError):
    """CSV dataset problem; carries the offending row index when applicable."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DomainError(ArboError):
    """Valid input that violates a domain contract."""


class DegenerateTreeError(DomainError):
    """Tree has no internal nodes, so there is no matrix form to compile."""


class InvalidStructureError(DomainError):
    """A 0/1 matrix that is not the structure matrix of any binary tree.

    Carries the :class:`~arbo.structure.ValidationReport` that rejected it.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class UnsupportedFormError(DomainError):
    """Model cannot be expressed in the requested form (e.g. categorical tests in sum-product)."""


class BackendMismatchError(DomainError):
    """Two evaluation backends disagreed where they are required to agree."""
